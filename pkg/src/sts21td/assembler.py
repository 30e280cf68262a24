"""Assembly of STS(21) around a fixed TD(3,6) and their subdesign census.

The 21 points are split into seven 3-sets (the frame).  ``A001`` is the
stem, and the petals are ``A010+A011``, ``A100+A101`` and ``A110+A111``.
Every STS(21) containing a given TD on the petals is the TD plus three parts
on ``petal + stem``: one STS(9) and two almost-STS(9) missing the stem.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import multiprocessing as mp
import os
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from .canonical import canonical_batch, certificate_from_compact, certificate_hash, decode_compact
from .catalog import Sts9Family, align_representative, subtd33_structure
from .core import (
    AlmostSts9,
    TransversalDesign,
    Triple,
    TripleSystem,
    format_design,
    mask_of,
    parse_design,
    points_of,
    validate_sts,
)

V = 21


@dataclass(frozen=True)
class Frame:
    sets: dict

    @property
    def stem(self) -> tuple[int, ...]:
        return self.sets["001"]

    @property
    def petals(self) -> tuple[tuple[int, ...], ...]:
        s = self.sets
        return (s["010"] + s["011"], s["100"] + s["101"], s["110"] + s["111"])

    def halves(self, petal: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        keys = (("010", "011"), ("100", "101"), ("110", "111"))[petal]
        return self.sets[keys[0]], self.sets[keys[1]]

    def part_support(self, petal: int) -> tuple[int, ...]:
        return tuple(sorted(self.stem + self.petals[petal]))

    def fano_lines(self) -> list[frozenset[str]]:
        """Triples of frame labels whose XOR is zero: the lines of a Fano plane."""
        keys = sorted(self.sets)
        return [
            frozenset(t)
            for t in itertools.combinations(keys, 3)
            if int(t[0], 2) ^ int(t[1], 2) ^ int(t[2], 2) == 0
        ]


FRAME = Frame(
    {
        "001": (0, 1, 2),
        "010": (3, 4, 5),
        "011": (6, 7, 8),
        "100": (9, 10, 11),
        "101": (12, 13, 14),
        "110": (15, 16, 17),
        "111": (18, 19, 20),
    }
)


@dataclass(frozen=True)
class Flower:
    stem: Triple
    petals: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
    # petals whose union with the stem carries a full sub-STS(9)
    sts_petals: tuple[int, ...]
    stem_is_block: bool

    @property
    def sts_petal(self) -> int:
        return self.sts_petals[0]

    def supports(self) -> list[frozenset[int]]:
        return [frozenset(self.stem.points + p) for p in self.petals]


# --------------------------------------------------------------------------
# compiled census kernels


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _petal_closed(third, pmask, smask, n):
    for x in range(n):
        if not (pmask >> x) & 1:
            continue
        for y in range(n):
            if y == x or not (smask >> y) & 1:
                continue
            t = third[x, y]
            if t < 0 or not (smask >> t) & 1:
                return False
    return True


@njit(cache=True)
def _stem_flowers(third, d0, d1, d2, out, nout):
    """Append the flowers with stem {d0, d1, d2} to ``out``; returns the grown buffer and count."""
    n = third.shape[0]
    parent = np.empty(n, np.int64)
    compmask = np.zeros(n, np.int64)
    compsize = np.zeros(n, np.int64)
    assign = np.zeros(n, np.int64)
    psize = np.zeros(3, np.int64)
    pmask = np.zeros(3, np.int64)
    dm = (1 << d0) | (1 << d1) | (1 << d2)
    for x in range(n):
        parent[x] = x
    for x in range(n):
        if (dm >> x) & 1:
            continue
        for d in (d0, d1, d2):
            y = third[x, d]
            if y < 0 or (dm >> y) & 1:
                continue
            rx = _find(parent, x)
            ry = _find(parent, y)
            if rx != ry:
                if rx < ry:
                    parent[ry] = rx
                else:
                    parent[rx] = ry
    for x in range(n):
        if (dm >> x) & 1:
            continue
        r = _find(parent, x)
        compsize[r] += 1
        compmask[r] |= 1 << x
        if compsize[r] > 6:
            return out, nout
    # components in order of their least point
    k = 0
    cm = np.zeros(n, np.int64)
    cs = np.zeros(n, np.int64)
    for x in range(n):
        if compsize[x] > 0 and _find(parent, x) == x:
            cm[k] = compmask[x]
            cs[k] = compsize[x]
            k += 1
    block = third[d0, d1] == d2
    t01 = third[d0, d1]
    t02 = third[d0, d2]
    t12 = third[d1, d2]
    for i in range(k):
        assign[i] = -1
    i = 0
    while i >= 0:
        if assign[i] >= 0:
            psize[assign[i]] -= cs[i]
        a = assign[i] + 1
        lim = 0
        for j in range(i):
            if assign[j] + 1 > lim:
                lim = assign[j] + 1
        if lim > 2:
            lim = 2
        while a <= lim and psize[a] + cs[i] > 6:
            a += 1
        if a > lim:
            assign[i] = -1
            i -= 1
            continue
        assign[i] = a
        psize[a] += cs[i]
        if i < k - 1:
            i += 1
            continue
        if psize[0] != 6 or psize[1] != 6 or psize[2] != 6:
            continue
        pmask[:] = 0
        for j in range(k):
            pmask[assign[j]] |= cm[j]
        ok = True
        for p in range(3):
            if not _petal_closed(third, pmask[p], pmask[p] | dm, n):
                ok = False
                break
        if not ok:
            continue
        flags = 0
        if block:
            flags = 7
        else:
            for p in range(3):
                inside = (((pmask[p] >> t01) & 1) + ((pmask[p] >> t02) & 1)
                          + ((pmask[p] >> t12) & 1))
                if inside == 3:
                    flags |= 1 << p
                elif inside != 0:
                    ok = False
            if flags == 0:
                ok = False
        if not ok:
            continue
        if nout == out.shape[0]:
            bigger = np.zeros((2 * nout, 7), np.int64)
            bigger[:nout] = out
            out = bigger
        out[nout, 0] = d0
        out[nout, 1] = d1
        out[nout, 2] = d2
        out[nout, 3] = pmask[0]
        out[nout, 4] = pmask[1]
        out[nout, 5] = pmask[2]
        out[nout, 6] = flags
        nout += 1
    return out, nout


@njit(cache=True)
def _flowers_exhaustive(third):
    """Rows ``(d0, d1, d2, petal0, petal1, petal2, sts_flags)`` over all stems."""
    n = third.shape[0]
    out = np.zeros((64, 7), np.int64)
    nout = 0
    for d0 in range(n):
        for d1 in range(d0 + 1, n):
            for d2 in range(d1 + 1, n):
                out, nout = _stem_flowers(third, d0, d1, d2, out, nout)
    return out[:nout]


@njit(cache=True)
def _flowers_kernel(third, blocks):
    """Same rows as ``_flowers_exhaustive``, trying only stems inside a sub-STS(9).

    Some petal of every flower carries an STS(9) containing the stem, so the
    stems are 3-subsets of sub-STS(9) supports.
    """
    n = third.shape[0]
    subs = _sub_sts9_kernel(third, blocks)
    seen = np.zeros(len(subs) * 84, np.int64)
    ns = 0
    out = np.zeros((64, 7), np.int64)
    nout = 0
    pts = np.zeros(9, np.int64)
    for s in subs:
        k = 0
        for x in range(n):
            if (s >> x) & 1:
                pts[k] = x
                k += 1
        for i in range(9):
            for j in range(i + 1, 9):
                for l in range(j + 1, 9):
                    dm = (1 << pts[i]) | (1 << pts[j]) | (1 << pts[l])
                    dup = False
                    for q in range(ns):
                        if seen[q] == dm:
                            dup = True
                            break
                    if dup:
                        continue
                    seen[ns] = dm
                    ns += 1
                    out, nout = _stem_flowers(third, pts[i], pts[j], pts[l], out, nout)
    # stem-major order, as in the exhaustive scan
    order = np.argsort(out[:nout, 0] * n * n + out[:nout, 1] * n + out[:nout, 2], kind="mergesort")
    return out[:nout][order]


@njit(cache=True)
def _count_flowers_batch(thirds, blocks):
    out = np.zeros(thirds.shape[0], np.int64)
    for i in range(thirds.shape[0]):
        out[i] = _flowers_kernel(thirds[i], blocks[i]).shape[0]
    return out


@njit(cache=True)
def _closure_limited(third, mask, n, limit):
    """Closure of a point set under taking thirds; -1 once it exceeds ``limit`` points."""
    pts = np.zeros(n, np.int64)
    k = 0
    for x in range(n):
        if (mask >> x) & 1:
            pts[k] = x
            k += 1
    i = 1
    while i < k:
        x = pts[i]
        for j in range(i):
            t = third[x, pts[j]]
            if t >= 0 and not (mask >> t) & 1:
                if k == limit:
                    return -1
                mask |= 1 << t
                pts[k] = t
                k += 1
        i += 1
    return mask


@njit(cache=True)
def _sub_sts9_kernel(third, blocks):
    """Supports of the sub-STS(9), each grown from a pair of disjoint blocks.

    Two disjoint lines of an AG(2,3) are parallel and the thirds of one point
    of the first with the second form the remaining parallel line, so most
    pairs are rejected after three lookups.
    """
    n = third.shape[0]
    m = blocks.shape[0]
    bm = np.zeros(m, np.int64)
    for i in range(m):
        bm[i] = (1 << blocks[i, 0]) | (1 << blocks[i, 1]) | (1 << blocks[i, 2])
    found = np.zeros(m * m, np.int64)
    k = 0
    for i in range(m):
        x = blocks[i, 0]
        for j in range(i + 1, m):
            if bm[i] & bm[j]:
                continue
            t0 = third[x, blocks[j, 0]]
            t1 = third[x, blocks[j, 1]]
            t2 = third[x, blocks[j, 2]]
            if t0 < 0 or t1 < 0 or t2 < 0 or third[t0, t1] != t2:
                continue
            s = bm[i] | bm[j] | (1 << t0) | (1 << t1) | (1 << t2)
            if _closure_limited(third, s, n, 9) == s:
                found[k] = s
                k += 1
    return np.unique(found[:k])


@njit(cache=True)
def _two_block_masks(third, pmask, n):
    """First-block masks of the ways to split a 6-set into two blocks."""
    pts = np.zeros(6, np.int64)
    k = 0
    for x in range(n):
        if (pmask >> x) & 1:
            pts[k] = x
            k += 1
    out = np.zeros(10, np.int64)
    m = 0
    x = pts[0]
    for i in range(1, 6):
        for j in range(i + 1, 6):
            if third[x, pts[i]] != pts[j]:
                continue
            b0 = (1 << x) | (1 << pts[i]) | (1 << pts[j])
            b1 = pmask ^ b0
            ys = np.zeros(3, np.int64)
            q = 0
            for y in range(n):
                if (b1 >> y) & 1:
                    ys[q] = y
                    q += 1
            if third[ys[0], ys[1]] == ys[2]:
                out[m] = b0
                m += 1
    return out[:m]


@njit(cache=True)
def _lands_in(third, hmask, kmask, r0, r1, n):
    land = 0
    for x in range(n):
        if not (hmask >> x) & 1:
            continue
        for y in range(n):
            if (kmask >> y) & 1:
                t = third[x, y]
                if t < 0:
                    return False
                land |= 1 << t
    return land == r0 or land == r1


@njit(cache=True)
def _predict_kernel(third, petals):
    n = third.shape[0]
    count = 0
    pts = np.zeros(6, np.int64)
    for ip in range(3):
        pm = petals[ip]
        qm = petals[(ip + 1) % 3]
        rm = petals[(ip + 2) % 3]
        sq = _two_block_masks(third, qm, n)
        sr = _two_block_masks(third, rm, n)
        if len(sq) == 0 or len(sr) == 0:
            continue
        k = 0
        for x in range(n):
            if (pm >> x) & 1:
                pts[k] = x
                k += 1
        for a in range(6):
            for b in range(a + 1, 6):
                for c in range(b + 1, 6):
                    dp = (1 << pts[a]) | (1 << pts[b]) | (1 << pts[c])
                    rest = pm ^ dp
                    hit = False
                    for q0 in sq:
                        q1 = qm ^ q0
                        for r0 in sr:
                            r1 = rm ^ r0
                            if (_lands_in(third, dp, q0, r0, r1, n) and _lands_in(third, dp, q1, r0, r1, n)
                                    and _lands_in(third, rest, q0, r0, r1, n)
                                    and _lands_in(third, rest, q1, r0, r1, n)):
                                hit = True
                                break
                        if hit:
                            break
                    if hit:
                        count += 1
    return 1 + count


@njit(cache=True)
def _predict_batch(thirds, petals):
    out = np.zeros(thirds.shape[0], np.int64)
    for i in range(thirds.shape[0]):
        out[i] = _predict_kernel(thirds[i], petals)
    return out


# --------------------------------------------------------------------------
# census


def _require_sts21(sts: TripleSystem) -> None:
    if sts.v != V or not sts.is_sts:
        raise ValueError("expected a valid STS(21)")


def find_flowers(sts: TripleSystem) -> list[Flower]:
    """Every flower of an STS(21), found by trying all 1330 stems.

    For a stem D the 18 other points are joined whenever one is the third
    point of the block through the other and a stem point; petals are unions
    of these components, and each grouping into three 6-sets is checked
    against the flower definition.
    """
    _require_sts21(sts)
    rows = _flowers_exhaustive(np.ascontiguousarray(sts.third))
    out = []
    for d0, d1, d2, p0, p1, p2, flags in rows:
        petals = tuple(points_of(int(p)) for p in (p0, p1, p2))
        out.append(Flower(Triple(int(d0), int(d1), int(d2)), petals,
                          tuple(i for i in range(3) if flags >> i & 1), bool(flags == 7)))
    return out


def count_sub_sts9(sts: TripleSystem) -> tuple[int, list[tuple[int, ...]]]:
    """Number and supports of the sub-STS(9), from closures of disjoint block pairs."""
    _require_sts21(sts)
    masks = _sub_sts9_kernel(np.ascontiguousarray(sts.third), np.ascontiguousarray(sts.array))
    sups = sorted(points_of(int(m)) for m in masks)
    return len(sups), sups


def flower_td(sts: TripleSystem, flower: Flower) -> TransversalDesign:
    """The sub-TD(3,6) whose groups are the petals of ``flower``."""
    owner = {}
    for i, p in enumerate(flower.petals):
        for x in p:
            owner[x] = i
    blocks = [t for t in sts.blocks if sorted(owner.get(x, -1) for x in t.points) == [0, 1, 2]]
    return TransversalDesign(flower.petals, blocks)


def predict_tau(sts: TripleSystem, flower: Flower, td: TransversalDesign | None = None) -> int:
    """Number of sub-TD(3,6) predicted from one flower.

    Every further sub-TD has its stem inside a petal P.  A 3-subset D' of P is
    such a stem exactly when the other two petals are unions of two disjoint
    blocks each and the flower's TD splits into four sub-TD(3,3) along D',
    P - D' and those blocks.  The prediction is one plus the number of such
    D'; if the structure lemmas hold it is 1, 3 or 7.
    """
    _require_sts21(sts)
    if td is not None:
        if set(map(frozenset, td.groups)) != set(map(frozenset, flower.petals)) or not set(td.blocks) <= sts.block_set:
            raise ValueError("td is not the sub-TD of this flower")
    petals = np.array([mask_of(p) for p in flower.petals], dtype=np.int64)
    return int(_predict_kernel(np.ascontiguousarray(sts.third), petals))


# --------------------------------------------------------------------------
# assembly


def _classify_part(blocks: Sequence[Triple], support: Sequence[int], stem: Triple) -> str:
    """'full' (STS(9) with the stem), 'rest' (STS(9) without it) or 'almost'."""
    sup = sorted(support)
    relab = {x: i for i, x in enumerate(sup)}
    bl = [Triple.of(*t) for t in blocks]
    if any(x not in relab for t in bl for x in t.points):
        raise ValueError(f"part has points outside {sup}")
    loc = lambda ts: TripleSystem(9, [[relab[x] for x in t] for t in ts])  # noqa: E731
    if len(bl) == 12 and validate_sts(loc(bl)).ok:
        return "full" if stem in bl else "rest"
    if len(bl) == 11 and stem not in bl and validate_sts(loc(bl + [stem])).ok:
        return "almost"
    raise ValueError("part is neither an STS(9) nor an almost-STS(9) missing the stem")


PATTERNS = (("full", "almost", "almost"), ("rest", "almost", "almost"),
            ("almost", "rest", "almost"), ("almost", "almost", "rest"))


def _part_blocks(part) -> tuple[Triple, ...]:
    if isinstance(part, (TripleSystem, AlmostSts9)):
        return part.blocks
    return tuple(Triple.of(*t) for t in part)


def assemble(td: TransversalDesign, part_a, part_b, part_c, frame: Frame = FRAME) -> TripleSystem:
    """Union of a petal TD with the three stem parts, checked against the four patterns."""
    stem = Triple.of(*frame.stem)
    parts = [_part_blocks(p) for p in (part_a, part_b, part_c)]
    kinds = tuple(_classify_part(p, frame.part_support(i), stem) for i, p in enumerate(parts))
    if kinds not in PATTERNS:
        raise ValueError(f"parts {kinds} match none of the four membership patterns")
    if tuple(map(tuple, td.groups)) != tuple(tuple(sorted(p)) for p in frame.petals):
        raise ValueError("td must live on the frame petals")
    sts = TripleSystem(V, [*td.blocks, *parts[0], *parts[1], *parts[2]])
    rep = validate_sts(sts)
    if not rep.ok:
        raise ValueError(f"assembled system is not an STS(21): {rep}")
    return sts


MODES = ("full", "tau_ge_3", "tau_eq_7")


def _table(blocks: Sequence[Triple]) -> np.ndarray:
    """(21, 21) int8 table holding third+1 on the pairs the blocks cover."""
    t = np.zeros((V, V), np.int8)
    for a, b, c in blocks:
        t[a, b] = t[b, a] = c + 1
        t[a, c] = t[c, a] = b + 1
        t[b, c] = t[c, b] = a + 1
    return t


class PartList:
    """One family of parts (e.g. A-prime) with tables, blocks and condition flags."""

    def __init__(self, members: Sequence[Sequence[Triple]], halves: tuple[tuple[int, ...], ...], stem: Triple):
        self.blocks = [tuple(m) for m in members]
        self.tables = np.stack([_table(m) for m in self.blocks]) if self.blocks else np.zeros((0, V, V), np.int8)
        self.arrays = np.array([list(m) for m in self.blocks], dtype=np.int64) if self.blocks else None
        h0, h1 = Triple.of(*halves[0]), Triple.of(*halves[1])
        # the part, completed by the stem, contains both half-petals as blocks
        self.cond = np.array([h0 in m and h1 in m and (stem in m or len(m) == 11) for m in self.blocks], dtype=bool)

    def __len__(self) -> int:
        return len(self.blocks)


class AssemblyContext:
    """Precomputed parts for one aligned TD representative."""

    def __init__(self, td: TransversalDesign, families: Sequence[Sts9Family] | None = None, frame: Frame = FRAME):
        self.td = td
        self.frame = frame
        stem = Triple.of(*frame.stem)
        self.stem = stem
        if families is None:
            families = default_families(frame)
        self.splits = len(subtd33_structure(td)) > 0
        self.td_table = _table(td.blocks)
        self.td_array = np.array(td.blocks, dtype=np.int64)
        self.lists = []
        for i, fam in enumerate(families):
            halves = frame.halves(i)
            primed = fam.with_block(stem)
            rest = fam.without_block(stem)
            star = [tuple(b for b in s.blocks if b != stem) for s in primed]
            self.lists.append({
                "full": PartList([s.blocks for s in primed], halves, stem),
                "rest": PartList([s.blocks for s in rest], halves, stem),
                "almost": PartList(star, halves, stem),
            })

    def pattern_lists(self, pattern: int) -> list[PartList]:
        return [self.lists[i][kind] for i, kind in enumerate(PATTERNS[pattern])]

    def units(self, mode: str) -> list[tuple[int, int]]:
        """Work units ``(pattern, a_index)`` with a nonempty candidate set."""
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        out = []
        for p in range(4):
            la, lb, lc = self.pattern_lists(p)
            for a in range(len(la)):
                if self.unit_size(mode, p, a):
                    out.append((p, a))
        return out

    def unit_pairs(self, mode: str, pattern: int, a: int) -> np.ndarray:
        """``(k, 2)`` array of (b, c) indices completing part ``a``, in catalog order."""
        la, lb, lc = self.pattern_lists(pattern)
        nb, nc = len(lb), len(lc)
        if mode == "full":
            bb, cc = np.meshgrid(np.arange(nb), np.arange(nc), indexing="ij")
            return np.stack([bb.ravel(), cc.ravel()], axis=1)
        if not self.splits:
            return np.zeros((0, 2), np.int64)
        need = 3 if mode == "tau_eq_7" else 2
        score = la.cond[a] + lb.cond[:, None].astype(int) + lc.cond[None, :].astype(int)
        bb, cc = np.nonzero(score >= need)
        return np.stack([bb, cc], axis=1)

    def unit_size(self, mode: str, pattern: int, a: int) -> int:
        return len(self.unit_pairs(mode, pattern, a))

    def count(self, mode: str) -> int:
        return sum(self.unit_size(mode, p, a) for p, a in self.units(mode))

    def batch(self, pattern: int, a: int, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Third-point tables ``(k, 21, 21)`` and block arrays ``(k, 70, 3)``."""
        la, lb, lc = self.pattern_lists(pattern)
        b_idx, c_idx = pairs[:, 0], pairs[:, 1]
        t = (self.td_table.astype(np.int64) + la.tables[a] + lb.tables[b_idx] + lc.tables[c_idx]) - 1
        idx = np.arange(V)
        t[:, idx, idx] = idx
        k = len(pairs)
        blocks = np.concatenate([
            np.broadcast_to(self.td_array, (k, *self.td_array.shape)),
            np.broadcast_to(la.arrays[a], (k, *la.arrays[a].shape)),
            lb.arrays[b_idx],
            lc.arrays[c_idx],
        ], axis=1)
        return np.ascontiguousarray(t), np.ascontiguousarray(blocks)

    def conditions(self, pattern: int, a: int, pairs: np.ndarray) -> np.ndarray:
        la, lb, lc = self.pattern_lists(pattern)
        return la.cond[a] + lb.cond[pairs[:, 0]].astype(int) + lc.cond[pairs[:, 1]].astype(int)

    def system(self, pattern: int, a: int, b: int, c: int) -> TripleSystem:
        la, lb, lc = self.pattern_lists(pattern)
        return TripleSystem(V, [*self.td.blocks, *la.blocks[a], *lb.blocks[b], *lc.blocks[c]])

    @cached_property
    def base_flower(self) -> Flower:
        stem = self.stem
        petals = tuple(tuple(sorted(p)) for p in self.frame.petals)
        return Flower(stem, petals, (0,), True)


_FAMILY_CACHE: dict = {}


def default_families(frame: Frame = FRAME) -> list[Sts9Family]:
    key = tuple(sorted(frame.sets.items()))
    if key not in _FAMILY_CACHE:
        base = Sts9Family.build(range(9))
        _FAMILY_CACHE[key] = [base.relabeled(frame.part_support(i)) for i in range(3)]
    return _FAMILY_CACHE[key]


def candidate_stream(td_rep: TransversalDesign, mode: str = "full") -> Iterator[TripleSystem]:
    """Every STS(21) assembled around ``td_rep`` selected by ``mode``.

    ``full``: all 120**3 + 3*720*120**2 combinations of the four patterns.
    ``tau_ge_3`` / ``tau_eq_7``: only when ``td_rep`` splits into sub-TD(3,3),
    keeping combinations where at least two / all three parts contain the
    two half-petals of their petal as blocks.
    """
    ctx = AssemblyContext(td_rep)
    for p, a in ctx.units(mode):
        for b, c in ctx.unit_pairs(mode, p, a):
            yield ctx.system(p, a, int(b), int(c))


def aligned_variants(td: TransversalDesign, mode: str) -> list[TransversalDesign]:
    """Aligned copies of a representative used by ``mode``.

    The full mode needs one copy; the tau modes need one per partition into
    sub-TD(3,3), since a second sub-TD(3,6) may come from any of them.
    """
    parts = subtd33_structure(td)
    if mode == "full":
        return [align_representative(td)]
    return [align_representative(td, partition=i) for i in range(len(parts))]


# --------------------------------------------------------------------------
# classification pipeline


@dataclass(frozen=True)
class ClassificationRecord:
    cert_hash: str
    tau6: int
    sigma9: int
    aut_order: int
    resolvable: bool | None
    blocks: tuple[Triple, ...]

    def system(self) -> TripleSystem:
        return TripleSystem(V, self.blocks)

    def to_json(self) -> str:
        return json.dumps({
            "cert_hash": self.cert_hash,
            "tau6": self.tau6,
            "sigma9": self.sigma9,
            "aut_order": self.aut_order,
            "resolvable": self.resolvable,
            "blocks": format_design(self.system()),
        })

    @classmethod
    def from_json(cls, line: str) -> "ClassificationRecord":
        d = json.loads(line)
        ts = parse_design(d["blocks"])
        return cls(d["cert_hash"], int(d["tau6"]), int(d["sigma9"]), int(d["aut_order"]),
                   d.get("resolvable"), ts.blocks)


def write_records(path: str | os.PathLike, records: Sequence[ClassificationRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path: str | os.PathLike) -> list[ClassificationRecord]:
    with open(path) as fh:
        return [ClassificationRecord.from_json(ln) for ln in fh if ln.strip()]


class CheckpointError(RuntimeError):
    """The checkpoint directory is inconsistent with itself or with the run."""


class PipelineInterrupted(RuntimeError):
    """Raised after ``max_units`` work units; the checkpoint holds the progress."""


@dataclass
class PipelineStats:
    candidates: int = 0
    units: int = 0
    lemma_checked: int = 0
    # (variant, pattern, a, b, c, flower count, predicted tau)
    lemma_failures: list = field(default_factory=list)
    # candidates whose flower count is below what the mode selects for
    stratum_failures: list = field(default_factory=list)
    tau_histogram: dict = field(default_factory=dict)


@dataclass
class PipelineResult:
    records: list[ClassificationRecord]
    stats: PipelineStats
    # wall-clock seconds of this call (a resumed run counts only its own part)
    elapsed: float = 0.0


BATCH = 4096
CERT_BYTES = 2 * 70
ENTRY_BYTES = CERT_BYTES + 8
MODE_MIN_TAU = {"full": 1, "tau_ge_3": 3, "tau_eq_7": 7}

_WORKER: dict = {}


def _worker_init(variant_tds: list[TransversalDesign], mode: str, check: bool) -> None:
    _WORKER.clear()
    _WORKER.update(tds=variant_tds, mode=mode, check=check, ctx={})


def _worker_ctx(vi: int) -> AssemblyContext:
    ctx = _WORKER["ctx"]
    if vi not in ctx:
        ctx.clear()
        ctx[vi] = AssemblyContext(_WORKER["tds"][vi])
    return ctx[vi]


def _run_unit(unit: tuple[int, int, int]):
    vi, p, a = unit
    mode, check = _WORKER["mode"], _WORKER["check"]
    ctx = _worker_ctx(vi)
    pairs = ctx.unit_pairs(mode, p, a)
    petals = np.array([mask_of(x) for x in ctx.frame.petals], dtype=np.int64)
    need = MODE_MIN_TAU[mode]
    certs: dict[bytes, int] = {}
    lemma_bad, stratum_bad = [], []
    hist: dict[int, int] = {}
    for lo in range(0, len(pairs), BATCH):
        chunk = pairs[lo:lo + BATCH]
        th, bl = ctx.batch(p, a, chunk)
        for cert, aut in canonical_batch(th, bl):
            certs.setdefault(cert, aut)
        if check:
            fl = _count_flowers_batch(th, bl)
            pr = _predict_batch(th, petals)
            for i in np.nonzero(fl != pr)[0]:
                lemma_bad.append((vi, p, a, int(chunk[i, 0]), int(chunk[i, 1]), int(fl[i]), int(pr[i])))
            for i in np.nonzero(fl < need)[0]:
                stratum_bad.append((vi, p, a, int(chunk[i, 0]), int(chunk[i, 1]), int(fl[i])))
            for t, c in zip(*np.unique(fl, return_counts=True)):
                hist[int(t)] = hist.get(int(t), 0) + int(c)
    return unit, len(pairs), list(certs.items()), lemma_bad, stratum_bad, hist


def _classify_cert(args) -> ClassificationRecord:
    cert, aut, resolve = args
    from .analysis import is_resolvable

    sts = decode_compact(cert, V)
    tau6 = len(find_flowers(sts))
    sigma9, _ = count_sub_sts9(sts)
    res = is_resolvable(sts)[0] if resolve else None
    return ClassificationRecord(certificate_hash(certificate_from_compact(cert, V)), tau6, sigma9, aut, res, sts.blocks)


class _Checkpoint:
    """Append-only class store plus a JSON state file, written atomically."""

    def __init__(self, root: Path, mode: str, n_units: int, resolve: bool):
        self.root = root
        self.state_path = root / "state.json"
        self.store_path = root / "store.bin"
        self.rec_path = root / "records.partial.jsonl"
        self.mode, self.n_units, self.resolve = mode, n_units, resolve
        self.hasher = hashlib.sha256()
        self.written = 0
        self.pending: list[bytes] = []

    def load(self) -> tuple[dict, dict[bytes, int], list[str]]:
        """Resume state: (state, store, record lines); empty when no checkpoint exists."""
        self.root.mkdir(parents=True, exist_ok=True)
        if not self.state_path.exists():
            for p in (self.store_path, self.rec_path):
                if p.exists():
                    p.unlink()
            return {"units_done": 0, "candidates": 0, "records_done": 0}, {}, []
        try:
            state = json.loads(self.state_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable state file: {exc}") from exc
        for key, want in (("mode", self.mode), ("units_total", self.n_units), ("resolve", self.resolve)):
            if state.get(key) != want:
                raise CheckpointError(f"checkpoint {key}={state.get(key)!r} does not match this run ({want!r})")
        size = state["store_bytes"]
        data = self.store_path.read_bytes() if self.store_path.exists() else b""
        if len(data) < size or size % ENTRY_BYTES:
            raise CheckpointError("class store is shorter than the checkpoint says")
        data = data[:size]
        self.hasher.update(data)
        if self.hasher.hexdigest() != state["store_sha256"]:
            raise CheckpointError("class store checksum mismatch")
        with open(self.store_path, "r+b") as fh:
            fh.truncate(size)
        self.written = size
        store = {}
        for off in range(0, size, ENTRY_BYTES):
            store[data[off:off + CERT_BYTES]] = int.from_bytes(data[off + CERT_BYTES:off + ENTRY_BYTES], "big")
        lines: list[str] = []
        if state.get("records_done", 0):
            lines = self.rec_path.read_text().splitlines()[:state["records_done"]]
            if len(lines) != state["records_done"]:
                raise CheckpointError("partial record file is shorter than the checkpoint says")
            with open(self.rec_path, "w") as fh:
                fh.writelines(ln + "\n" for ln in lines)
        return state, store, lines

    def add(self, cert: bytes, aut: int) -> None:
        self.pending.append(cert + aut.to_bytes(8, "big"))

    def save(self, state: dict) -> None:
        blob = b"".join(self.pending)
        self.pending.clear()
        with open(self.store_path, "ab") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        self.hasher.update(blob)
        self.written += len(blob)
        state = dict(state, mode=self.mode, units_total=self.n_units, resolve=self.resolve,
                     store_bytes=self.written, store_sha256=self.hasher.hexdigest(), version=1)
        tmp = self.state_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state, sort_keys=True))
        os.replace(tmp, self.state_path)

    def append_records(self, lines: Sequence[str]) -> None:
        with open(self.rec_path, "a") as fh:
            fh.writelines(ln + "\n" for ln in lines)
            fh.flush()
            os.fsync(fh.fileno())


def pipeline_variants(catalog=None, mode: str = "full") -> list[tuple[int, int, TransversalDesign]]:
    """(representative index, partition index, aligned TD) processed by ``mode``."""
    from .catalog import enumerate_td36_main_classes

    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    catalog = catalog or enumerate_td36_main_classes()
    out = []
    for ri, td in enumerate(catalog.representatives):
        for pi, al in enumerate(aligned_variants(td, mode)):
            out.append((ri, pi, al))
    return out


def run_pipeline(
    mode: str = "tau_eq_7",
    thread_count: int = 1,
    checkpoint_dir: str | os.PathLike | None = None,
    check_lemmas: bool = False,
    resolve: bool = True,
    catalog=None,
    checkpoint_every: int = 1_000_000,
    max_units: int | None = None,
    progress=None,
) -> PipelineResult:
    """Stream, canonicalize and classify every candidate of ``mode``.

    Work units ``(variant, pattern, a_index)`` are processed in a fixed order
    and merged in that order, so the class store and the sorted output do
    not depend on ``thread_count``.  With ``checkpoint_dir`` the store and
    the unit count are persisted at least every ``checkpoint_every``
    candidates and an interrupted run resumes where it stopped.
    """
    if thread_count < 1:
        raise ValueError("thread_count must be at least 1")
    say = progress or (lambda msg: None)
    start = time.perf_counter()
    variants = pipeline_variants(catalog, mode)
    tds = [v[2] for v in variants]
    units: list[tuple[int, int, int]] = []
    for vi, td in enumerate(tds):
        ctx = AssemblyContext(td)
        units.extend((vi, p, a) for p, a in ctx.units(mode))
    say(f"{mode}: {len(variants)} aligned representatives, {len(units)} work units")

    ck = _Checkpoint(Path(checkpoint_dir), mode, len(units), resolve) if checkpoint_dir else None
    state, store, rec_lines = ck.load() if ck else ({"units_done": 0, "candidates": 0, "records_done": 0}, {}, [])
    stats = PipelineStats(candidates=state["candidates"], units=state["units_done"])
    stats.lemma_failures = [tuple(x) for x in state.get("lemma_failures", [])]
    stats.stratum_failures = [tuple(x) for x in state.get("stratum_failures", [])]
    stats.tau_histogram = {int(k): v for k, v in state.get("tau_histogram", {}).items()}
    stats.lemma_checked = state.get("lemma_checked", 0)
    if state["units_done"]:
        say(f"resuming at unit {state['units_done']} with {len(store)} classes")

    def snapshot(**extra) -> dict:
        return dict(units_done=stats.units, candidates=stats.candidates, lemma_checked=stats.lemma_checked,
                    lemma_failures=stats.lemma_failures, stratum_failures=stats.stratum_failures,
                    tau_histogram={str(k): v for k, v in stats.tau_histogram.items()},
                    records_done=len(rec_lines), **extra)

    todo = units[state["units_done"]:]
    if max_units is not None:
        todo = todo[:max_units]
    since = 0
    pool = mp.get_context("fork").Pool(thread_count, _worker_init, (tds, mode, check_lemmas)) if thread_count > 1 else None
    try:
        if pool is None:
            _worker_init(tds, mode, check_lemmas)
            results = map(_run_unit, todo)
        else:
            results = pool.imap(_run_unit, todo, chunksize=1)
        for unit, n, certs, lemma_bad, stratum_bad, hist in results:
            for cert, aut in certs:
                old = store.get(cert)
                if old is None:
                    store[cert] = aut
                    if ck:
                        ck.add(cert, aut)
                elif old != aut:
                    raise AssertionError(f"class {certificate_hash(cert)} seen with |Aut| {old} and {aut}")
            stats.units += 1
            stats.candidates += n
            since += n
            if check_lemmas:
                stats.lemma_checked += n
            stats.lemma_failures.extend(lemma_bad)
            stats.stratum_failures.extend(stratum_bad)
            for t, c in hist.items():
                stats.tau_histogram[t] = stats.tau_histogram.get(t, 0) + c
            if ck and since >= checkpoint_every:
                ck.save(snapshot())
                since = 0
                say(f"unit {stats.units}/{len(units)}: {stats.candidates} candidates, {len(store)} classes")
        if ck:
            ck.save(snapshot())
        if stats.units < len(units):
            raise PipelineInterrupted(f"stopped after {stats.units} of {len(units)} units")
        say(f"{stats.candidates} candidates, {len(store)} classes; classifying")

        certs_sorted = sorted(store)
        done = len(rec_lines)
        step = 2000
        for lo in range(done, len(certs_sorted), step):
            jobs = [(c, store[c], resolve) for c in certs_sorted[lo:lo + step]]
            recs = pool.map(_classify_cert, jobs, chunksize=64) if pool else list(map(_classify_cert, jobs))
            lines = [r.to_json() for r in recs]
            rec_lines.extend(lines)
            if ck:
                ck.append_records(lines)
                ck.save(snapshot())
            say(f"classified {len(rec_lines)}/{len(certs_sorted)}")
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    records = [ClassificationRecord.from_json(ln) for ln in rec_lines]
    return PipelineResult(records, stats, time.perf_counter() - start)


def classify_pipeline(mode: str = "tau_eq_7", thread_count: int = 1, **kwargs) -> list[ClassificationRecord]:
    """Records of every isomorphism class in ``mode``, sorted by compact certificate."""
    return run_pipeline(mode, thread_count, **kwargs).records
