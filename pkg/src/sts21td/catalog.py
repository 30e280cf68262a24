"""Exhaustive building blocks: labeled STS(9) families and TD(3,6) main classes."""

from __future__ import annotations

import hashlib
import itertools
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .canonical import canonical_form
from .core import (
    AlmostSts9,
    LatinSquare,
    TransversalDesign,
    Triple,
    TripleSystem,
    format_design,
    latin_to_td,
    parse_designs,
    td_to_latin,
)

# --------------------------------------------------------------------------
# Steiner triple systems on a labeled support


def enumerate_sts(v: int, support: Sequence[int] | None = None) -> list[TripleSystem]:
    """All STS on a labeled point set, extending the smallest uncovered pair first.

    The resulting systems live on ``max(support) + 1`` points (``v`` when no
    support is given) and come out sorted by block list.
    """
    pts = sorted(support) if support is not None else list(range(v))
    n = len(pts)
    if n != v:
        raise ValueError(f"support must have {v} points, got {n}")
    if n % 6 not in (1, 3):
        return []
    full = (1 << n) - 1
    # covered[x]: bitmask of local points already sharing a block with x
    covered = [1 << x for x in range(n)]
    chosen: list[tuple[int, int, int]] = []
    found: list[list[tuple[int, int, int]]] = []

    def rec() -> None:
        for x in range(n):
            free = full & ~covered[x]
            if free:
                break
        else:
            found.append(list(chosen))
            return
        y = (free & -free).bit_length() - 1
        cand = free & ~covered[y] & ~(1 << y)
        while cand:
            low = cand & -cand
            z = low.bit_length() - 1
            cand ^= low
            chosen.append((x, y, z))
            covered[x] |= (1 << y) | low
            covered[y] |= (1 << x) | low
            covered[z] |= (1 << x) | (1 << y)
            rec()
            covered[x] &= ~((1 << y) | low)
            covered[y] &= ~((1 << x) | low)
            covered[z] &= ~((1 << x) | (1 << y))
            chosen.pop()

    rec()
    size = pts[-1] + 1
    systems = [TripleSystem(size, [(pts[a], pts[b], pts[c]) for a, b, c in bl]) for bl in found]
    systems.sort(key=lambda s: s.blocks)
    return systems


def enumerate_sts9(support: Iterable[int]) -> list[TripleSystem]:
    sup = sorted(support)
    if len(sup) != 9 or len(set(sup)) != 9:
        raise ValueError("an STS(9) support has exactly 9 points")
    return enumerate_sts(9, sup)


def local_system(ts: TripleSystem, support: Sequence[int]) -> TripleSystem:
    """Relabel the support monotonically onto ``0..len(support)-1``."""
    relab = {x: i for i, x in enumerate(sorted(support))}
    return TripleSystem(len(relab), [[relab[x] for x in t] for t in ts.blocks])


def _check_disjoint(required: Sequence[Triple]) -> None:
    for s, t in itertools.combinations(required, 2):
        if s.mask & t.mask:
            raise ValueError(f"required triples {s} and {t} overlap")


def sts9_with_blocks(members: Sequence[TripleSystem], required: Iterable[Sequence[int]]) -> list[TripleSystem]:
    """Members containing every required (pairwise disjoint) triple as a block."""
    req = [Triple.of(*t) for t in required]
    if len(req) > 3:
        raise ValueError("at most 3 disjoint triples fit into 9 points")
    _check_disjoint(req)
    return [s for s in members if all(t in s.block_set for t in req)]


@dataclass
class Sts9Family:
    """All 840 STS(9) on one support, with the filtered subfamilies."""

    support: tuple[int, ...]
    all: list[TripleSystem] = field(repr=False)

    @classmethod
    def build(cls, support: Iterable[int]) -> "Sts9Family":
        sup = tuple(sorted(support))
        return cls(sup, enumerate_sts9(sup))

    def relabeled(self, support: Iterable[int]) -> "Sts9Family":
        """Same family carried onto another support by the monotone bijection."""
        sup = tuple(sorted(support))
        perm = list(range(max(max(sup), max(self.support)) + 1))
        for a, b in zip(self.support, sup):
            perm[a] = b
        size = sup[-1] + 1
        return Sts9Family(sup, [TripleSystem(size, [[perm[x] for x in t] for t in s.blocks]) for s in self.all])

    def with_block(self, d: Sequence[int]) -> list[TripleSystem]:
        return sts9_with_blocks(self.all, [d])

    def without_block(self, d: Sequence[int]) -> list[TripleSystem]:
        t = Triple.of(*d)
        return [s for s in self.all if t not in s.block_set]

    def with_blocks(self, *ds: Sequence[int]) -> list[TripleSystem]:
        return sts9_with_blocks(self.all, ds)

    def almost(self, d: Sequence[int]) -> list[AlmostSts9]:
        t = Triple.of(*d)
        return [AlmostSts9(self.support, [b for b in s.blocks if b != t], t) for s in self.with_block(t)]


# --------------------------------------------------------------------------
# latin squares


def reduced_latin_squares(n: int) -> list[LatinSquare]:
    """Latin squares with first row and first column ``0..n-1``."""
    if n < 1:
        return []
    grid = [[-1] * n for _ in range(n)]
    rowused = [0] * n
    colused = [0] * n
    for j in range(n):
        grid[0][j] = j
        rowused[0] |= 1 << j
        colused[j] |= 1 << j
    for i in range(1, n):
        grid[i][0] = i
        rowused[i] |= 1 << i
        colused[0] |= 1 << i
    cells = [(i, j) for i in range(1, n) for j in range(1, n)]
    out: list[LatinSquare] = []

    def rec(k: int) -> None:
        if k == len(cells):
            out.append(LatinSquare(grid))
            return
        i, j = cells[k]
        free = ~(rowused[i] | colused[j]) & ((1 << n) - 1)
        while free:
            low = free & -free
            s = low.bit_length() - 1
            free ^= low
            grid[i][j] = s
            rowused[i] |= low
            colused[j] |= low
            rec(k + 1)
            rowused[i] ^= low
            colused[j] ^= low
        grid[i][j] = -1

    rec(0)
    return out


def all_latin_squares(n: int) -> list[LatinSquare]:
    """Every latin square of order n by brute force over row permutations (n <= 5)."""
    if n > 5:
        raise ValueError("brute-force enumeration is limited to n <= 5")
    rows = list(itertools.permutations(range(n)))
    out: list[LatinSquare] = []

    def rec(prefix: list[tuple[int, ...]]) -> None:
        if len(prefix) == n:
            out.append(LatinSquare(prefix))
            return
        for r in rows:
            if all(r[j] != p[j] for p in prefix for j in range(n)):
                prefix.append(r)
                rec(prefix)
                prefix.pop()

    rec([])
    return out


def conjugates(square: LatinSquare) -> list[LatinSquare]:
    """The six parastrophes: permute the roles of (row, column, symbol)."""
    n = square.n
    trip = [(i, j, square.cells[i][j]) for i in range(n) for j in range(n)]
    out = []
    for perm in itertools.permutations(range(3)):
        cells = [[-1] * n for _ in range(n)]
        for t in trip:
            r, c, s = (t[p] for p in perm)
            cells[r][c] = s
        out.append(LatinSquare(cells))
    return out


def main_class_lexmin(square: LatinSquare) -> LatinSquare:
    """Lexicographically least square (rows concatenated) in the main class.

    For every conjugate, every row sent to the top and every column order,
    the symbol relabeling making the top row the identity is forced, and
    sorting rows by first entry is optimal.  The minimum over all those
    choices is the least member of the class.
    """
    n = square.n
    colperms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    best = None
    for conj in conjugates(square):
        m = np.array(conj.cells, dtype=np.int64)
        for r in range(n):
            # cand[p] = m with columns permuted by colperms[p]
            cand = m[:, colperms].transpose(1, 0, 2)
            top = cand[:, r, :]
            relab = np.empty_like(top)
            np.put_along_axis(relab, top, np.arange(n)[None, :].repeat(len(top), 0), axis=1)
            cand = np.take_along_axis(relab[:, None, :].repeat(n, 1), cand, axis=2)
            order = np.argsort(cand[:, :, 0], axis=1)
            cand = np.take_along_axis(cand, order[:, :, None].repeat(n, 2), axis=1)
            flat = cand.reshape(len(cand), -1)
            idx = np.lexsort(flat.T[::-1])[0]
            row = tuple(int(x) for x in flat[idx])
            if best is None or row < best:
                best = row
    return LatinSquare([best[i * n:(i + 1) * n] for i in range(n)])


# --------------------------------------------------------------------------
# TD(3, n) main classes

# groups of the petal TD in the fixed frame (see assembler.Frame)
TD_GROUPS = (tuple(range(3, 9)), tuple(range(9, 15)), tuple(range(15, 21)))


@dataclass(frozen=True)
class SubTD33:
    groups: tuple[tuple[int, int, int], tuple[int, int, int], tuple[int, int, int]]
    blocks: tuple[Triple, ...]


@dataclass
class Td36Catalog:
    squares: list[LatinSquare]
    representatives: list[TransversalDesign]
    aut_orders: list[int]
    # number of distinct latin squares (equivalently labeled TDs on fixed
    # ordered groups) in each main class
    class_sizes: list[int]
    splittable: list[list[tuple[SubTD33, ...]]]

    @property
    def n(self) -> int:
        return self.squares[0].n if self.squares else 0

    def total_squares(self) -> int:
        return sum(self.class_sizes)


def td_groups(n: int) -> tuple[tuple[int, ...], ...]:
    if n == 6:
        return TD_GROUPS
    return tuple(tuple(range(k * n, (k + 1) * n)) for k in range(3))


def enumerate_main_classes(n: int) -> Td36Catalog:
    """Main classes of order-n latin squares via canonical TD certificates.

    Every main class meets the reduced squares, so canonicalizing all reduced
    squares finds every class; class sizes follow from orbit-stabilizer under
    the group-preserving relabelings (order ``6 * (n!)**3``).
    """
    groups = td_groups(n)
    classes: dict[bytes, tuple[LatinSquare, int]] = {}
    for sq in reduced_latin_squares(n):
        rec = canonical_form(latin_to_td(sq, groups))
        if rec.certificate not in classes:
            classes[rec.certificate] = (sq, rec.aut_order)
    reps = []
    for sq, aut in classes.values():
        reps.append((main_class_lexmin(sq).flat(), aut))
    reps.sort()
    squares = [LatinSquare([flat[i * n:(i + 1) * n] for i in range(n)]) for flat, _ in reps]
    tds = [latin_to_td(sq, groups) for sq in squares]
    auts = [aut for _, aut in reps]
    group_order = 6 * math.factorial(n) ** 3
    sizes = []
    for a in auts:
        if group_order % a:
            raise ArithmeticError(f"|Aut| = {a} does not divide {group_order}")
        sizes.append(group_order // a)
    split = [subtd33_structure(td) if n == 6 else [] for td in tds]
    return Td36Catalog(squares, tds, auts, sizes, split)


def _cache_dir() -> Path:
    return Path(os.environ.get("STS21TD_CACHE", Path.home() / ".cache" / "sts21td"))


def write_design_cache(path: Path, designs: Sequence[TripleSystem | TransversalDesign]) -> None:
    body = "".join(format_design(d) + "\n" for d in designs)
    digest = hashlib.sha256(body.encode()).hexdigest()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(f"# sha256={digest} count={len(designs)}\n" + body)
    tmp.replace(path)


def read_design_cache(path: Path) -> list[TripleSystem | TransversalDesign]:
    text = path.read_text()
    header, _, body = text.partition("\n")
    fields = dict(kv.split("=", 1) for kv in header.lstrip("# ").split())
    if hashlib.sha256(body.encode()).hexdigest() != fields.get("sha256"):
        raise ValueError(f"checksum mismatch in {path}")
    designs = parse_designs(body)
    if len(designs) != int(fields["count"]):
        raise ValueError(f"design count mismatch in {path}")
    return designs


def enumerate_td36_main_classes(cache: bool = True) -> Td36Catalog:
    """The 12 main-class representatives of TD(3,6), cached on disk."""
    path = _cache_dir() / "td36.txt"
    if cache and path.exists():
        try:
            tds = read_design_cache(path)
        except (ValueError, KeyError):
            tds = None
        if tds is not None:
            return _catalog_from_tds(tds)
    cat = enumerate_main_classes(6)
    if cache:
        try:
            write_design_cache(path, cat.representatives)
        except OSError:
            pass
    return cat


def _catalog_from_tds(tds: Sequence[TransversalDesign]) -> Td36Catalog:
    squares = [td_to_latin(td, TD_GROUPS) for td in tds]
    auts = [canonical_form(td).aut_order for td in tds]
    order = 6 * math.factorial(6) ** 3
    return Td36Catalog(
        squares, list(tds), auts, [order // a for a in auts], [subtd33_structure(td) for td in tds]
    )


# --------------------------------------------------------------------------
# sub-TD(3,3) structure


def _sub_td(td_third: dict[tuple[int, int], int], g0, g1, g2set) -> tuple[Triple, ...] | None:
    """Blocks of the sub-TD on row set g0 x column set g1, if the symbols close up."""
    blocks = []
    syms = set()
    for r in g0:
        for c in g1:
            s = td_third[(r, c)]
            syms.add(s)
            blocks.append(Triple.of(r, c, s))
    if len(syms) != 3 or not syms <= g2set:
        return None
    return tuple(sorted(blocks))


def subtd33_structure(td: TransversalDesign) -> list[tuple[SubTD33, ...]]:
    """Every partition of a TD(3,6) into four sub-TD(3,3).

    All 20 x 20 choices of half-groups in the first two groups are tried;
    each sub-TD found is completed to its partition by the complementary
    half-groups, and each partition is listed once.
    """
    if td.w != 6:
        raise ValueError("subtd33_structure expects a TD(3,6)")
    g0, g1, g2 = td.groups
    third: dict[tuple[int, int], int] = {}
    for t in td.blocks:
        pts = t.points
        r = next(x for x in pts if x in g0)
        c = next(x for x in pts if x in g1)
        s = next(x for x in pts if x in g2)
        third[(r, c)] = s
    g2set = set(g2)
    parts: dict[frozenset, tuple[SubTD33, ...]] = {}
    for r0 in itertools.combinations(g0, 3):
        for c0 in itertools.combinations(g1, 3):
            bl = _sub_td(third, r0, c0, g2set)
            if bl is None:
                continue
            s0 = tuple(sorted({x for t in bl for x in t.points if x in g2set}))
            r1 = tuple(x for x in g0 if x not in r0)
            c1 = tuple(x for x in g1 if x not in c0)
            s1 = tuple(x for x in g2 if x not in s0)
            member = []
            for gr, gc, gs in ((r0, c0, s0), (r0, c1, s1), (r1, c0, s1), (r1, c1, s0)):
                b = _sub_td(third, gr, gc, g2set)
                if b is None or {x for t in b for x in t.points if x in g2set} != set(gs):
                    member = []
                    break
                member.append(SubTD33((gr, gc, gs), b))
            if not member:
                # the complementary sub-TDs always exist; record the anomaly
                raise AssertionError(f"sub-TD on {r0} x {c0} has no complementary partition")
            key = frozenset(m.groups for m in member)
            if key not in parts:
                parts[key] = tuple(sorted(member, key=lambda m: m.groups))
    return [parts[k] for k in sorted(parts, key=lambda k: sorted(k))]


def align_representative(
    td: TransversalDesign, frame=None, partition: int = 0
) -> TransversalDesign:
    """Relabel a TD on the frame's petal groups so a split matches the half-groups.

    The chosen partition (by index into :func:`subtd33_structure`) is moved so
    its sub-TDs occupy the frame sets {A010,A100,A110}, {A010,A101,A111},
    {A011,A100,A111}, {A011,A101,A110}.  Designs that do not split come back
    unchanged.
    """
    from .assembler import FRAME

    frame = frame or FRAME
    g_rows, g_cols, g_syms = (frame.sets["010"] + frame.sets["011"],
                              frame.sets["100"] + frame.sets["101"],
                              frame.sets["110"] + frame.sets["111"])
    if tuple(map(tuple, td.groups)) != (tuple(sorted(g_rows)), tuple(sorted(g_cols)), tuple(sorted(g_syms))):
        raise ValueError("representative must live on the frame's petal groups")
    parts = subtd33_structure(td)
    if not parts:
        return td
    part = parts[partition]
    (r0, c0, s0) = next(m.groups for m in part if g_rows[0] in m.groups[0] and g_cols[0] in m.groups[1])
    r1 = [x for x in g_rows if x not in r0]
    c1 = [x for x in g_cols if x not in c0]
    s1 = [x for x in g_syms if x not in s0]
    perm = list(range(21))
    for src, dst in ((r0, "010"), (r1, "011"), (c0, "100"), (c1, "101"), (s0, "110"), (s1, "111")):
        for a, b in zip(sorted(src), frame.sets[dst]):
            perm[a] = b
    return td.relabel(perm)
