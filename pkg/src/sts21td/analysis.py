"""Resolvability by exact cover, structure checks and the census table."""

from __future__ import annotations

import itertools
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .core import Triple, TripleSystem, validate_sts

DEFAULT_NODE_BUDGET = 50_000_000


class SearchBudgetExceeded(RuntimeError):
    """An exact-cover search hit its node budget before finishing."""


@dataclass(frozen=True)
class ParallelClass:
    blocks: tuple[Triple, ...]

    def points(self) -> tuple[int, ...]:
        return tuple(sorted(x for t in self.blocks for x in t.points))


@dataclass(frozen=True)
class Resolution:
    classes: tuple[ParallelClass, ...]

    def check(self, sts: TripleSystem) -> bool:
        """Independent re-validation: every class covers all points, every block used once."""
        pts = tuple(range(sts.v))
        if any(c.points() != pts for c in self.classes):
            return False
        used = sorted(t for c in self.classes for t in c.blocks)
        return used == sorted(sts.blocks)

    def to_text(self) -> str:
        lines = []
        for i, c in enumerate(self.classes):
            lines.append(f"class {i}: " + " ".join(",".join(map(str, t)) for t in c.blocks))
        return "\n".join(lines)


@njit(cache=True)
def _parallel_classes_kernel(blocks, v):
    m = blocks.shape[0]
    k = v // 3
    r = 0
    cnt = np.zeros(v, np.int64)
    for i in range(m):
        for j in range(3):
            cnt[blocks[i, j]] += 1
    for x in range(v):
        if cnt[x] > r:
            r = cnt[x]
    through = np.zeros((v, r), np.int64)
    cnt[:] = 0
    bmask = np.zeros(m, np.int64)
    for i in range(m):
        for j in range(3):
            x = blocks[i, j]
            through[x, cnt[x]] = i
            cnt[x] += 1
            bmask[i] |= 1 << x
    out = np.zeros((16, k), np.int64)
    nout = 0
    cov = np.zeros(k + 1, np.int64)
    sel = np.zeros(k, np.int64)
    ptr = np.zeros(k, np.int64)
    pt = np.zeros(k, np.int64)
    d = 0
    while d >= 0:
        if d == k:
            if nout == out.shape[0]:
                bigger = np.zeros((2 * nout, k), np.int64)
                bigger[:nout] = out
                out = bigger
            out[nout] = sel
            nout += 1
            d -= 1
            continue
        x = pt[d]
        advanced = False
        while ptr[d] < cnt[x]:
            b = through[x, ptr[d]]
            ptr[d] += 1
            if bmask[b] & cov[d] == 0:
                sel[d] = b
                cov[d + 1] = cov[d] | bmask[b]
                d += 1
                if d < k:
                    y = 0
                    while (cov[d] >> y) & 1:
                        y += 1
                    pt[d] = y
                    ptr[d] = 0
                advanced = True
                break
        if not advanced:
            d -= 1
    return out[:nout]


@njit(cache=True)
def _resolution_kernel(classes, m, budget):
    """Exact cover of ``m`` blocks by classes; returns (status, chosen class indices).

    status is 1 with a witness, 0 when none exists, -1 when the budget ran out.
    The next block to cover is the one with fewest compatible classes.
    """
    nc, k = classes.shape
    cnt = np.zeros(m, np.int64)
    for c in range(nc):
        for j in range(k):
            cnt[classes[c, j]] += 1
    mx = 1
    for b in range(m):
        if cnt[b] > mx:
            mx = cnt[b]
    of = np.zeros((m, mx), np.int64)
    cnt[:] = 0
    for c in range(nc):
        for j in range(k):
            b = classes[c, j]
            of[b, cnt[b]] = c
            cnt[b] += 1
    depth = m // k
    covered = np.zeros(m, np.bool_)
    cand = np.zeros((depth, mx), np.int64)
    ncand = np.zeros(depth, np.int64)
    ptr = np.zeros(depth, np.int64)
    sel = np.full(depth, -1, np.int64)
    if nc == 0 or m % k:
        return 0, sel
    nodes = 0
    d = 0
    fresh = True
    while d >= 0:
        if d == depth:
            return 1, sel
        if fresh:
            nodes += 1
            if nodes > budget:
                return -1, sel
            best = -1
            bestn = mx + 1
            for b in range(m):
                if covered[b]:
                    continue
                n = 0
                for q in range(cnt[b]):
                    c = of[b, q]
                    ok = True
                    for j in range(k):
                        if covered[classes[c, j]]:
                            ok = False
                            break
                    if ok:
                        n += 1
                if n < bestn:
                    bestn = n
                    best = b
                    if n == 0:
                        break
            ncand[d] = 0
            if bestn > 0:
                for q in range(cnt[best]):
                    c = of[best, q]
                    ok = True
                    for j in range(k):
                        if covered[classes[c, j]]:
                            ok = False
                            break
                    if ok:
                        cand[d, ncand[d]] = c
                        ncand[d] += 1
            ptr[d] = 0
        if sel[d] >= 0:
            for j in range(k):
                covered[classes[sel[d], j]] = False
            sel[d] = -1
        if ptr[d] < ncand[d]:
            c = cand[d, ptr[d]]
            ptr[d] += 1
            sel[d] = c
            for j in range(k):
                covered[classes[c, j]] = True
            d += 1
            fresh = True
        else:
            d -= 1
            fresh = False
    return 0, sel


def _require_resolvable_input(sts: TripleSystem) -> None:
    if sts.v % 3:
        raise ValueError(f"parallel classes need 3 | v, got v={sts.v}")
    if sts.v > 63:
        raise ValueError("parallel class search supports v <= 63")
    if not validate_sts(sts).ok:
        raise ValueError("expected a valid STS")


def _class_indices(sts: TripleSystem) -> np.ndarray:
    return _parallel_classes_kernel(np.ascontiguousarray(sts.array), sts.v)


def parallel_classes(sts: TripleSystem) -> list[ParallelClass]:
    """All exact covers of the points by blocks, anchored on the least uncovered point."""
    _require_resolvable_input(sts)
    bl = sts.blocks
    return [ParallelClass(tuple(sorted(bl[i] for i in row))) for row in _class_indices(sts)]


def is_resolvable(sts: TripleSystem, node_budget: int = DEFAULT_NODE_BUDGET) -> tuple[bool, Resolution | None]:
    """Exhaustive two-level exact cover; a budget overflow raises instead of answering."""
    _require_resolvable_input(sts)
    idx = _class_indices(sts)
    if len(idx) == 0:
        return False, None
    status, sel = _resolution_kernel(np.ascontiguousarray(idx), len(sts.blocks), node_budget)
    if status < 0:
        raise SearchBudgetExceeded(f"resolution search exceeded {node_budget} nodes")
    if status == 0:
        return False, None
    bl = sts.blocks
    res = Resolution(tuple(ParallelClass(c) for c in sorted(tuple(sorted(bl[i] for i in idx[c])) for c in sel)))
    if not res.check(sts):
        raise AssertionError("resolution witness failed re-validation")
    return True, res


def is_resolvable_brute_force(sts: TripleSystem) -> bool:
    """Tiny-instance oracle: try every set of v/3 blocks as a class, then every set of classes."""
    if sts.v > 9:
        raise ValueError("brute force is limited to v <= 9")
    k = sts.v // 3
    full = frozenset(range(sts.v))
    classes = [c for c in itertools.combinations(sts.blocks, k)
               if frozenset(x for t in c for x in t) == full]
    r = len(sts.blocks) // k
    target = sorted(sts.blocks)
    return any(sorted(t for c in choice for t in c) == target for choice in itertools.combinations(classes, r))


# --------------------------------------------------------------------------
# census report


@dataclass
class TableReport:
    # (tau6, sigma9) -> aut_order -> [classes, resolvable, unknown]
    cells: dict = field(default_factory=dict)

    def column(self, tau6: int, sigma9: int) -> dict[int, tuple[int, int]]:
        col = self.cells.get((tau6, sigma9), {})
        return {a: (c[0], c[1]) for a, c in sorted(col.items())}

    def total(self, tau6: int | None = None, sigma9: int | None = None) -> tuple[int, int]:
        n = r = 0
        for (t, s), col in self.cells.items():
            if (tau6 is None or t == tau6) and (sigma9 is None or s == sigma9):
                for c in col.values():
                    n += c[0]
                    r += c[1]
        return n, r

    def to_dict(self) -> dict:
        return {
            f"tau6={t},sigma9={s}": {str(a): {"classes": c[0], "resolvable": c[1], "unknown": c[2]}
                                     for a, c in sorted(col.items())}
            for (t, s), col in sorted(self.cells.items(), reverse=True)
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)

    def text(self) -> str:
        """Rows by |Aut|, one column per (tau6, sigma9), resolvable counts in parentheses."""
        cols = sorted(self.cells, reverse=True)
        auts = sorted({a for col in self.cells.values() for a in col})
        head = ["|Aut|"] + [f"t6={t} s9={s}" for t, s in cols]
        rows = [head]
        for a in auts:
            row = [str(a)]
            for key in cols:
                c = self.cells[key].get(a)
                row.append("" if c is None else f"{c[0]} ({c[1]})" + ("?" if c[2] else ""))
            rows.append(row)
        tot = ["total"]
        for key in cols:
            n, r = self.total(*key)
            tot.append(f"{n} ({r})")
        rows.append(tot)
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def table_report(records: Iterable) -> TableReport:
    cells: dict = defaultdict(lambda: defaultdict(lambda: [0, 0, 0]))
    for rec in records:
        c = cells[(rec.tau6, rec.sigma9)][rec.aut_order]
        c[0] += 1
        if rec.resolvable is None:
            c[2] += 1
        elif rec.resolvable:
            c[1] += 1
    return TableReport({k: dict(v) for k, v in cells.items()})


# --------------------------------------------------------------------------
# structure theorems on one system


@dataclass
class StructureReport:
    tau6: int
    sigma9: int
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _induced(sts: TripleSystem, support: Sequence[int]) -> list[Triple]:
    s = set(support)
    return [t for t in sts.blocks if s.issuperset(t.points)]


def check_structure_theorems(sts21: TripleSystem, census=None) -> StructureReport:
    """Check the flower and sub-STS(9) consequences on one STS(21).

    ``census`` is ``(flowers, (sigma9, supports))``; it is computed when omitted.
    """
    from .assembler import count_sub_sts9, find_flowers

    if census is None:
        census = (find_flowers(sts21), count_sub_sts9(sts21))
    flowers, (sigma9, supports) = census
    tau6 = len(flowers)
    bad: list[str] = []
    if tau6 not in (1, 3, 7):
        bad.append(f"tau6={tau6} not in {{1,3,7}}")
    if sigma9 not in (1, 3, 7):
        bad.append(f"sigma9={sigma9} not in {{1,3,7}}")
    if tau6 == 7 and sigma9 != 7:
        bad.append("tau6=7 but sigma9 != 7")
    if tau6 == 3 and sigma9 not in (1, 3):
        bad.append("tau6=3 but sigma9 not in {1,3}")
    if tau6 == 1 and flowers:
        want = 3 if flowers[0].stem_is_block else 1
        if sigma9 != want:
            bad.append(f"single flower with stem_is_block={flowers[0].stem_is_block} but sigma9={sigma9}")
    for s1, s2 in itertools.combinations(supports, 2):
        if len(set(s1) & set(s2)) != 3:
            bad.append(f"sub-STS(9) supports {s1} and {s2} meet in {len(set(s1) & set(s2))} points")
    sup_set = {frozenset(s) for s in supports}
    for f in flowers:
        stem = f.stem
        for i, p in enumerate(f.petals):
            induced = _induced(sts21, stem.points + p)
            if i in f.sts_petals:
                if len(induced) != 12 or frozenset(stem.points + p) not in sup_set:
                    bad.append(f"flower {stem}: petal {i} is not a sub-STS(9)")
            elif len(induced) != 11 or stem in induced:
                bad.append(f"flower {stem}: petal {i} is not an almost-sub-STS(9) missing the stem")
    for f, g in itertools.combinations(flowers, 2):
        if set(f.stem.points) & set(g.stem.points):
            bad.append(f"stems {f.stem} and {g.stem} intersect")
        shared = set(f.supports()) & set(g.supports())
        if not shared:
            bad.append(f"flowers with stems {f.stem}, {g.stem} share no stem+petal support")
        elif not shared & sup_set:
            bad.append(f"shared support of flowers {f.stem}, {g.stem} is not a sub-STS(9)")
    return StructureReport(tau6, sigma9, bad)


def resolvable_counts(records: Iterable) -> Counter:
    return Counter((r.tau6, r.sigma9, r.resolvable) for r in records)
