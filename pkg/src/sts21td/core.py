"""Design types shared by every other module.

Points are the integers ``0..v-1``.  Blocks are :class:`Triple` values kept
in lexicographic order, so two equal designs always serialize identically.
Validation functions never raise on semantic problems; they return a
:class:`ValidationReport` instead so negative cases can be inspected.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class Triple(NamedTuple):
    """A 3-subset ``a < b < c`` of points."""

    a: int
    b: int
    c: int

    @classmethod
    def of(cls, x: int, y: int, z: int) -> "Triple":
        a, b, c = sorted((int(x), int(y), int(z)))
        if a == b or b == c:
            raise ValueError(f"triple needs 3 distinct points, got {(x, y, z)}")
        if a < 0:
            raise ValueError(f"negative point in {(x, y, z)}")
        return cls(a, b, c)

    @classmethod
    def from_mask(cls, mask: int) -> "Triple":
        pts = [i for i in range(mask.bit_length()) if mask >> i & 1]
        if len(pts) != 3:
            raise ValueError(f"mask {mask:#x} does not hold exactly 3 points")
        return cls(*pts)

    @property
    def points(self) -> tuple[int, int, int]:
        return (self.a, self.b, self.c)

    @property
    def mask(self) -> int:
        return (1 << self.a) | (1 << self.b) | (1 << self.c)

    def pairs(self):
        yield (self.a, self.b)
        yield (self.a, self.c)
        yield (self.b, self.c)

    def __str__(self) -> str:
        return f"{self.a},{self.b},{self.c}"


def triples(items: Iterable[Sequence[int]]) -> tuple[Triple, ...]:
    """Sorted tuple of triples from any iterable of 3-sequences."""
    return tuple(sorted(Triple.of(*t) for t in items))


def mask_of(points: Iterable[int]) -> int:
    m = 0
    for p in points:
        m |= 1 << p
    return m


def points_of(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    uncovered: tuple[tuple[int, int], ...] = ()
    doubly_covered: tuple[tuple[int, int], ...] = ()
    # blocks that meet some group in != 1 point (TD axiom 1)
    bad_blocks: tuple[Triple, ...] = ()
    messages: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class TripleSystem:
    """A set of triples on the points ``0..v-1``.

    Duplicated blocks are kept (and reported by :func:`validate_sts`) so that
    broken inputs can be represented.
    """

    v: int
    blocks: tuple[Triple, ...]

    def __init__(self, v: int, blocks: Iterable[Sequence[int]]):
        bl = triples(blocks)
        for t in bl:
            if t.c >= v:
                raise ValueError(f"block {t} has a point outside 0..{v - 1}")
        object.__setattr__(self, "v", int(v))
        object.__setattr__(self, "blocks", bl)

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    @cached_property
    def block_set(self) -> frozenset[Triple]:
        return frozenset(self.blocks)

    @cached_property
    def array(self) -> np.ndarray:
        """Blocks as an ``(b, 3)`` int64 array."""
        return np.array(self.blocks, dtype=np.int64).reshape(-1, 3)

    @cached_property
    def is_partial(self) -> bool:
        """True when no pair of points lies in two blocks."""
        seen = set()
        for t in self.blocks:
            for p in t.pairs():
                if p in seen:
                    return False
                seen.add(p)
        return True

    @cached_property
    def third(self) -> np.ndarray:
        """``third[x, y]`` = third point of the block through x, y (or -1).

        The diagonal holds ``third[x, x] = x``.  Raises for systems where some
        pair lies in two blocks.
        """
        if not self.is_partial:
            raise ValueError("some pair of points lies in two blocks")
        t = np.full((self.v, self.v), -1, dtype=np.int64)
        np.fill_diagonal(t, np.arange(self.v))
        for a, b, c in self.blocks:
            t[a, b] = t[b, a] = c
            t[a, c] = t[c, a] = b
            t[b, c] = t[c, b] = a
        t.setflags(write=False)
        return t

    @cached_property
    def is_sts(self) -> bool:
        return validate_sts(self).ok

    def relabel(self, perm: Sequence[int]) -> "TripleSystem":
        """Image under the point map ``x -> perm[x]``."""
        return TripleSystem(self.v, [(perm[a], perm[b], perm[c]) for a, b, c in self.blocks])

    def restrict(self, support: Iterable[int]) -> tuple[Triple, ...]:
        """Blocks lying entirely inside ``support``."""
        m = mask_of(support)
        return tuple(t for t in self.blocks if t.mask & m == t.mask)

    def to_text(self) -> str:
        return format_design(self)


@dataclass(frozen=True)
class TransversalDesign:
    """A TD(3, w): three groups of w points and w*w transversal blocks."""

    groups: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
    blocks: tuple[Triple, ...]

    def __init__(self, groups: Sequence[Iterable[int]], blocks: Iterable[Sequence[int]]):
        gs = tuple(tuple(sorted(int(x) for x in g)) for g in groups)
        if len(gs) != 3:
            raise ValueError("a TD(3, w) needs exactly 3 groups")
        object.__setattr__(self, "groups", gs)
        object.__setattr__(self, "blocks", triples(blocks))

    @property
    def w(self) -> int:
        return len(self.groups[0])

    @property
    def points(self) -> tuple[int, ...]:
        return tuple(sorted(x for g in self.groups for x in g))

    @property
    def v(self) -> int:
        """Size of the smallest initial segment holding every point."""
        return max(self.points) + 1

    def as_system(self, v: int | None = None) -> TripleSystem:
        return TripleSystem(self.v if v is None else v, self.blocks)

    def relabel(self, perm: Sequence[int]) -> "TransversalDesign":
        return TransversalDesign(
            [[perm[x] for x in g] for g in self.groups],
            [(perm[a], perm[b], perm[c]) for a, b, c in self.blocks],
        )

    def to_text(self) -> str:
        return format_design(self)


@dataclass(frozen=True)
class LatinSquare:
    cells: tuple[tuple[int, ...], ...]

    def __init__(self, cells: Iterable[Iterable[int]]):
        object.__setattr__(self, "cells", tuple(tuple(int(x) for x in row) for row in cells))
        if any(len(r) != len(self.cells) for r in self.cells):
            raise ValueError("latin square must be n x n")

    @property
    def n(self) -> int:
        return len(self.cells)

    def is_latin(self) -> bool:
        full = set(range(self.n))
        return all(set(r) == full for r in self.cells) and all(
            set(col) == full for col in zip(*self.cells)
        )

    def flat(self) -> tuple[int, ...]:
        return tuple(x for r in self.cells for x in r)

    def __str__(self) -> str:
        return "\n".join(" ".join(map(str, r)) for r in self.cells)


@dataclass(frozen=True)
class AlmostSts9:
    """Eleven blocks that become an STS(9) once ``missing`` is added."""

    support: tuple[int, ...]
    blocks: tuple[Triple, ...]
    missing: Triple

    def __init__(self, support: Iterable[int], blocks: Iterable[Sequence[int]], missing: Sequence[int]):
        sup = tuple(sorted(support))
        bl = triples(blocks)
        miss = Triple.of(*missing)
        if len(sup) != 9 or len(bl) != 11:
            raise ValueError("almost-STS(9) needs 9 points and 11 blocks")
        if miss in bl:
            raise ValueError("missing triple is one of the blocks")
        relab = {x: i for i, x in enumerate(sup)}
        full = [(relab[a], relab[b], relab[c]) for a, b, c in (*bl, miss)]
        if not validate_sts(TripleSystem(9, full)).ok:
            raise ValueError("blocks plus missing triple do not form an STS(9)")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "blocks", bl)
        object.__setattr__(self, "missing", miss)


# --------------------------------------------------------------------------
# validation


def validate_sts(ts: TripleSystem) -> ValidationReport:
    """Check that every pair of points lies in exactly one block."""
    if ts.v < 3:
        return ValidationReport(False, messages=(f"v={ts.v} is below 3",))
    count: dict[tuple[int, int], int] = {}
    for t in ts.blocks:
        for p in t.pairs():
            count[p] = count.get(p, 0) + 1
    uncovered = tuple(p for p in combinations(range(ts.v), 2) if p not in count)
    doubled = tuple(sorted(p for p, k in count.items() if k > 1))
    msgs = []
    if len(ts.blocks) != len(set(ts.blocks)):
        msgs.append("duplicate blocks")
    ok = not uncovered and not doubled
    return ValidationReport(ok, uncovered, doubled, messages=tuple(msgs))


def validate_td(td: TransversalDesign) -> ValidationReport:
    """Check both TD axioms and the block count w**2."""
    msgs = []
    owner: dict[int, int] = {}
    for gi, g in enumerate(td.groups):
        for x in g:
            if x in owner:
                msgs.append(f"point {x} lies in two groups")
            owner[x] = gi
    w = td.w
    if any(len(g) != w for g in td.groups):
        msgs.append("groups have different sizes")
    bad = []
    count: dict[tuple[int, int], int] = {}
    for t in td.blocks:
        gs = sorted(owner.get(x, -1) for x in t.points)
        if gs != [0, 1, 2]:
            bad.append(t)
        for p in t.pairs():
            count[p] = count.get(p, 0) + 1
    cross = [
        tuple(sorted((x, y)))
        for g1, g2 in combinations(td.groups, 2)
        for x in g1
        for y in g2
    ]
    uncovered = tuple(sorted(p for p in cross if p not in count))
    doubled = tuple(sorted(p for p, k in count.items() if k > 1))
    if len(td.blocks) != w * w:
        msgs.append(f"{len(td.blocks)} blocks, expected {w * w}")
    ok = not (msgs or bad or uncovered or doubled)
    return ValidationReport(ok, uncovered, doubled, tuple(bad), tuple(msgs))


def block_through(ts: TripleSystem, x: int, y: int) -> Triple:
    """The unique block of the STS ``ts`` containing x and y."""
    if not ts.is_sts:
        raise ValueError("block_through needs a valid STS")
    if x == y:
        raise ValueError("x and y must differ")
    return Triple.of(x, y, int(ts.third[x, y]))


def disjoint_blocks(ts: TripleSystem, t: Sequence[int]) -> list[Triple]:
    """All blocks of ``ts`` sharing no point with the block ``t``."""
    t = Triple.of(*t)
    if t not in ts.block_set:
        raise ValueError(f"{t} is not a block")
    if not ts.is_sts:
        raise ValueError("disjoint_blocks needs a valid STS")
    return [b for b in ts.blocks if not b.mask & t.mask]


# --------------------------------------------------------------------------
# latin squares <-> transversal designs


def latin_to_td(square: LatinSquare, groups: Sequence[Sequence[int]]) -> TransversalDesign:
    """Block ``{rows[i], cols[j], syms[L[i][j]]}`` for every cell (i, j).

    ``groups`` are the row, column and symbol point lists in index order.
    """
    rows, cols, syms = (list(g) for g in groups)
    n = square.n
    if not (len(rows) == len(cols) == len(syms) == n):
        raise ValueError(f"groups must have {n} points each")
    if len(set(rows) | set(cols) | set(syms)) != 3 * n:
        raise ValueError("groups must be disjoint")
    for r in square.cells:
        for s in r:
            if not 0 <= s < n:
                raise ValueError(f"symbol {s} outside 0..{n - 1}")
    blocks = [(rows[i], cols[j], syms[square.cells[i][j]]) for i in range(n) for j in range(n)]
    return TransversalDesign([rows, cols, syms], blocks)


def td_to_latin(td: TransversalDesign, groups: Sequence[Sequence[int]] | None = None) -> LatinSquare:
    """Inverse of :func:`latin_to_td` for the given (row, col, symbol) order."""
    rows, cols, syms = (list(g) for g in (groups or td.groups))
    ri = {x: i for i, x in enumerate(rows)}
    ci = {x: i for i, x in enumerate(cols)}
    si = {x: i for i, x in enumerate(syms)}
    n = len(rows)
    cells = [[-1] * n for _ in range(n)]
    for t in td.blocks:
        r = [ri[x] for x in t.points if x in ri]
        c = [ci[x] for x in t.points if x in ci]
        s = [si[x] for x in t.points if x in si]
        if len(r) != 1 or len(c) != 1 or len(s) != 1:
            raise ValueError(f"block {t} is not transversal")
        if cells[r[0]][c[0]] != -1:
            raise ValueError(f"cell ({r[0]}, {c[0]}) filled twice")
        cells[r[0]][c[0]] = s[0]
    if any(x < 0 for row in cells for x in row):
        raise ValueError("some cell is empty")
    return LatinSquare(cells)


def cyclic_square(n: int) -> LatinSquare:
    """Cayley table of Z_n."""
    return LatinSquare([[(i + j) % n for j in range(n)] for i in range(n)])


FANO = TripleSystem(7, [(0, 1, 3), (1, 2, 4), (2, 3, 5), (3, 4, 6), (4, 5, 0), (5, 6, 1), (6, 0, 2)])

# AG(2, 3): lines of the affine plane on Z_3 x Z_3, point (x, y) -> 3x + y
AG23 = TripleSystem(
    9,
    [
        (0, 1, 2), (3, 4, 5), (6, 7, 8),
        (0, 3, 6), (1, 4, 7), (2, 5, 8),
        (0, 4, 8), (1, 5, 6), (2, 3, 7),
        (0, 5, 7), (1, 3, 8), (2, 4, 6),
    ],
)


# --------------------------------------------------------------------------
# text format


def format_design(d: TripleSystem | TransversalDesign) -> str:
    """``v=<n>`` header, optional ``groups=`` line, then one ``a,b,c`` per block."""
    lines = [f"v={d.v}"]
    if isinstance(d, TransversalDesign):
        lines.append("groups=" + "|".join(",".join(map(str, g)) for g in d.groups))
    lines.extend(str(t) for t in d.blocks)
    return "\n".join(lines) + "\n"


def parse_design(text: str) -> TripleSystem | TransversalDesign:
    """Parse one design in the text format (blank lines and ``#`` comments ignored)."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("v="):
        raise ValueError("design text must start with a v=<n> line")
    v = int(lines[0][2:])
    groups = None
    body = lines[1:]
    if body and body[0].startswith("groups="):
        groups = [[int(x) for x in g.split(",") if x] for g in body[0][7:].split("|")]
        body = body[1:]
    blocks = []
    for ln in body:
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"bad block line {ln!r}")
        blocks.append(tuple(int(p) for p in parts))
    if groups is not None:
        td = TransversalDesign(groups, blocks)
        if td.v > v:
            raise ValueError("TD point outside the declared v")
        return td
    return TripleSystem(v, blocks)


def parse_designs(text: str) -> list[TripleSystem | TransversalDesign]:
    """Parse several designs, each starting at a ``v=`` line."""
    chunks: list[list[str]] = []
    for ln in text.splitlines():
        s = ln.strip()
        if s.startswith("v="):
            chunks.append([s])
        elif s and not s.startswith("#"):
            if not chunks:
                raise ValueError("block line before the first v= header")
            chunks[-1].append(s)
    return [parse_design("\n".join(c)) for c in chunks]
