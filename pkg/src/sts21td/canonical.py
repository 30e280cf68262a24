"""Canonical certificates, isomorphism tests and automorphism-group orders.

The engine works on points.  A partial triple system is encoded by its
third-point table (``third[x, y]`` is the third point of the block through
x and y, or -1), which carries the same information as the point/block
incidence graph because any pair lies in at most one block.  Points are
colored, the coloring is refined until stable, and a depth-first search
individualizes points of the first smallest non-singleton cell.  Every leaf
gives a labeling; the certificate is the lexicographically least relabeled
block list over all leaves.

Refinement uses, besides the current colors, an invariant color per pair
of points.  For a complete STS this is the cycle type of the permutation
``w -> third[y, third[x, w]]`` (the classical cycle-structure invariant of
the pair x, y).  For partial systems the same map is followed until it
either closes or hits an uncovered pair.

Automorphisms found by matching leaves against the first leaf prune the
children of every node on the first path, and ``|Aut|`` is the product of
the orbit lengths of the individualized points along that path.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import TransversalDesign, TripleSystem, validate_td

MAX_POINTS = 21

# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _pair_cycle_codes(third):
    """Hash of the cycle type of ``w -> third[y, third[x, w]]`` for every x, y."""
    n = third.shape[0]
    codes = np.zeros((n, n), np.int64)
    seen = np.zeros(n, np.bool_)
    cnt = np.zeros(n + 1, np.int64)
    for x in range(n):
        for y in range(x + 1, n):
            seen[:] = False
            cnt[:] = 0
            for w in range(n):
                if seen[w]:
                    continue
                length = 0
                u = w
                while not seen[u]:
                    seen[u] = True
                    length += 1
                    u = third[y, third[x, u]]
                cnt[length] += 1
            h = np.int64(7)
            for k in range(n + 1):
                h = h * np.int64(1000003) + cnt[k]
            codes[x, y] = h
            codes[y, x] = h
    return codes


@njit(cache=True)
def _partial_pair_codes(third):
    """Like :func:`_pair_cycle_codes` for partial systems (open chains allowed).

    In a TD two points of one group give the row/column/symbol cycle
    structure of the latin square; other pairs give short open chains.
    """
    n = third.shape[0]
    codes = np.zeros((n, n), np.int64)
    cnt = np.zeros(2 * (n + 1), np.int64)
    for x in range(n):
        for y in range(x + 1, n):
            cnt[:] = 0
            for w in range(n):
                length = 0
                u = w
                closed = False
                while length <= n:
                    a = third[x, u]
                    if a < 0:
                        break
                    b = third[y, a]
                    if b < 0:
                        break
                    u = b
                    length += 1
                    if u == w:
                        closed = True
                        break
                cnt[length + (n + 1) * closed] += 1
            h = np.int64(11)
            for k in range(cnt.shape[0]):
                h = h * np.int64(1000003) + cnt[k]
            codes[x, y] = h
            codes[y, x] = h
    return codes


@njit(cache=True)
def _rank_codes(codes):
    vals = np.unique(codes.ravel())
    n = codes.shape[0]
    out = np.empty((n, n), np.int64)
    for i in range(n):
        for j in range(n):
            out[i, j] = np.searchsorted(vals, codes[i, j])
    return out


@njit(cache=True)
def _row_less(c, keys, a, b):
    if c[a] != c[b]:
        return c[a] < c[b]
    n = keys.shape[1]
    for k in range(n):
        if keys[a, k] != keys[b, k]:
            return keys[a, k] < keys[b, k]
    return False


@njit(cache=True)
def _row_equal(c, keys, a, b):
    if c[a] != c[b]:
        return False
    for k in range(keys.shape[1]):
        if keys[a, k] != keys[b, k]:
            return False
    return True


@njit(cache=True)
def _count_cells(c):
    n = c.shape[0]
    mark = np.zeros(n, np.bool_)
    k = 0
    for u in range(n):
        if not mark[c[u]]:
            mark[c[u]] = True
            k += 1
    return k


@njit(cache=True)
def _refine(third, pc, colors):
    """Refine an ordered partition (colors = cell start positions) until stable."""
    n = colors.shape[0]
    c = colors.copy()
    keys = np.empty((n, n), np.int64)
    order = np.empty(n, np.int64)
    newc = np.empty(n, np.int64)
    base = n + 1
    ncells = _count_cells(c)
    while ncells < n:
        for u in range(n):
            for v in range(n):
                t = third[u, v]
                ct = c[t] if t >= 0 else n
                keys[u, v] = (pc[u, v] * base + c[v]) * base + ct
            keys[u].sort()
        for i in range(n):
            order[i] = i
        for i in range(1, n):
            j = i
            while j > 0 and _row_less(c, keys, order[j], order[j - 1]):
                tmp = order[j]
                order[j] = order[j - 1]
                order[j - 1] = tmp
                j -= 1
        newc[order[0]] = 0
        for i in range(1, n):
            if _row_equal(c, keys, order[i], order[i - 1]):
                newc[order[i]] = newc[order[i - 1]]
            else:
                newc[order[i]] = i
        k = _count_cells(newc)
        c[:] = newc
        if k == ncells:
            break
        ncells = k
    return c


@njit(cache=True)
def _individualize(colors, w):
    c = colors.copy()
    s = colors[w]
    for u in range(c.shape[0]):
        if u != w and colors[u] == s:
            c[u] = s + 1
    return c


@njit(cache=True)
def _cert_codes(blocks, lab, n):
    m = blocks.shape[0]
    out = np.empty(m, np.int64)
    for i in range(m):
        a = lab[blocks[i, 0]]
        b = lab[blocks[i, 1]]
        d = lab[blocks[i, 2]]
        if a > b:
            a, b = b, a
        if b > d:
            b, d = d, b
        if a > b:
            a, b = b, a
        out[i] = (a * n + b) * n + d
    out.sort()
    return out


@njit(cache=True)
def _canon_batch(thirds, blocks):
    """Root-level canonical labeling for a batch of complete STS.

    Returns ``(codes, discrete)``; rows with ``discrete == False`` still need
    the full search because the root partition did not become discrete.
    """
    nb = thirds.shape[0]
    n = thirds.shape[1]
    m = blocks.shape[1]
    out = np.zeros((nb, m), np.int64)
    ok = np.zeros(nb, np.bool_)
    zero = np.zeros(n, np.int64)
    for i in range(nb):
        pc = _rank_codes(_pair_cycle_codes(thirds[i]))
        c = _refine(thirds[i], pc, zero)
        if _count_cells(c) == n:
            out[i] = _cert_codes(blocks[i], c, n)
            ok[i] = True
    return out, ok


# --------------------------------------------------------------------------
# search driver


def _codes_to_bytes(codes: np.ndarray) -> bytes:
    return codes.astype(">u2").tobytes()


class _Orbits:
    def __init__(self, n: int, gens: list[np.ndarray]):
        self.parent = list(range(n))
        for g in gens:
            for x, y in enumerate(g):
                self.union(x, int(y))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.parent[max(rx, ry)] = min(rx, ry)

    def size(self, x: int) -> int:
        r = self.find(x)
        return sum(1 for y in range(len(self.parent)) if self.find(y) == r)


class _Search:
    def __init__(self, third: np.ndarray, pc: np.ndarray, blocks: np.ndarray):
        self.third = third
        self.pc = pc
        self.blocks = blocks
        self.n = third.shape[0]
        self.first_cert: bytes | None = None
        self.first_lab: np.ndarray | None = None
        self.best_cert: bytes | None = None
        self.best_lab: np.ndarray | None = None
        self.gens: list[np.ndarray] = []
        self.orbit_sizes: list[int] = []
        self.leaves = 0

    def run(self, colors: np.ndarray) -> None:
        root = _refine(self.third, self.pc, colors)
        self._first_path(root)

    def _target_cell(self, c: np.ndarray) -> list[int]:
        sizes = np.bincount(c, minlength=self.n)
        nontriv = np.nonzero(sizes > 1)[0]
        start = nontriv[np.argmin(sizes[nontriv])]
        return [int(u) for u in np.nonzero(c == start)[0]]

    def _leaf(self, c: np.ndarray) -> bool:
        self.leaves += 1
        cert = _codes_to_bytes(_cert_codes(self.blocks, c, self.n))
        if self.first_cert is None:
            self.first_cert = self.best_cert = cert
            self.first_lab = self.best_lab = c
            return False
        if cert == self.first_cert:
            # vertex at the same position in both leaves
            inv = np.empty(self.n, np.int64)
            inv[c] = np.arange(self.n)
            self.gens.append(inv[self.first_lab])
            return True
        if cert < self.best_cert:
            self.best_cert, self.best_lab = cert, c
        return False

    def _first_path(self, c: np.ndarray) -> None:
        if _count_cells(c) == self.n:
            self._leaf(c)
            return
        cell = self._target_cell(c)
        v0 = cell[0]
        self._first_path(_refine(self.third, self.pc, _individualize(c, v0)))
        explored = [v0]
        orbits = _Orbits(self.n, self.gens)
        for w in cell[1:]:
            r = orbits.find(w)
            if any(orbits.find(x) == r for x in explored):
                continue
            explored.append(w)
            ngens = len(self.gens)
            self._explore(_refine(self.third, self.pc, _individualize(c, w)))
            if len(self.gens) != ngens:
                orbits = _Orbits(self.n, self.gens)
        self.orbit_sizes.append(orbits.size(v0))

    def _explore(self, c: np.ndarray) -> bool:
        """Full search below a node off the first path; True aborts the subtree."""
        if _count_cells(c) == self.n:
            return self._leaf(c)
        for w in self._target_cell(c):
            if self._explore(_refine(self.third, self.pc, _individualize(c, w))):
                return True
        return False

    @property
    def aut_order(self) -> int:
        return math.prod(self.orbit_sizes)


# --------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class IncidenceGraph:
    """Bipartite point/block incidence graph (points first, then blocks)."""

    n_points: int
    n_blocks: int
    edges: tuple[tuple[int, int], ...]
    # 0 = point on no group / STS point, 1 = TD point, 2 = block
    colors: tuple[int, ...]

    def degree(self, vertex: int) -> int:
        return sum(1 for e in self.edges if vertex in e)


def incidence_graph(design: TripleSystem | TransversalDesign) -> IncidenceGraph:
    ts, kind = _as_system(design)
    v, b = ts.v, len(ts.blocks)
    edges = tuple((x, v + i) for i, t in enumerate(ts.blocks) for x in t.points)
    pc = 1 if kind == "td" else 0
    return IncidenceGraph(v, b, edges, (pc,) * v + (2,) * b)


@dataclass(frozen=True)
class CanonicalRecord:
    certificate: bytes
    aut_order: int
    # labeling[x] = canonical label of point x
    labeling: tuple[int, ...]

    @property
    def hash(self) -> str:
        return certificate_hash(self.certificate)

    def design(self) -> TripleSystem:
        """The canonical representative (certificate decoded)."""
        from .core import parse_designs

        text = self.certificate.decode()
        if text.startswith("kind=td"):
            text = text.split("\n", 1)[1]
        return parse_designs(text)[0]


def certificate_hash(cert: bytes) -> str:
    """64-bit hex digest of certificate bytes."""
    return hashlib.blake2b(cert, digest_size=8).hexdigest()


def _as_system(design: TripleSystem | TransversalDesign) -> tuple[TripleSystem, str]:
    if isinstance(design, TransversalDesign):
        rep = validate_td(design)
        if not rep.ok:
            raise ValueError(f"invalid transversal design: {rep}")
        pts = design.points
        relab = {x: i for i, x in enumerate(pts)}
        return TripleSystem(len(pts), [[relab[x] for x in t] for t in design.blocks]), "td"
    if not isinstance(design, TripleSystem):
        raise TypeError(f"expected a triple system, got {type(design).__name__}")
    if len(set(design.blocks)) != len(design.blocks) or not design.is_partial:
        raise ValueError("invalid design: some pair lies in two blocks")
    return design, ("sts" if design.is_sts else "partial")


def _pair_colors(ts: TripleSystem, kind: str) -> np.ndarray:
    third = np.ascontiguousarray(ts.third)
    if kind == "sts":
        return _rank_codes(_pair_cycle_codes(third))
    return _rank_codes(_partial_pair_codes(third))


def _cert_text(kind: str, ts: TripleSystem, codes: np.ndarray) -> bytes:
    n = ts.v
    lines = ["kind=td"] if kind == "td" else []
    lines.append(f"v={n}")
    for code in codes:
        code = int(code)
        lines.append(f"{code // (n * n)},{code // n % n},{code % n}")
    return ("\n".join(lines) + "\n").encode()


def canonical_form(design: TripleSystem | TransversalDesign) -> CanonicalRecord:
    """Canonical certificate and automorphism-group order of a triple system.

    Transversal designs are compacted onto ``0..3w-1`` first; their groups
    are the uncovered pairs, so any isomorphism may permute the groups.
    """
    ts, kind = _as_system(design)
    if ts.v > MAX_POINTS:
        raise ValueError(f"canonical_form supports v <= {MAX_POINTS}")
    third = np.ascontiguousarray(ts.third)
    s = _Search(third, _pair_colors(ts, kind), np.ascontiguousarray(ts.array))
    s.run(np.zeros(ts.v, np.int64))
    codes = _cert_codes(s.blocks, s.best_lab, ts.v)
    lab = tuple(int(x) for x in s.best_lab)
    if isinstance(design, TransversalDesign):
        pts = design.points
        lab = tuple(lab[pts.index(x)] if x in pts else -1 for x in range(design.v))
    return CanonicalRecord(_cert_text(kind, ts, codes), s.aut_order, lab)


def canonical_batch(thirds: np.ndarray, blocks: np.ndarray) -> list[tuple[bytes, int]]:
    """Canonical (compact certificate, |Aut|) for a batch of complete STS.

    ``thirds`` is ``(N, v, v)`` and ``blocks`` ``(N, b, 3)``.  The compact
    certificate is the sorted big-endian block-code string used by the class
    store; :func:`canonical_form` on the same system gives the same labeling.
    """
    codes, ok = _canon_batch(thirds, blocks)
    out = []
    for i in range(len(ok)):
        if ok[i]:
            out.append((_codes_to_bytes(codes[i]), 1))
            continue
        third = np.ascontiguousarray(thirds[i])
        s = _Search(third, _rank_codes(_pair_cycle_codes(third)), np.ascontiguousarray(blocks[i]))
        s.run(np.zeros(third.shape[0], np.int64))
        out.append((s.best_cert, s.aut_order))
    return out


def compact_certificate(design: TripleSystem) -> bytes:
    """Store-format certificate of a complete STS (see :func:`canonical_batch`)."""
    ts, kind = _as_system(design)
    third = np.ascontiguousarray(ts.third)
    s = _Search(third, _pair_colors(ts, kind), np.ascontiguousarray(ts.array))
    s.run(np.zeros(ts.v, np.int64))
    return s.best_cert


def decode_compact(cert: bytes, v: int) -> TripleSystem:
    codes = np.frombuffer(cert, dtype=">u2").astype(np.int64)
    return TripleSystem(v, [(c // (v * v), c // v % v, c % v) for c in codes])


def certificate_from_compact(cert: bytes, v: int) -> bytes:
    """Text certificate (as from :func:`canonical_form`) of a compact store certificate."""
    codes = np.frombuffer(cert, dtype=">u2").astype(np.int64)
    return _cert_text("sts", TripleSystem(v, []), codes)


def are_isomorphic(d1: TripleSystem | TransversalDesign, d2: TripleSystem | TransversalDesign) -> bool:
    if isinstance(d1, TransversalDesign) != isinstance(d2, TransversalDesign):
        raise TypeError("cannot compare a transversal design with a triple system")
    return canonical_form(d1).certificate == canonical_form(d2).certificate


def pair_cycle_invariant(ts: TripleSystem) -> tuple[int, ...]:
    """Sorted multiset of pair cycle-type codes of a complete STS."""
    if not ts.is_sts:
        raise ValueError("pair cycle invariant needs a complete STS")
    codes = _pair_cycle_codes(np.ascontiguousarray(ts.third))
    iu = np.triu_indices(ts.v, 1)
    return tuple(sorted(int(x) for x in codes[iu]))


# --------------------------------------------------------------------------
# oracles


BRUTE_FORCE_MAX = 9


def _checked_oracle_input(d) -> TripleSystem:
    ts, _ = _as_system(d)
    if ts.v > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force is limited to v <= {BRUTE_FORCE_MAX}")
    return ts


def brute_force_isomorphic(d1, d2) -> bool:
    """Try all v! bijections (test oracle, v <= 9)."""
    a, b = _checked_oracle_input(d1), _checked_oracle_input(d2)
    if a.v != b.v or len(a.blocks) != len(b.blocks):
        return False
    target = {frozenset(t) for t in b.blocks}
    for p in itertools.permutations(range(a.v)):
        if all(frozenset((p[x], p[y], p[z])) in target for x, y, z in a.blocks):
            return True
    return False


def brute_force_aut_order(design) -> int:
    """Count point permutations fixing the block set (test oracle, v <= 9)."""
    ts = _checked_oracle_input(design)
    v = ts.v
    perms = np.array(list(itertools.permutations(range(v))), dtype=np.int64)
    masks = (1 << perms[:, ts.array]).sum(axis=2)
    valid = np.zeros(1 << v, dtype=bool)
    valid[[t.mask for t in ts.blocks]] = True
    return int(valid[masks].all(axis=1).sum())


def aut_order_orbit_stabilizer(design) -> int:
    """|Aut| as a product of orbit lengths along a base (independent of the search).

    A base is a point sequence whose closure under the third-point map is the
    whole point set, so an automorphism is fixed by the images of the base.
    For each level we count the points onto which the current base point can
    be sent by an automorphism fixing the earlier base points.
    """
    ts, _ = _as_system(design)
    v = ts.v
    third = [[int(x) for x in row] for row in ts.third]
    blocks = {t.mask for t in ts.blocks}
    inv = _point_profiles(ts)

    base: list[int] = []
    closed: set[int] = set()
    for x in range(v):
        if x not in closed:
            base.append(x)
            closed = _closure(third, base)

    def extend(mapping: dict[int, int], level: int) -> bool:
        if level == len(base):
            return _is_automorphism(mapping, ts, blocks, v)
        b = base[level]
        if b in mapping:
            return extend(mapping, level + 1)
        used = set(mapping.values())
        for c in range(v):
            if c in used or inv[c] != inv[b]:
                continue
            m = _propagate(third, mapping, b, c)
            if m is not None and extend(m, level + 1):
                return True
        return False

    order = 1
    fixed: dict[int, int] = {}
    for level, b in enumerate(base):
        if b in fixed:
            continue
        count = 0
        for c in range(v):
            if inv[c] != inv[b] or c in fixed.values():
                continue
            m = _propagate(third, fixed, b, c)
            if m is not None and extend(m, level + 1):
                count += 1
        order *= count
        fixed = _propagate(third, fixed, b, b)
    return order


def _closure(third, pts) -> set[int]:
    s = set(pts)
    grew = True
    while grew:
        grew = False
        for x in list(s):
            for y in list(s):
                t = third[x][y]
                if t >= 0 and t not in s:
                    s.add(t)
                    grew = True
    return s


def _propagate(third, mapping: dict[int, int], b: int, c: int) -> dict[int, int] | None:
    m = dict(mapping)
    if b in m:
        return m if m[b] == c else None
    if c in m.values():
        return None
    m[b] = c
    img = set(m.values())
    queue = [b]
    while queue:
        x = queue.pop()
        for y in list(m):
            if y == x:
                continue
            t, t2 = third[x][y], third[m[x]][m[y]]
            if (t < 0) != (t2 < 0):
                return None
            if t < 0:
                continue
            if t in m:
                if m[t] != t2:
                    return None
            else:
                if t2 in img:
                    return None
                m[t] = t2
                img.add(t2)
                queue.append(t)
    return m


def _is_automorphism(m: dict[int, int], ts: TripleSystem, blocks: set[int], v: int) -> bool:
    if len(m) != v:
        return False
    return all(((1 << m[a]) | (1 << m[b]) | (1 << m[c])) in blocks for a, b, c in ts.blocks)


def _point_profiles(ts: TripleSystem) -> list[tuple[int, int]]:
    """(replication, Pasch configurations through the point) per point."""
    v = ts.v
    third = ts.third
    rep = [0] * v
    for t in ts.blocks:
        for x in t:
            rep[x] += 1
    pasch = [0] * v
    bl = ts.blocks
    # Pasch: 4 blocks on 6 points, every two meeting in one point
    for i, j in itertools.combinations(range(len(bl)), 2):
        bi, bj = bl[i], bl[j]
        common = set(bi) & set(bj)
        if len(common) != 1:
            continue
        (p,) = common
        xi = [x for x in bi if x != p]
        xj = [x for x in bj if x != p]
        for a in xi:
            b = next(x for x in xi if x != a)
            for c in xj:
                d = next(x for x in xj if x != c)
                t1, t2 = third[a, c], third[b, d]
                if t1 >= 0 and t1 == t2:
                    for x in (p, a, b, c, d, t1):
                        pasch[x] += 1
    return [(rep[x], pasch[x]) for x in range(v)]


def relabel_random(design, rng) -> TripleSystem | TransversalDesign:
    """Image of ``design`` under a random permutation of its points."""
    if isinstance(design, TransversalDesign):
        pts = list(design.points)
        img = list(pts)
        rng.shuffle(img)
        perm = list(range(design.v))
        for x, y in zip(pts, img):
            perm[x] = y
        return design.relabel(perm)
    perm = list(range(design.v))
    rng.shuffle(perm)
    return design.relabel(perm)


def labeled_sts7() -> list[TripleSystem]:
    """All 30 STS(7) on the labeled set 0..6 by exhaustive search."""
    from .catalog import enumerate_sts

    return enumerate_sts(7)
