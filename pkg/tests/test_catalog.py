import itertools

import pytest

from sts21td.canonical import are_isomorphic, canonical_form
from sts21td.catalog import (
    TD_GROUPS,
    Sts9Family,
    align_representative,
    all_latin_squares,
    conjugates,
    enumerate_main_classes,
    main_class_lexmin,
    reduced_latin_squares,
    sts9_with_blocks,
    subtd33_structure,
)
from sts21td.assembler import FRAME
from sts21td.core import (
    LatinSquare,
    TransversalDesign,
    TripleSystem,
    cyclic_square,
    disjoint_blocks,
    latin_to_td,
    validate_sts,
    validate_td,
)

# frozen catalog facts (computed once and cross-checked against known counts
# of latin squares: 12, 576, 161280, 812851200 for n = 3..6)
MAIN_CLASS_AUTS_6 = [432, 144, 72, 8, 1296, 48, 24, 240, 24, 16, 24, 648]
SPLITTING_REPS = [0, 2, 4, 11]


def test_family_sizes(sts9_family):
    assert len(sts9_family.all) == 840
    assert len(set(s.blocks for s in sts9_family.all)) == 840
    assert all(validate_sts(TripleSystem(9, s.blocks)).ok for s in sts9_family.all)
    for t in itertools.combinations(range(9), 3):
        assert len(sts9_family.with_block(t)) == 120
    assert len(sts9_family.with_blocks((0, 1, 2), (3, 4, 5), (6, 7, 8))) == 12


def test_two_disjoint_triples_force_the_third(sts9_family):
    # the complement of two disjoint blocks of an STS(9) is a block, so
    # fixing two disjoint triples is the same as fixing three
    two = sts9_family.with_blocks((0, 1, 2), (3, 4, 5))
    brute = [s for s in sts9_family.all if {(0, 1, 2), (3, 4, 5)} <= set(s.blocks)]
    assert two == brute
    assert len(two) == 12


def test_overlapping_required_triples_rejected(sts9_family):
    with pytest.raises(ValueError):
        sts9_with_blocks(sts9_family.all, [(0, 1, 2), (2, 3, 4)])


def test_almost_members(sts9_family):
    almost = sts9_family.almost((0, 1, 2))
    assert len(almost) == 120
    for a in almost:
        assert len(a.blocks) == 11
        assert validate_sts(TripleSystem(9, [*a.blocks, a.missing])).ok


def test_relabeled_family_on_petal_support(sts9_family):
    fam = sts9_family.relabeled(FRAME.part_support(1))
    assert fam.support == (0, 1, 2, 9, 10, 11, 12, 13, 14)
    assert len(fam.with_block((0, 1, 2))) == 120
    assert len(fam.with_blocks((0, 1, 2), (9, 10, 11), (12, 13, 14))) == 12


def test_disjoint_block_proposition_exhaustive(sts9_family):
    for s in sts9_family.all:
        ts = TripleSystem(9, s.blocks)
        for t in ts.blocks:
            d = disjoint_blocks(ts, t)
            assert len(d) == 2 and not d[0].mask & d[1].mask
            groups = [t.points, d[0].points, d[1].points]
            rest = [b for b in ts.blocks if b not in (t, *d)]
            assert validate_td(TransversalDesign(groups, rest)).ok


def test_reduced_square_counts():
    # reduced latin squares of orders 1..5: 1, 1, 1, 4, 56
    assert [len(reduced_latin_squares(n)) for n in range(1, 6)] == [1, 1, 1, 4, 56]


@pytest.mark.parametrize("n,classes,total", [(3, 1, 12), (4, 2, 576), (5, 2, 161280)])
def test_small_main_classes(n, classes, total):
    cat = enumerate_main_classes(n)
    assert len(cat.representatives) == classes
    assert cat.total_squares() == total
    assert len(all_latin_squares(n)) == total


def test_order3_single_class_brute_force():
    squares = all_latin_squares(3)
    assert len(squares) == 12
    g = ((0, 1, 2), (3, 4, 5), (6, 7, 8))
    tds = [latin_to_td(s, g) for s in squares]
    assert all(are_isomorphic(tds[0], t) for t in tds)


def test_order4_classes_match_lexmin_partition():
    # brute force: group all 576 squares by their lexicographically least
    # main-class member
    reps = {main_class_lexmin(s) for s in all_latin_squares(4)}
    cat = enumerate_main_classes(4)
    assert reps == set(cat.squares)


def test_conjugates_are_latin():
    sq = LatinSquare([[(i + j) % 3 + 3 * ((i // 3 + j // 3) % 2) for j in range(6)] for i in range(6)])
    conj = conjugates(sq)
    assert len(conj) == 6
    assert all(c.is_latin() for c in conj)


def test_td36_catalog(td36):
    assert len(td36.representatives) == 12
    assert td36.aut_orders == MAIN_CLASS_AUTS_6
    assert td36.total_squares() == 812851200
    for td in td36.representatives:
        assert validate_td(td).ok
        assert td.groups == TD_GROUPS
    certs = [canonical_form(td).certificate for td in td36.representatives]
    assert len(set(certs)) == 12
    # representative = lexicographically least member of its class
    for sq in td36.squares:
        assert main_class_lexmin(sq) == sq
    assert [i for i, p in enumerate(td36.splittable) if p] == SPLITTING_REPS


def _brute_subtd33(td):
    g0, g1, g2 = td.groups
    third = {}
    for t in td.blocks:
        r, c, s = (next(x for x in t.points if x in g) for g in (g0, g1, g2))
        third[(r, c)] = s
    found = []
    for r in itertools.combinations(g0, 3):
        for c in itertools.combinations(g1, 3):
            syms = {third[(x, y)] for x in r for y in c}
            if len(syms) == 3:
                found.append((r, c, tuple(sorted(syms))))
    return found


def test_cyclic6_has_subsquares():
    # Z6 has the subgroup {0, 2, 4}; its cosets give four 3x3 subsquares
    td = latin_to_td(cyclic_square(6), TD_GROUPS)
    parts = subtd33_structure(td)
    assert len(parts) == 1
    assert sorted(m.groups for m in parts[0]) == sorted(_brute_subtd33(td))


def test_subtd33_partitions_of_four(td36):
    for td in td36.representatives:
        subs = _brute_subtd33(td)
        parts = subtd33_structure(td)
        # every sub-TD(3,3) lies in exactly one partition of four
        listed = [m.groups for p in parts for m in p]
        assert sorted(listed) == sorted(subs)
        for p in parts:
            assert len(p) == 4
            (r0, c0, s0) = p[0].groups
            r1 = tuple(x for x in td.groups[0] if x not in r0)
            c1 = tuple(x for x in td.groups[1] if x not in c0)
            s1 = tuple(x for x in td.groups[2] if x not in s0)
            assert {m.groups for m in p} == {(r0, c0, s0), (r0, c1, s1), (r1, c0, s1), (r1, c1, s0)}


def test_block_diagonal_square_splits():
    sq = LatinSquare([[(i + j) % 3 + 3 * ((i // 3 + j // 3) % 2) for j in range(6)] for i in range(6)])
    parts = subtd33_structure(latin_to_td(sq, TD_GROUPS))
    assert parts and all(len(p) == 4 for p in parts)


def test_align_representative(td36):
    s = FRAME.sets
    want = {(s["010"], s["100"], s["110"]), (s["010"], s["101"], s["111"]),
            (s["011"], s["100"], s["111"]), (s["011"], s["101"], s["110"])}
    for i, td in enumerate(td36.representatives):
        al = align_representative(td)
        if i not in SPLITTING_REPS:
            assert al == td
            continue
        assert are_isomorphic(al, td)
        parts = subtd33_structure(al)
        assert {m.groups for m in parts[0]} == want
