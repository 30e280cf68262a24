import itertools

import pytest
from hypothesis import given, settings, strategies as st

from sts21td.core import (
    AG23,
    FANO,
    AlmostSts9,
    LatinSquare,
    TransversalDesign,
    Triple,
    TripleSystem,
    block_through,
    cyclic_square,
    disjoint_blocks,
    format_design,
    latin_to_td,
    parse_design,
    parse_designs,
    td_to_latin,
    validate_sts,
    validate_td,
)

G3 = ((0, 1, 2), (3, 4, 5), (6, 7, 8))
G6 = (tuple(range(3, 9)), tuple(range(9, 15)), tuple(range(15, 21)))


def test_triple_sorts_and_rejects_repeats():
    assert Triple.of(5, 1, 3) == (1, 3, 5)
    assert Triple.from_mask(0b10110) == (1, 2, 4)
    with pytest.raises(ValueError):
        Triple.of(1, 1, 2)


def test_fano_is_sts():
    rep = validate_sts(FANO)
    assert rep.ok and not rep.uncovered and not rep.doubly_covered


def test_empty_v3_reports_uncovered_pair():
    rep = validate_sts(TripleSystem(3, []))
    assert not rep.ok
    assert (0, 1) in rep.uncovered


def test_duplicated_block_gives_three_double_pairs():
    dup = TripleSystem(7, list(FANO.blocks) + [FANO.blocks[0]])
    rep = validate_sts(dup)
    assert not rep.ok
    assert len(rep.doubly_covered) == 3
    assert "duplicate blocks" in rep.messages


def test_point_outside_range_rejected():
    with pytest.raises(ValueError):
        TripleSystem(5, [(0, 1, 5)])


def test_cyclic_order3_td_valid():
    td = latin_to_td(cyclic_square(3), G3)
    assert len(td.blocks) == 9
    assert validate_td(td).ok


def test_td_with_block_removed_misses_pairs():
    td = latin_to_td(cyclic_square(3), G3)
    broken = TransversalDesign(td.groups, td.blocks[1:])
    rep = validate_td(broken)
    assert not rep.ok
    # a removed block leaves its three cross pairs uncovered
    assert len(rep.uncovered) == 3


def test_td_block_inside_group_flagged():
    td = latin_to_td(cyclic_square(3), G3)
    broken = TransversalDesign(td.groups, list(td.blocks[1:]) + [(0, 1, 3)])
    rep = validate_td(broken)
    assert Triple(0, 1, 3) in rep.bad_blocks


def test_repeated_symbol_fails_td():
    cells = [list(r) for r in cyclic_square(6).cells]
    cells[0][1] = cells[0][0]
    td = latin_to_td(LatinSquare(cells), G6)
    assert not validate_td(td).ok


def test_latin_td_roundtrip_order6():
    # Z3 x Z2 table, not isotopic to the cyclic one
    sq = LatinSquare([[(i + j) % 3 + 3 * ((i // 3 + j // 3) % 2) for j in range(6)] for i in range(6)])
    assert sq.is_latin()
    td = latin_to_td(sq, G6)
    assert validate_td(td).ok
    assert td_to_latin(td, G6) == sq


def test_block_through_reads_fano():
    assert block_through(FANO, 0, 1) == (0, 1, 3)
    assert block_through(FANO, 6, 0) == (0, 2, 6)
    for x, y in itertools.permutations(range(7), 2):
        assert block_through(FANO, x, y) == block_through(FANO, y, x)


def test_block_through_needs_sts():
    with pytest.raises(ValueError):
        block_through(TripleSystem(7, FANO.blocks[:-1]), 0, 1)


def test_disjoint_blocks_fano_and_ag23():
    for t in FANO.blocks:
        assert disjoint_blocks(FANO, t) == []
    for t in AG23.blocks:
        d = disjoint_blocks(AG23, t)
        assert len(d) == 2 and not d[0].mask & d[1].mask
    with pytest.raises(ValueError):
        disjoint_blocks(AG23, (0, 1, 3))


def test_almost_sts9_validates():
    blocks = [t for t in AG23.blocks if t != (0, 1, 2)]
    a = AlmostSts9(range(9), blocks, (0, 1, 2))
    assert len(a.blocks) == 11
    with pytest.raises(ValueError):
        AlmostSts9(range(9), blocks, (0, 1, 3))


def test_text_format_roundtrip():
    td = latin_to_td(cyclic_square(3), G3)
    text = format_design(FANO) + "\n" + format_design(td)
    a, b = parse_designs(text)
    assert a == FANO
    assert b == td
    assert format_design(FANO).splitlines()[:2] == ["v=7", "0,1,3"]
    with pytest.raises(ValueError):
        parse_design("0,1,2\n")


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(9)))
def test_relabeling_preserves_sts_counts(perm):
    ts = AG23.relabel(perm)
    assert validate_sts(ts).ok
    assert len(ts.blocks) == 9 * 8 // 6
    reps = [sum(x in t.points for t in ts.blocks) for x in range(9)]
    assert reps == [4] * 9


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(6)), st.permutations(range(6)), st.permutations(range(6)))
def test_isotopic_squares_stay_latin(pr, pc, ps):
    base = cyclic_square(6).cells
    sq = LatinSquare([[ps[base[pr[i]][pc[j]]] for j in range(6)] for i in range(6)])
    td = latin_to_td(sq, G6)
    assert validate_td(td).ok
    assert all(sum(x in t.points for t in td.blocks) == 6 for x in td.points)
    assert td_to_latin(td, G6) == sq
