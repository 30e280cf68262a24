import itertools

import numpy as np
import pytest

from sts21td.assembler import (
    FRAME,
    AssemblyContext,
    ClassificationRecord,
    CheckpointError,
    PipelineInterrupted,
    _flowers_exhaustive,
    _flowers_kernel,
    aligned_variants,
    assemble,
    candidate_stream,
    count_sub_sts9,
    find_flowers,
    flower_td,
    predict_tau,
    read_records,
    run_pipeline,
    write_records,
)
from sts21td.core import AlmostSts9, TripleSystem, validate_sts
from sts21td.validate import TABLE1

SPLITTING_REPS = [0, 2, 4, 11]
STEM = (0, 1, 2)


@pytest.fixture(scope="module")
def contexts(td36):
    return {i: AssemblyContext(aligned_variants(td, "full")[0]) for i, td in enumerate(td36.representatives)}


def _sample(ctx, pattern, k=5, seed=0):
    la, lb, lc = ctx.pattern_lists(pattern)
    rng = np.random.default_rng(seed)
    return [(int(rng.integers(len(la))), int(rng.integers(len(lb))), int(rng.integers(len(lc)))) for _ in range(k)]


def test_frame_partitions_points():
    pts = sorted(x for s in FRAME.sets.values() for x in s)
    assert pts == list(range(21))
    assert all(len(s) == 3 for s in FRAME.sets.values())
    # unions of frame sets, never intersections: petals have six points
    assert [len(p) for p in FRAME.petals] == [6, 6, 6]
    assert len(FRAME.fano_lines()) == 7


def test_full_candidate_count(contexts):
    for ctx in contexts.values():
        assert ctx.count("full") == 120 ** 3 + 3 * 720 * 120 ** 2 == 32_832_000


def test_tau_mode_counts(contexts):
    for i, ctx in contexts.items():
        if i in SPLITTING_REPS:
            assert ctx.count("tau_eq_7") == 12 ** 3
            assert ctx.count("tau_ge_3") == 3 * 12 * 12 * 108 + 12 ** 3 + 3 * 720 * 144
        else:
            assert ctx.count("tau_eq_7") == 0
            assert ctx.count("tau_ge_3") == 0


def test_tau7_stream_empty_for_non_splitting(td36):
    assert list(candidate_stream(td36.representatives[1], "tau_eq_7")) == []


def test_stream_prefix_valid(td36):
    td = aligned_variants(td36.representatives[0], "tau_eq_7")[0]
    stream = candidate_stream(td, "tau_eq_7")
    for sts in itertools.islice(stream, 20):
        assert validate_sts(sts).ok
        assert set(td.blocks) <= sts.block_set
        assert len(sts.blocks) == 70


def test_samples_of_every_pattern_valid(contexts):
    for i, ctx in contexts.items():
        for p in range(4):
            for a, b, c in _sample(ctx, p, 3, seed=i * 4 + p):
                sts = ctx.system(p, a, b, c)
                assert validate_sts(sts).ok
                assert (STEM in sts.block_set) == (p == 0)
                assert set(ctx.td.blocks) <= sts.block_set


def test_batch_tables_match_systems(contexts):
    ctx = contexts[2]
    for p in range(4):
        pairs = ctx.unit_pairs("full", p, 7)[:50]
        th, bl = ctx.batch(p, 7, pairs)
        for k in (0, 17, 49):
            sts = ctx.system(p, 7, *map(int, pairs[k]))
            assert np.array_equal(th[k], sts.third)
            assert sorted(map(tuple, bl[k])) == sorted(sts.blocks)


def test_assemble_patterns(contexts):
    ctx = contexts[0]
    la, lb, lc = ctx.pattern_lists(0)
    sts = assemble(ctx.td, la.blocks[3], lb.blocks[5], lc.blocks[8])
    assert validate_sts(sts).ok and len(sts.blocks) == 70
    ra, _, _ = ctx.pattern_lists(1)
    sts = assemble(ctx.td, ra.blocks[10], lb.blocks[5], lc.blocks[8])
    assert STEM not in sts.block_set
    # a part missing some other triple leaves stem pairs uncovered
    fam = ctx.lists[1]["rest"].blocks[0]
    wrong = AlmostSts9(FRAME.part_support(1), fam[1:], fam[0])
    with pytest.raises(ValueError):
        assemble(ctx.td, la.blocks[3], wrong.blocks, lc.blocks[8])
    # two parts covering the stem pairs
    with pytest.raises(ValueError):
        assemble(ctx.td, la.blocks[3], ctx.lists[1]["full"].blocks[0], lc.blocks[8])


def test_frame_flower_found(contexts):
    ctx = contexts[4]
    for p in range(4):
        for a, b, c in _sample(ctx, p, 2, seed=p):
            sts = ctx.system(p, a, b, c)
            flowers = find_flowers(sts)
            assert len(flowers) in (1, 3, 7)
            mine = [f for f in flowers if f.stem == STEM]
            assert len(mine) == 1
            assert set(mine[0].petals) == {tuple(sorted(x)) for x in FRAME.petals}
            assert mine[0].stem_is_block == (p == 0)
            if p:
                assert mine[0].sts_petals == (p - 1,)


def test_fast_flower_kernel_equals_exhaustive(contexts):
    for i in (0, 3, 11):
        ctx = contexts[i]
        for p in range(4):
            for a, b, c in _sample(ctx, p, 3, seed=100 + i + p):
                sts = ctx.system(p, a, b, c)
                assert np.array_equal(_flowers_exhaustive(sts.third), _flowers_kernel(sts.third, sts.array))


def test_flower_invariants(tau7_run):
    for rec in tau7_run.records:
        sts = rec.system()
        flowers = find_flowers(sts)
        assert len(flowers) == 7
        for f, g in itertools.combinations(flowers, 2):
            assert not set(f.stem.points) & set(g.stem.points)
            assert set(f.supports()) & set(g.supports())
        for f in flowers:
            td = flower_td(sts, f)
            assert len(td.blocks) == 36
            assert predict_tau(sts, f, td) == 7


def test_fano_structure_of_seven_flowers(contexts):
    # in a tau6 = 7 system built on the frame, every stem+petal support is a
    # union of three frame sets lying on a line of the Fano plane
    ctx = contexts[0]
    inv = {x: k for k, s in FRAME.sets.items() for x in s}
    lines = set(FRAME.fano_lines())
    a = int(np.nonzero(ctx.lists[0]["full"].cond)[0][0])
    pairs = ctx.unit_pairs("tau_eq_7", 0, a)
    for b, c in pairs[:5]:
        sts = ctx.system(0, a, int(b), int(c))
        supports = {frozenset(s) for f in find_flowers(sts) for s in f.supports()}
        assert len(supports) == 7
        labels = {frozenset(inv[x] for x in s) for s in supports}
        assert labels == lines


def test_sub_sts9_counts(contexts):
    ctx = contexts[0]
    a = int(np.nonzero(ctx.lists[0]["full"].cond)[0][0])
    b, c = ctx.unit_pairs("tau_eq_7", 0, a)[0]
    n, sups = count_sub_sts9(ctx.system(0, a, int(b), int(c)))
    assert n == 7
    for s, t in itertools.combinations(sups, 2):
        assert len(set(s) & set(t)) == 3
    # a non-splitting TD gives a single flower: 3 sub-STS(9) when the stem is
    # a block, 1 otherwise
    ctx = contexts[1]
    assert count_sub_sts9(ctx.system(0, 0, 0, 0))[0] == 3
    assert count_sub_sts9(ctx.system(2, 0, 0, 0))[0] == 1
    assert len(find_flowers(ctx.system(2, 0, 0, 0))) == 1


def test_predict_tau_cases(contexts):
    ctx = contexts[1]
    sts = ctx.system(1, 5, 6, 7)
    assert predict_tau(sts, ctx.base_flower) == 1
    ctx = contexts[11]
    la, lb, lc = ctx.pattern_lists(0)
    ta, tb = int(np.nonzero(la.cond)[0][0]), int(np.nonzero(lb.cond)[0][0])
    fc = int(np.nonzero(~lc.cond)[0][0])
    tc = int(np.nonzero(lc.cond)[0][0])
    for c, want in ((fc, 3), (tc, 7)):
        sts = ctx.system(0, ta, tb, c)
        f = [f for f in find_flowers(sts) if f.stem == STEM][0]
        assert predict_tau(sts, f) == want == len(find_flowers(sts))


def test_predict_tau_rejects_foreign_td(contexts, td36):
    ctx = contexts[0]
    sts = ctx.system(0, 0, 0, 0)
    other = contexts[1].td
    with pytest.raises(ValueError):
        predict_tau(sts, ctx.base_flower, other)


def test_tau7_pipeline(tau7_run):
    recs = tau7_run.records
    assert len(recs) == 12
    assert sorted(r.aut_order for r in recs) == [6, 8, 9, 12, 14, 16, 18, 18, 54, 108, 504, 1008]
    assert all(r.tau6 == 7 and r.sigma9 == 7 for r in recs)
    assert sum(r.resolvable for r in recs) == 5
    assert tau7_run.stats.candidates == 4 * 1728
    assert tau7_run.stats.lemma_failures == []
    assert tau7_run.stats.tau_histogram == {7: 6912}
    certs = [r.blocks for r in recs]
    assert len(set(certs)) == 12
    col = TABLE1[(7, 7)]
    assert sum(n for n, _ in col.values()) == 12


def test_pipeline_thread_count_invariant(tau7_run, td36):
    two = run_pipeline("tau_eq_7", thread_count=2, catalog=td36)
    assert [r.to_json() for r in two.records] == [r.to_json() for r in tau7_run.records]


def test_checkpoint_resume(tmp_path, tau7_run, td36):
    ck = tmp_path / "ck"
    with pytest.raises(PipelineInterrupted):
        run_pipeline("tau_eq_7", checkpoint_dir=ck, catalog=td36, max_units=7, checkpoint_every=500)
    res = run_pipeline("tau_eq_7", checkpoint_dir=ck, catalog=td36)
    assert [r.to_json() for r in res.records] == [r.to_json() for r in tau7_run.records]
    # warm rerun is byte-identical and does no new work
    again = run_pipeline("tau_eq_7", checkpoint_dir=ck, catalog=td36)
    assert [r.to_json() for r in again.records] == [r.to_json() for r in res.records]


def test_checkpoint_corruption_detected(tmp_path, td36):
    ck = tmp_path / "ck"
    with pytest.raises(PipelineInterrupted):
        run_pipeline("tau_eq_7", checkpoint_dir=ck, catalog=td36, max_units=3, checkpoint_every=1)
    data = bytearray((ck / "store.bin").read_bytes())
    data[5] ^= 0xFF
    (ck / "store.bin").write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        run_pipeline("tau_eq_7", checkpoint_dir=ck, catalog=td36)
    with pytest.raises(CheckpointError):
        run_pipeline("tau_ge_3", checkpoint_dir=ck, catalog=td36)


def test_record_roundtrip(tmp_path, tau7_run):
    path = tmp_path / "r.jsonl"
    write_records(path, tau7_run.records)
    back = read_records(path)
    assert back == tau7_run.records
    assert isinstance(back[0], ClassificationRecord)
    assert isinstance(back[0].system(), TripleSystem)
