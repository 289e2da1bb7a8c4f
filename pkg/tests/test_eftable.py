import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaef import oracle
from adaef.eftable import (EfTable, build_table, estimate_ef, first_meeting, lookup_ef, probe_ladder, refresh_table,
                           select_group, update_truth, weighted_average_ef)
from adaef.hnsw import HnswIndex, HnswParams
from adaef.stats import batch_stats, compute_stats, merge_stats, remove_stats


def hand_table(groups, wae, target=0.95, k=10, sizes=None):
    return EfTable(groups=groups, wae=wae, build_target_recall=target, build_k=k, ef_cap=5000,
                   sample_ids=np.arange(1), group_sizes=sizes or {})


@pytest.fixture(scope="module")
def stats(small_data, small_index):
    ds, _ = small_data
    return compute_stats(ds, small_index.metric)


@pytest.fixture(scope="module")
def table(small_index, stats):
    return build_table(small_index, stats, sample_size=120, k=10, target_recall=0.95, seed=4)


def test_probe_ladder():
    assert probe_ladder(10, 5000)[:8] == [10, 13, 15, 20, 30, 40, 50, 60]
    assert probe_ladder(10, 5000)[-1] == 5000
    assert probe_ladder(10, 45) == [10, 13, 15, 20, 30, 40, 45]
    assert probe_ladder(1, 3) == [1, 2, 3]
    assert probe_ladder(7, 7) == [7]
    with pytest.raises(ValueError):
        probe_ladder(10, 5)


def test_wae_hand_formula():
    k = 10
    groups = {1: [(k, 0.99)], 2: [(k, 0.5), (2 * k, 0.97)]}
    assert weighted_average_ef(groups, {1: 150, 2: 50}, 0.95) == 1.25 * k


def test_first_meeting_fallback():
    assert first_meeting([(100, 0.8), (500, 0.9)], 0.99) == 500
    assert first_meeting([(100, 0.8), (500, 0.9)], 0.85) == 500
    assert first_meeting([(100, 0.8), (500, 0.9)], 0.8) == 100


def test_lookup_examples():
    assert lookup_ef(hand_table({5: [(100, 0.90), (200, 0.96)]}, 150), 5.5, 0.95) == 200
    assert lookup_ef(hand_table({5: [(100, 0.97)]}, 150), 5.0, 0.95) == 150
    assert lookup_ef(hand_table({5: [(100, 0.80), (500, 0.90)]}, 150), 5.0, 0.99) == 500
    assert lookup_ef(hand_table({5: [(100, 0.97)]}, 150.2), 5.0, 0.95) == 151


def test_select_group_fallbacks():
    groups = {10: [], 20: [], 40: []}
    assert select_group(groups, 20.7) == 20
    assert select_group(groups, 15.0) == 10
    assert select_group(groups, 16.0) == 20
    assert select_group(groups, 99.0) == 40
    assert select_group(groups, 0.0) == 10
    with pytest.raises(ValueError):
        select_group({}, 3.0)


def test_tiny_complete_graph_saturates_first_rung():
    x = np.random.default_rng(0).normal(size=(12, 5)).astype(np.float32)
    idx = HnswIndex.build(x, HnswParams(m=8, ef_construction=16))
    t = build_table(idx, compute_stats(x, idx.metric), sample_size=12, k=5, target_recall=0.95)
    assert all(row == [(5, 1.0)] for row in t.groups.values())
    assert t.wae == 5


def test_build_invariants(table):
    k = table.build_k
    assert table.wae >= k
    assert sum(table.group_sizes.values()) == len(table.sample_ids) == 120
    ladder = probe_ladder(k, table.ef_cap)
    for key, row in table.groups.items():
        efs = [e for e, _ in row]
        assert efs == ladder[: len(efs)]
        assert all(r < table.build_target_recall for _, r in row[:-1])
        assert row[-1][1] >= table.build_target_recall or efs[-1] == table.ef_cap
    want = sum(table.group_sizes[g] * first_meeting(r, 0.95) for g, r in table.groups.items()) / 120
    assert table.wae == pytest.approx(want)


def test_table_rows_measure_real_recall(table, small_index):
    # rerun one group's first rung and compare with the stored recall
    from adaef.eftable import _proxy_scores, score_group
    scores = _proxy_scores(small_index, compute_stats(small_index.vectors, small_index.metric), table.cfg,
                           table.sample_ids, table.hops)
    key = next(iter(table.groups))
    members = [j for j, s in enumerate(scores) if score_group(s) == key]
    ef, rec = table.groups[key][0]
    got = np.mean([oracle.recall_at_k(small_index.search_fixed(small_index.vectors[table.sample_ids[j]], 10, ef).ids,
                                      table.truth[j], 10) for j in members])
    assert got == pytest.approx(rec)


def test_json_round_trip(tmp_path, table):
    table.save(tmp_path / "t.json")
    back = EfTable.load(tmp_path / "t.json")
    assert back.groups == table.groups and back.wae == table.wae
    assert back.sample_ids.tolist() == table.sample_ids.tolist()
    assert back.truth.tolist() == table.truth.tolist()
    assert back.cfg == table.cfg and back.metric is table.metric and back.group_sizes == table.group_sizes
    (tmp_path / "bad.json").write_text('{"format": "something-else"}')
    with pytest.raises(ValueError):
        EfTable.load(tmp_path / "bad.json")


def test_for_target_matches_lower_target_build(small_index, stats, table):
    low = build_table(small_index, stats, sample_size=120, k=10, target_recall=0.9, seed=4)
    derived = table.for_target(0.9)
    assert derived.wae == pytest.approx(low.wae)
    for score in np.linspace(0, 100, 101):
        for r in (0.8, 0.85, 0.9):
            assert lookup_ef(derived, score, r) == lookup_ef(low.for_target(r), score, r)


def test_build_errors(small_index, stats):
    with pytest.raises(ValueError):
        build_table(small_index, stats, sample_size=small_index.n + 1)
    with pytest.raises(ValueError):
        build_table(small_index, stats, k=20, ef_cap=10)
    ip = compute_stats(small_index.vectors, "ip")
    with pytest.raises(ValueError):
        build_table(small_index, ip)


def test_estimate_ef_requires_sample(table, stats, small_index):
    with pytest.raises(ValueError):
        estimate_ef(small_index.vectors[0], [], 0.9, stats, table)
    with pytest.raises(ValueError):
        estimate_ef(small_index.vectors[0], [0.1], 0.0, stats, table)


CAP = 400


@st.composite
def built_tables(draw):
    """Tables shaped like build_table output: each row climbs the ladder and stops at the
    first rung meeting the build target, or runs on to the cap."""
    target = draw(st.floats(0.5, 1.0))
    ladder = probe_ladder(10, CAP)
    groups, sizes = {}, {}
    for key in draw(st.sets(st.integers(0, 100), min_size=1, max_size=8)):
        recalls = draw(st.lists(st.floats(0, 1), min_size=1, max_size=len(ladder)))
        row = []
        for ef, rec in zip(ladder, recalls):
            row.append((ef, rec))
            if rec >= target:
                break
        if row[-1][1] < target:
            row = [(ef, rec) for ef, rec in zip(ladder, recalls + [0.0] * len(ladder))]
        groups[key] = row
        sizes[key] = draw(st.integers(1, 50))
    t = hand_table(groups, weighted_average_ef(groups, sizes, target), target=target, sizes=sizes)
    t.ef_cap = CAP
    return t


@settings(max_examples=150, deadline=None)
@given(built_tables(), st.floats(0, 100), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_lookup_monotone_in_target_up_to_build_target(t, score, f1, f2):
    lo, hi = sorted((max(f1 * t.build_target_recall, 1e-3), max(f2 * t.build_target_recall, 1e-3)))
    e_lo, e_hi = lookup_ef(t.for_target(lo), score, lo), lookup_ef(t.for_target(hi), score, hi)
    assert e_lo <= e_hi
    probed = {e for row in t.groups.values() for e, _ in row}
    assert e_lo in probed or e_lo == math.ceil(t.for_target(lo).wae)
    assert 10 <= e_lo <= CAP


def test_target_above_build_target_is_best_effort():
    # the row stopped at 0.96 so a 0.99 request falls back to its largest ef, without the WAE floor
    t = hand_table({5: [(10, 0.5), (20, 0.96)]}, 40.0, target=0.95, sizes={5: 1})
    assert lookup_ef(t.for_target(0.95), 5.0, 0.95) == 40
    assert lookup_ef(t.for_target(0.99), 5.0, 0.99) == 20


# -- updates ------------------------------------------------------------------

def _scratch(idx, sample_ids, k):
    return oracle.ground_truth(idx, idx.vectors[sample_ids], k)


def test_incremental_truth_after_far_insert(small_index, table):
    idx = copy.deepcopy(small_index)
    far = np.random.default_rng(0).normal(size=(50, idx.dim)).astype(np.float32) * 100
    far[:, 0] = np.abs(far[:, 0]) + 500
    new = idx.insert(far)
    got = update_truth(idx, table.sample_ids, table.truth, 10, inserted=new)
    np.testing.assert_array_equal(got, _scratch(idx, table.sample_ids, 10))


def test_incremental_truth_after_near_insert_and_delete(small_index, small_data, table):
    idx = copy.deepcopy(small_index)
    rng = np.random.default_rng(1)
    near = idx.vectors[table.sample_ids[:40]] + rng.normal(scale=1e-3, size=(40, idx.dim)).astype(np.float32)
    new = idx.insert(near)
    neighbor_ids = np.unique(table.truth[:30, :3])
    neighbor_ids = np.setdiff1d(neighbor_ids, table.sample_ids)
    idx.delete(neighbor_ids)
    got = update_truth(idx, table.sample_ids, table.truth, 10, inserted=new, deleted=neighbor_ids)
    np.testing.assert_array_equal(got, _scratch(idx, table.sample_ids, 10))


def test_refresh_with_empty_batch_is_identity(small_index, stats, table):
    again = refresh_table(table, small_index, stats)
    assert again.groups == table.groups and again.wae == table.wae
    assert again.sample_ids.tolist() == table.sample_ids.tolist()
    assert again.refreshes == table.refreshes + 1


def test_refresh_replaces_deleted_proxies(small_index, stats, table):
    idx = copy.deepcopy(small_index)
    gone = table.sample_ids[:5]
    removed = batch_stats(idx.vectors[gone], idx.metric, idx.dim, prepared=True)
    idx.delete(gone)
    new_stats = remove_stats(stats, removed)
    fresh = refresh_table(table, idx, new_stats, deleted=gone)
    assert len(fresh.sample_ids) == len(table.sample_ids)
    assert not set(fresh.sample_ids.tolist()) & set(gone.tolist())
    assert idx.live_mask[fresh.sample_ids].all()
    np.testing.assert_array_equal(fresh.truth, _scratch(idx, fresh.sample_ids, 10))


def test_refresh_after_insert_uses_merged_stats(small_index, small_data, stats, table):
    idx = copy.deepcopy(small_index)
    batch = np.random.default_rng(5).normal(size=(100, idx.dim)).astype(np.float32)
    new = idx.insert(batch)
    merged = merge_stats(stats, batch_stats(batch, idx.metric))
    fresh = refresh_table(table, idx, merged, inserted=new)
    np.testing.assert_array_equal(fresh.truth, _scratch(idx, fresh.sample_ids, 10))
    assert fresh.wae >= 10
