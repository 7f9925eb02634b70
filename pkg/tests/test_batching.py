import numpy as np
import pytest

from tri_retrieve import EmptyInput, InvalidPlan, LengthOutOfRange
from tri_retrieve.batching import (
    FINETUNE_SIZES,
    GROUP_BOUNDS,
    UNSUPERVISED_SIZES,
    LengthGroupTable,
    assign_groups,
    default_table,
    encode_with_split,
    gather_all,
    negative_pool,
    padding_stats,
    plan_epoch,
    random_plan_like,
    split_batch,
)
from tri_retrieve.toy_encoder import ToyEncoderParams, encode


def lognormal_corpus(seed, n=2500, mu=6.2, sigma=0.8):
    rng = np.random.default_rng(seed)
    raw = np.clip(np.rint(rng.lognormal(mu, sigma, size=n)), 1, 8191)
    return {f"d{i:05d}": int(v) for i, v in enumerate(raw)}


def test_group_bounds_shape():
    assert len(GROUP_BOUNDS) == 9
    assert GROUP_BOUNDS[0][0] == 0
    assert GROUP_BOUNDS[-1][1] == 8192
    for (lo, hi), (lo2, _) in zip(GROUP_BOUNDS, GROUP_BOUNDS[1:]):
        assert lo < hi == lo2


def test_default_table_stage_sizes():
    assert default_table("unsupervised").sizes == UNSUPERVISED_SIZES
    assert default_table("finetune").sizes == FINETUNE_SIZES
    assert UNSUPERVISED_SIZES == (67200, 54720, 37248, 27648, 21504, 17280, 15072, 12288, 9984)
    assert FINETUNE_SIZES == (1152, 768, 480, 432, 336, 336, 288, 240, 192)


def test_default_table_divisor():
    assert default_table("finetune", divisor=96).sizes == (12, 8, 5, 4, 3, 3, 3, 2, 2)
    assert default_table("unsupervised", divisor=96).sizes[0] == 700


def test_default_table_errors():
    with pytest.raises(ValueError):
        default_table("unsupervised", divisor=0)
    with pytest.raises(ValueError):
        default_table("pretraining")
    with pytest.raises(ValueError):
        default_table("finetune", divisor=200)


def test_table_validation():
    with pytest.raises(ValueError):
        LengthGroupTable(boundaries=((0, 10), (20, 30)), sizes=(4, 4))
    with pytest.raises(ValueError):
        LengthGroupTable(boundaries=((0, 10), (10, 10)), sizes=(4, 4))
    with pytest.raises(ValueError):
        LengthGroupTable(boundaries=((0, 10),), sizes=(0,))


def test_assign_groups_half_open():
    table = default_table()
    got = assign_groups({"a": 100, "b": 500, "c": 499, "d": 8191}, table)
    assert got == {"a": 0, "b": 1, "c": 0, "d": 8}


def test_assign_groups_out_of_range():
    table = default_table()
    with pytest.raises(LengthOutOfRange) as err:
        assign_groups({"long": 8192}, table)
    assert "long" in str(err.value)
    with pytest.raises(LengthOutOfRange):
        assign_groups({"neg": -1}, table)


def test_plan_epoch_deterministic():
    lengths = lognormal_corpus(0, n=1200)
    table = default_table("unsupervised", divisor=96)
    groups = assign_groups(lengths, table)
    a = plan_epoch(groups, table, seed=7, n_workers=4)
    b = plan_epoch(groups, table, seed=7, n_workers=4)
    assert a == b
    c = plan_epoch(groups, table, seed=8, n_workers=4)
    assert a != c


def test_plan_epoch_step_structure():
    lengths = lognormal_corpus(1, n=1500)
    table = default_table("unsupervised", divisor=96)
    groups = assign_groups(lengths, table)
    workers = 4
    plans = plan_epoch(groups, table, seed=3, n_workers=workers)
    assert len(plans) == workers
    n_steps = len(plans[0].batches)
    assert n_steps > 0
    seen = []
    for i in range(n_steps):
        step = [p.batches[i] for p in plans]
        g = step[0][0]
        # every worker on one group per step, equal shares, homogeneous lengths
        assert all(s[0] == g for s in step)
        share = table.sizes[g] // workers
        for _, ids in step:
            assert len(ids) == share
            assert all(groups[d] == g for d in ids)
            seen.extend(ids)
    assert len(seen) == len(set(seen))


def test_plan_epoch_drops_remainder():
    table = LengthGroupTable(boundaries=((0, 100),), sizes=(4,))
    groups = {f"d{i}": 0 for i in range(10)}
    plans = plan_epoch(groups, table, seed=0, n_workers=2)
    used = [d for _, ids in plans[0].batches for d in ids]
    used += [d for _, ids in plans[1].batches for d in ids]
    assert len(plans[0].batches) == 2
    assert len(used) == 8


def test_plan_epoch_rejects_thin_groups():
    table = LengthGroupTable(boundaries=((0, 100),), sizes=(2,))
    with pytest.raises(InvalidPlan):
        plan_epoch({"a": 0, "b": 0, "c": 0}, table, seed=0, n_workers=3)
    with pytest.raises(ValueError):
        plan_epoch({"a": 0}, table, seed=0, n_workers=0)


def test_padding_stats_hand_values():
    assert padding_stats([[5, 5, 5]]).padding_fraction == 0.0
    stats = padding_stats([[4, 4, 2, 2]])
    assert stats.total_cost == 16
    assert stats.padded == 4
    assert stats.padding_fraction == 0.25
    two = padding_stats([[4, 4], [2, 2]])
    assert two.padding_fraction == 0.0


def test_padding_stats_empty_inputs():
    with pytest.raises(EmptyInput):
        padding_stats([])
    with pytest.raises(EmptyInput):
        padding_stats([[3, 3], []])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grouped_beats_random_padding(seed):
    lengths = lognormal_corpus(seed)
    table = default_table("unsupervised", divisor=96)
    groups = assign_groups(lengths, table)
    plans = plan_epoch(groups, table, seed=seed, n_workers=1)
    batches = [list(ids) for _, ids in plans[0].batches]
    assert batches
    baseline = random_plan_like(batches, seed=seed)
    grouped = padding_stats([[lengths[d] for d in b] for b in batches])
    random_ = padding_stats([[lengths[d] for d in b] for b in baseline])
    assert grouped.padding_fraction < random_.padding_fraction


def test_random_plan_like_preserves_shape_and_docs():
    batches = [["a", "b", "c"], ["d", "e"], ["f"]]
    out = random_plan_like(batches, seed=5)
    assert [len(b) for b in out] == [3, 2, 1]
    assert sorted(d for b in out for d in b) == ["a", "b", "c", "d", "e", "f"]
    assert out == random_plan_like(batches, seed=5)


def test_split_batch_hand_case():
    assert split_batch(list(range(10)), 4) == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]
    assert split_batch(["x"], 3) == [["x"]]
    assert split_batch([], 3) == []
    with pytest.raises(ValueError):
        split_batch([1, 2], 0)


def same_encoding(a, b):
    return (
        np.array_equal(a.cls.values, b.cls.values)
        and a.term_weights.entries == b.term_weights.entries
        and np.array_equal(a.multivec.rows, b.multivec.rows)
        and np.array_equal(a.hidden, b.hidden)
    )


def test_encode_with_split_bit_equal():
    rng = np.random.default_rng(11)
    params = ToyEncoderParams(dim=16, seed=2)
    batch = [
        [int(t) for t in rng.integers(0, 300, size=rng.integers(1, 12))]
        for _ in range(10)
    ]
    whole = [encode(toks, params) for toks in batch]
    for sub_size in (1, 2, 3, 5, 8, len(batch)):
        split = encode_with_split(batch, params, sub_size)
        assert len(split) == len(whole)
        assert all(same_encoding(a, b) for a, b in zip(split, whole))
    assert encode_with_split([], params, 3) == []


def test_gather_all_and_negative_pool():
    per_worker = [[f"w{w}i{i}" for i in range(4)] for w in range(4)]
    gathered = gather_all(per_worker)
    assert len(gathered) == 16
    assert [(g.worker_id, g.position) for g in gathered] == [
        (w, i) for w in range(4) for i in range(4)
    ]
    assert gathered[5].value == "w1i1"
    pool = negative_pool(gathered, worker_id=2, position=3)
    assert len(pool) == 15
    assert all(not (g.worker_id == 2 and g.position == 3) for g in pool)
