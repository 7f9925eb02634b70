import math

import numpy as np
import pytest

from tri_retrieve import DimensionMismatch, InvalidTemperature
from tri_retrieve.core import FusionWeights
from tri_retrieve.distill import (
    CandidateScores,
    LossWeights,
    compute_losses,
    finite_difference_check,
    info_nce,
    integrate,
    loss_gradients,
    soft_cross_entropy,
)

# independent closed forms for the frozen instances
LOG_1P_E_MINUS_1 = math.log1p(math.exp(-1.0))
LOG_Z_210 = math.log(math.exp(2.0) + math.exp(1.0) + 1.0)


def ref_entropy(scores, tau):
    z = np.asarray(scores, dtype=np.float64) / tau
    p = np.exp(z - z.max())
    p /= p.sum()
    return float(-(p * np.log(p)).sum())


def random_cs(rng, n=None, tau=1.0):
    n = n or int(rng.integers(2, 17))
    return CandidateScores(
        dense=rng.normal(size=n),
        lex=rng.normal(size=n),
        mul=rng.normal(size=n),
        target_index=int(rng.integers(n)),
        temperature=tau,
    )


def test_info_nce_two_point_closed_form():
    assert abs(info_nce([1.0, 0.0], 0, 1.0) - LOG_1P_E_MINUS_1) < 1e-12
    assert abs(info_nce([1.0, 0.0], 0, 1.0) - 0.31326168751822286) < 1e-12


def test_info_nce_three_point_closed_form():
    assert abs(info_nce([2.0, 1.0, 0.0], 0, 1.0) - (LOG_Z_210 - 2.0)) < 1e-12
    assert abs(info_nce([2.0, 1.0, 0.0], 0, 1.0) - 0.4076059644443804) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 7])
def test_info_nce_uniform_is_log_n(n):
    assert abs(info_nce([0.7] * n, n - 1, 0.05) - math.log(n)) < 1e-12


def test_info_nce_survives_extreme_scores():
    # max-shifted log-sum-exp must not overflow
    v = info_nce([1000.0, 0.0], 1, 0.05)
    assert math.isfinite(v) and v > 0


def test_info_nce_validation():
    with pytest.raises(InvalidTemperature):
        info_nce([1.0, 0.0], 0, 0.0)
    with pytest.raises(InvalidTemperature):
        info_nce([1.0, 0.0], 0, -1.0)
    with pytest.raises(InvalidTemperature):
        info_nce([1.0, 0.0], 0, float("nan"))
    with pytest.raises(ValueError):
        info_nce([1.0], 0, 1.0)
    with pytest.raises(ValueError):
        info_nce([1.0, 0.0], 2, 1.0)


def test_integrate_hand_value():
    cs = CandidateScores(
        dense=[0.5, 0.0], lex=[0.2, 0.0], mul=[0.7, 0.0], target_index=0
    )
    out = integrate(cs, FusionWeights(1, 0.3, 1))
    assert abs(out[0] - 1.26) < 1e-12 and out[1] == 0.0


def test_integrate_single_weight_returns_that_vector():
    rng = np.random.default_rng(0)
    cs = random_cs(rng, n=6)
    assert np.array_equal(integrate(cs, FusionWeights(1, 0, 0)), cs.dense)


def test_candidate_scores_validation():
    with pytest.raises(DimensionMismatch):
        CandidateScores(dense=[1, 0], lex=[1, 0, 0], mul=[1, 0], target_index=0)
    with pytest.raises(ValueError):
        CandidateScores(dense=[1, 0], lex=[1, 0], mul=[1, 0], target_index=2)
    with pytest.raises(InvalidTemperature):
        CandidateScores(dense=[1, 0], lex=[1, 0], mul=[1, 0], target_index=0, temperature=0)


def test_soft_ce_self_is_entropy():
    got = soft_cross_entropy([2.0, 1.0, 0.0], [2.0, 1.0, 0.0], 1.0)
    assert abs(got - ref_entropy([2.0, 1.0, 0.0], 1.0)) < 1e-12
    assert abs(got - 0.8323955818399389) < 1e-12


def test_soft_ce_delta_teacher_is_info_nce():
    rng = np.random.default_rng(2)
    for _ in range(20):
        student = rng.normal(size=5)
        got = soft_cross_entropy([1e9, 0, 0, 0, 0], student, 1.0)
        assert abs(got - info_nce(student, 0, 1.0)) < 1e-6


def test_soft_ce_gibbs_inequality():
    rng = np.random.default_rng(3)
    for _ in range(50):
        teacher = rng.normal(size=6)
        student = rng.normal(size=6)
        tau = float(rng.uniform(0.05, 2.0))
        got = soft_cross_entropy(teacher, student, tau)
        assert got - ref_entropy(teacher, tau) >= -1e-12


def test_soft_ce_validation():
    with pytest.raises(DimensionMismatch):
        soft_cross_entropy([1, 0], [1, 0, 0], 1.0)
    with pytest.raises(InvalidTemperature):
        soft_cross_entropy([1, 0], [1, 0], 0.0)


def test_breakdown_combination_identities():
    rng = np.random.default_rng(4)
    lw = LossWeights()
    for _ in range(25):
        cs = random_cs(rng, tau=float(rng.uniform(0.05, 1.5)))
        bd = compute_losses(cs, lw)
        t, tau = cs.target_index, cs.temperature
        assert abs(bd.L_dense - info_nce(cs.dense, t, tau)) < 1e-12
        assert abs(bd.L_lex - info_nce(cs.lex, t, tau)) < 1e-12
        assert abs(bd.L_mul - info_nce(cs.mul, t, tau)) < 1e-12
        s_inter = integrate(cs, lw.w)
        assert abs(bd.L_inter - info_nce(s_inter, t, tau)) < 1e-12
        assert abs(
            bd.L - (bd.L_dense + 0.1 * bd.L_lex + bd.L_mul + bd.L_inter) / 4.0
        ) < 1e-12
        assert abs(bd.Lp_dense - soft_cross_entropy(s_inter, cs.dense, tau)) < 1e-12
        assert abs(bd.Lp - (bd.Lp_dense + 0.1 * bd.Lp_lex + bd.Lp_mul) / 3.0) < 1e-12
        assert abs(bd.L_final - (bd.L + bd.Lp) / 2.0) < 1e-12
        for field in ("L_dense", "L_lex", "L_mul", "L_inter", "L",
                      "Lp_dense", "Lp_lex", "Lp_mul", "Lp", "L_final"):
            assert getattr(bd, field) >= 0.0


def test_teacher_override_changes_only_distillation_terms():
    rng = np.random.default_rng(5)
    cs = random_cs(rng, n=8)
    base = compute_losses(cs)
    other = compute_losses(cs, teacher_scores=rng.normal(size=8))
    assert base.L == other.L
    assert base.Lp != other.Lp
    assert abs(other.L_final - (other.L + other.Lp) / 2.0) < 1e-12


def test_constructed_instance_hits_stated_totals():
    # one 3-candidate vector with -log softmax[0] = 1 and entropy 0.8324:
    # index 0 carries probability 1/e, the tail split is found by bisection
    tail_mass = 1.0 - 1.0 / math.e
    want_tail = 0.8324 - 1.0 / math.e

    def tail_entropy(q1):
        q2 = tail_mass - q1
        return -(q1 * math.log(q1) + q2 * math.log(q2))

    lo, hi = tail_mass / 2.0, tail_mass - 1e-12
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if tail_entropy(mid) > want_tail:
            lo = mid
        else:
            hi = mid
    q1 = (lo + hi) / 2.0
    s = [-1.0, math.log(q1), math.log(tail_mass - q1)]

    cs = CandidateScores(dense=s, lex=s, mul=s, target_index=0, temperature=1.0)
    bd = compute_losses(cs, LossWeights(w=FusionWeights(1, 0, 0)))
    assert abs(bd.L_dense - 1.0) < 1e-12
    assert abs(bd.L - 0.775) < 1e-9
    assert abs(bd.Lp - 0.58268) < 1e-9
    assert abs(bd.L_final - 0.67884) < 1e-9


def test_distillation_minimum_at_teacher_distribution():
    # descend Lp only, teacher pinned; optimum is softmax match (KL -> 0)
    rng = np.random.default_rng(6)
    tau = 0.5
    teacher = rng.normal(size=5)
    t_ent = ref_entropy(teacher, tau)
    student = rng.normal(size=5)
    p = np.exp(teacher / tau - (teacher / tau).max())
    p /= p.sum()
    kl = float("inf")
    for _ in range(200000):
        z = student / tau
        q = np.exp(z - z.max())
        q /= q.sum()
        student = student - 0.3 * (q - p) / tau
        kl = soft_cross_entropy(teacher, student, tau) - t_ent
        if abs(kl) < 1e-7:
            break
    assert abs(kl) < 1e-6


def test_gradients_sum_to_zero_per_method():
    rng = np.random.default_rng(7)
    for _ in range(20):
        g = loss_gradients(random_cs(rng, tau=float(rng.uniform(0.05, 1.5))))
        for vec in (g.dense, g.lex, g.mul):
            assert abs(vec.sum()) < 1e-12


def test_finite_difference_agreement():
    rng = np.random.default_rng(8)
    taus = [0.05, 0.2, 1.0]
    for i in range(20):
        cs = random_cs(rng, tau=taus[i % 3])
        assert finite_difference_check(cs) < 1e-5
