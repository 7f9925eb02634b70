"""Self-distillation loss stack for the three retrieval heads.

Given one candidate list per query (positive first among arbitrary
negatives), each retrieval method m in {dense, lex, mul} contributes a
score vector s_m. The stack combines:

    L_m       InfoNCE of s_m against the target index
    s_inter   elementwise weighted sum of the three score vectors
    L_inter   InfoNCE of s_inter
    L         (l1*L_dense + l2*L_lex + l3*L_mul + L_inter) / 4
    Lp_m      soft cross-entropy, teacher softmax(s_inter/tau) vs
              student softmax(s_m/tau); the teacher is a constant
              (no gradient flows through it)
    Lp        (l1*Lp_dense + l2*Lp_lex + l3*Lp_mul) / 3
    L_final   (L + Lp) / 2

One temperature is shared by every softmax in the stack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import FusionWeights
from .errors import DimensionMismatch, InvalidTemperature

__all__ = [
    "CandidateScores",
    "LossWeights",
    "LossBreakdown",
    "GradientSet",
    "DEFAULT_TEMPERATURE",
    "DEFAULT_LOSS_WEIGHTS",
    "info_nce",
    "integrate",
    "soft_cross_entropy",
    "compute_losses",
    "loss_gradients",
    "finite_difference_check",
]

DEFAULT_TEMPERATURE = 0.05


def _check_tau(tau: float) -> float:
    if not np.isfinite(tau) or tau <= 0.0:
        raise InvalidTemperature(f"temperature must be > 0, got {tau!r}")
    return float(tau)


def _score_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"{name} scores must be a vector of length >= 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} scores contain non-finite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class CandidateScores:
    """Per-method scores over one candidate list [positive, negatives...]."""

    dense: np.ndarray
    lex: np.ndarray
    mul: np.ndarray
    target_index: int
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        dense = _score_vector(self.dense, "dense")
        lex = _score_vector(self.lex, "lex")
        mul = _score_vector(self.mul, "mul")
        if not (dense.size == lex.size == mul.size):
            raise DimensionMismatch(
                f"score vectors differ in length: {dense.size}/{lex.size}/{mul.size}"
            )
        if not 0 <= self.target_index < dense.size:
            raise ValueError(f"target_index {self.target_index} outside [0, {dense.size})")
        _check_tau(self.temperature)
        object.__setattr__(self, "dense", dense)
        object.__setattr__(self, "lex", lex)
        object.__setattr__(self, "mul", mul)

    @property
    def length(self) -> int:
        return int(self.dense.size)


@dataclass(frozen=True)
class LossWeights:
    """Integration weights w and per-method loss weights lambda."""

    w: FusionWeights = FusionWeights(1.0, 0.3, 1.0)
    lambda_dense: float = 1.0
    lambda_lex: float = 0.1
    lambda_mul: float = 1.0

    def __post_init__(self):
        for name in ("lambda_dense", "lambda_lex", "lambda_mul"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


DEFAULT_LOSS_WEIGHTS = LossWeights()


@dataclass(frozen=True)
class LossBreakdown:
    L_dense: float
    L_lex: float
    L_mul: float
    L_inter: float
    L: float
    Lp_dense: float
    Lp_lex: float
    Lp_mul: float
    Lp: float
    L_final: float


@dataclass(frozen=True, eq=False)
class GradientSet:
    """d L_final / d score, one vector per method."""

    dense: np.ndarray
    lex: np.ndarray
    mul: np.ndarray


def _log_softmax(scores: np.ndarray, tau: float) -> np.ndarray:
    z = scores / tau
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softmax(scores: np.ndarray, tau: float) -> np.ndarray:
    return np.exp(_log_softmax(scores, tau))


def info_nce(scores, target: int, tau: float) -> float:
    """-log softmax(scores/tau)[target], via max-shifted log-sum-exp."""
    tau = _check_tau(tau)
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"scores must be a vector of length >= 2, got shape {arr.shape}")
    if not 0 <= target < arr.size:
        raise ValueError(f"target {target} outside [0, {arr.size})")
    return float(-_log_softmax(arr, tau)[target])


def integrate(cs: CandidateScores, w: FusionWeights) -> np.ndarray:
    """Elementwise w1*dense + w2*lex + w3*mul over the candidate list."""
    return w.w_dense * cs.dense + w.w_lex * cs.lex + w.w_mul * cs.mul


def soft_cross_entropy(teacher_scores, student_scores, tau: float) -> float:
    """-sum softmax(teacher/tau) * log softmax(student/tau)."""
    tau = _check_tau(tau)
    teacher = np.asarray(teacher_scores, dtype=np.float64)
    student = np.asarray(student_scores, dtype=np.float64)
    if teacher.shape != student.shape:
        raise DimensionMismatch(f"teacher/student shapes differ: {teacher.shape} vs {student.shape}")
    return float(-np.dot(_softmax(teacher, tau), _log_softmax(student, tau)))


def compute_losses(
    cs: CandidateScores,
    lw: LossWeights = DEFAULT_LOSS_WEIGHTS,
    teacher_scores: Optional[np.ndarray] = None,
) -> LossBreakdown:
    """Evaluate the full loss stack on one candidate list.

    teacher_scores overrides the distillation teacher; by default the
    teacher is the integrated vector of cs itself. Passing an explicitly
    frozen teacher is what makes finite-difference checks of
    loss_gradients well-posed, since gradients never flow through the
    teacher branch.
    """
    tau = cs.temperature
    t = cs.target_index
    l_dense = info_nce(cs.dense, t, tau)
    l_lex = info_nce(cs.lex, t, tau)
    l_mul = info_nce(cs.mul, t, tau)
    s_inter = integrate(cs, lw.w)
    l_inter = info_nce(s_inter, t, tau)
    loss = (
        lw.lambda_dense * l_dense
        + lw.lambda_lex * l_lex
        + lw.lambda_mul * l_mul
        + l_inter
    ) / 4.0

    teacher = s_inter if teacher_scores is None else np.asarray(teacher_scores, dtype=np.float64)
    lp_dense = soft_cross_entropy(teacher, cs.dense, tau)
    lp_lex = soft_cross_entropy(teacher, cs.lex, tau)
    lp_mul = soft_cross_entropy(teacher, cs.mul, tau)
    lp = (lw.lambda_dense * lp_dense + lw.lambda_lex * lp_lex + lw.lambda_mul * lp_mul) / 3.0

    return LossBreakdown(
        L_dense=l_dense,
        L_lex=l_lex,
        L_mul=l_mul,
        L_inter=l_inter,
        L=loss,
        Lp_dense=lp_dense,
        Lp_lex=lp_lex,
        Lp_mul=lp_mul,
        Lp=lp,
        L_final=(loss + lp) / 2.0,
    )


def finite_difference_check(
    cs: CandidateScores,
    lw: LossWeights = DEFAULT_LOSS_WEIGHTS,
    h: float = 1e-5,
) -> float:
    """Max deviation of central differences from loss_gradients.

    Relative to the largest analytic gradient magnitude of the instance.
    The teacher is pinned to the unperturbed integrated scores, matching
    the detached-teacher semantics the analytic gradients assume.
    """
    grads = loss_gradients(cs, lw)
    teacher = integrate(cs, lw.w)
    analytic = {"dense": grads.dense, "lex": grads.lex, "mul": grads.mul}
    scale = max(np.abs(v).max() for v in analytic.values())
    scale = max(scale, 1e-12)

    worst = 0.0
    base = {"dense": cs.dense, "lex": cs.lex, "mul": cs.mul}
    for name in base:
        for j in range(cs.length):
            vals = []
            for delta in (h, -h):
                vecs = {m: v.copy() for m, v in base.items()}
                vecs[name][j] += delta
                shifted = CandidateScores(
                    dense=vecs["dense"],
                    lex=vecs["lex"],
                    mul=vecs["mul"],
                    target_index=cs.target_index,
                    temperature=cs.temperature,
                )
                vals.append(compute_losses(shifted, lw, teacher_scores=teacher).L_final)
            numeric = (vals[0] - vals[1]) / (2.0 * h)
            worst = max(worst, abs(numeric - analytic[name][j]) / scale)
    return worst


def loss_gradients(cs: CandidateScores, lw: LossWeights = DEFAULT_LOSS_WEIGHTS) -> GradientSet:
    """Analytic gradients of L_final w.r.t. every raw score entry.

    Three pieces reach each method m:
      - its own InfoNCE:            lambda_m/4 * (softmax(s_m/tau) - onehot)/tau
      - the integrated InfoNCE,
        chained through w_m:        w_m/4 * (softmax(s_inter/tau) - onehot)/tau
      - its distillation term:      lambda_m/3 * (softmax(s_m/tau) - softmax(s_inter/tau))/tau
    all halved by L_final = (L + Lp)/2. The teacher softmax is a
    constant: no gradient flows through s_inter's role as teacher.
    """
    tau = cs.temperature
    onehot = np.zeros(cs.length)
    onehot[cs.target_index] = 1.0
    s_inter = integrate(cs, lw.w)
    p_inter = _softmax(s_inter, tau)
    g_inter = (p_inter - onehot) / tau

    lambdas = (lw.lambda_dense, lw.lambda_lex, lw.lambda_mul)
    weights = lw.w.as_tuple()
    grads = []
    for lam, w_m, s_m in zip(lambdas, weights, (cs.dense, cs.lex, cs.mul)):
        p_m = _softmax(s_m, tau)
        g_nce = (p_m - onehot) / tau
        g_distill = (p_m - p_inter) / tau
        grads.append(0.5 * ((lam * g_nce + w_m * g_inter) / 4.0 + lam * g_distill / 3.0))
    return GradientSet(dense=grads[0], lex=grads[1], mul=grads[2])
