"""Deterministic gating math: ReLU forward gate, annealed retention scores, STE backwards.

The forward mask ``m = relu(z)`` is what the model multiplies onto component
outputs; the retention score ``s = clamp(sigmoid((z - mu) * c0 / mu) * (r - l) + l, 0, 1)``
is what the budget and binarization regularizers see.  The two are decoupled on
purpose: ``m`` is unbounded above, ``s`` lives in [0, 1] and sharpens toward the
step indicator ``1[z > 0]`` as ``mu`` anneals to its floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "MaskLogits",
    "SurrogateParams",
    "AnnealSchedule",
    "sigmoid",
    "derive_c0",
    "relu_gate",
    "relu_backward",
    "retention_scores",
    "surrogate_backward",
    "mu_at",
]


def sigmoid(x):
    """Numerically safe logistic function (no overflow warnings for large |x|)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_prime(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def _as_logit_array(z) -> np.ndarray:
    values = z.values if isinstance(z, MaskLogits) else np.asarray(z, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("mask logits must be non-empty")
    if not np.all(np.isfinite(values)):
        raise ValidationError("mask logits must be finite")
    return values


@dataclass
class MaskLogits:
    """Latent real-valued parameters for one prunable group of K components."""

    values: np.ndarray
    group_tag: str = "all"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValidationError("MaskLogits.values must be a non-empty 1-d vector")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("MaskLogits.values must be finite")

    def __len__(self) -> int:
        return self.values.size


def derive_c0(l: float, r: float, *, check_tol: float = 1e-12) -> float:
    """Solve for the sharpness constant pinning the score to 0 at z=0.

    Returns c0 with sigmoid(-c0) * (r - l) + l == 0, i.e. c0 = log((r - l) / (-l) - 1).
    Also verifies the companion saturation condition sigmoid(c0) * (r - l) + l >= 1
    (so the score clamps to exactly 1 at z = 2*mu); a violation is reported via
    ValidationError because the endpoint contract would silently break.
    """
    if not (l < 0.0 < 1.0 < r):
        raise ValidationError(f"stretch bounds must satisfy l < 0 < 1 < r, got l={l}, r={r}")
    ratio = (r - l) / (-l) - 1.0
    if ratio <= 1.0:
        # sigmoid(-c0) = -l/(r-l) >= 1/2 has no positive solution
        raise ValidationError(
            f"no positive sharpness constant exists for l={l}, r={r} (-l >= (r-l)/2)"
        )
    c0 = math.log(ratio)
    upper = sigmoid(np.float64(c0)) * (r - l) + l
    if upper < 1.0 - check_tol:
        raise ValidationError(
            f"upper endpoint fails to saturate: sigmoid(c0)*(r-l)+l = {upper:.6g} < 1"
        )
    return c0


@dataclass(frozen=True)
class SurrogateParams:
    """Stretch bounds and sharpness constant of the retention-score mapping."""

    l: float = -0.1
    r: float = 1.1
    c0: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (self.l < 0.0 < 1.0 < self.r):
            raise ValidationError(
                f"stretch bounds must satisfy l < 0 < 1 < r, got l={self.l}, r={self.r}"
            )
        if self.c0 is None:
            object.__setattr__(self, "c0", derive_c0(self.l, self.r))
        else:
            if self.c0 <= 0:
                raise ValidationError(f"c0 must be positive, got {self.c0}")
            zero_point = sigmoid(np.float64(-self.c0)) * (self.r - self.l) + self.l
            if abs(zero_point) > 1e-12:
                raise ValidationError(
                    f"c0={self.c0} does not pin the score to 0 at z=0 (residual {zero_point:.3g})"
                )


@dataclass(frozen=True)
class AnnealSchedule:
    """Square-root sharpness decay from mu0 down to the floor muT over total_steps."""

    mu0: float = 0.5
    muT: float = 0.05
    total_steps: int = 1000

    def __post_init__(self):
        if not (self.mu0 >= self.muT > 0.0):
            raise ValidationError(
                f"schedule requires mu0 >= muT > 0, got mu0={self.mu0}, muT={self.muT}"
            )
        if self.total_steps <= 0:
            raise ValidationError(f"total_steps must be positive, got {self.total_steps}")

    def mu_at(self, t: int) -> float:
        return mu_at(t, self)


def mu_at(t: int, sched: AnnealSchedule) -> float:
    """Sharpness at step t: mu0 - (mu0 - muT) * sqrt(t / T)."""
    if t < 0 or t > sched.total_steps:
        raise ValidationError(f"step {t} outside [0, {sched.total_steps}]")
    return sched.mu0 - (sched.mu0 - sched.muT) * math.sqrt(t / sched.total_steps)


def relu_gate(z) -> np.ndarray:
    """Forward mask m = max(z, 0) elementwise. z exactly 0 gates to 0 (pruned)."""
    values = _as_logit_array(z)
    return np.maximum(values, 0.0)


def relu_backward(z, upstream, *, mode: str = "identity") -> np.ndarray:
    """Gradient of the forward gate w.r.t. z under the chosen estimator.

    "identity" passes the upstream gradient through unchanged so components
    driven below zero can recover; "subgradient" uses the exact ReLU
    subgradient 1[z > 0].
    """
    values = _as_logit_array(z)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != values.shape:
        raise ValidationError(
            f"upstream shape {upstream.shape} does not match logits shape {values.shape}"
        )
    if mode == "identity":
        return upstream.copy()
    if mode == "subgradient":
        return upstream * (values > 0.0)
    raise ValidationError(f"unknown relu backward mode: {mode!r}")


def retention_scores(z, mu: float, p: SurrogateParams) -> np.ndarray:
    """Scores s = clamp(sigmoid((z - mu) * c0 / mu) * (r - l) + l, 0, 1).

    By construction s(0) = 0 and s(2*mu) = 1, and s is nondecreasing in z.
    """
    if mu <= 0.0:
        raise ValidationError(f"mu must be positive, got {mu}")
    values = _as_logit_array(z)
    v = sigmoid((values - mu) * (p.c0 / mu))
    return np.clip(v * (p.r - p.l) + p.l, 0.0, 1.0)


def surrogate_backward(z, mu: float, p: SurrogateParams, upstream, *, mode: str = "identity") -> np.ndarray:
    """Gradient of retention scores w.r.t. z.

    The sigmoid chain rule is exact: ds/dz = (c0/mu) * (r-l) * sigmoid'((z-mu)*c0/mu).
    "identity" treats the clamp as identity in the backward pass (gradient keeps
    flowing in saturated regions); "masked" zeroes it where the pre-clamp value
    left [0, 1].
    """
    if mu <= 0.0:
        raise ValidationError(f"mu must be positive, got {mu}")
    values = _as_logit_array(z)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != values.shape:
        raise ValidationError(
            f"upstream shape {upstream.shape} does not match logits shape {values.shape}"
        )
    arg = (values - mu) * (p.c0 / mu)
    grad = upstream * (p.c0 / mu) * (p.r - p.l) * _sigmoid_prime(arg)
    if mode == "identity":
        return grad
    if mode == "masked":
        pre = sigmoid(arg) * (p.r - p.l) + p.l
        inside = (pre >= 0.0) & (pre <= 1.0)
        return grad * inside
    raise ValidationError(f"unknown clamp backward mode: {mode!r}")
