"""Budget and polarization losses plus the distillation term.

All functions here are pure and operate on retention-score vectors in [0, 1].
The multiplier state is a plain record; ascent updates live in the trainer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "LagrangeState",
    "GroupPartition",
    "BudgetSpec",
    "round_half_up",
    "sparsity_loss",
    "sparsity_grad",
    "group_sparsity_loss",
    "group_sparsity_grad",
    "binarization_loss",
    "binarization_grad",
    "kl_distill_loss",
    "total_loss",
]


@dataclass
class LagrangeState:
    """Multipliers for one prunable module type: linear, quadratic, binarization."""

    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")


def round_half_up(x: float) -> int:
    """Round with ties away from the floor, e.g. 2.5 -> 3 (unlike banker's rounding)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class BudgetSpec:
    """Keep ratio, its complement, and the integer active-count target."""

    rho: float
    K: int

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValidationError(f"keep ratio must lie in (0, 1), got {self.rho}")
        if self.K < 1:
            raise ValidationError(f"component count must be >= 1, got {self.K}")

    @property
    def alpha(self) -> float:
        return 1.0 - self.rho

    @property
    def P(self) -> int:
        return round_half_up(self.rho * self.K)

    @property
    def rho_eff(self) -> float:
        """Rationalized target P/K: the mean of a feasible binary score vector."""
        return self.P / self.K


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint index groups covering {0..K-1}, all constrained to the same keep ratio."""

    groups: tuple
    rho: float
    K: int

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValidationError(f"keep ratio must lie in (0, 1), got {self.rho}")
        groups = tuple(np.asarray(g, dtype=np.intp) for g in self.groups)
        if len(groups) == 0:
            raise ValidationError("partition needs at least one group")
        seen = np.zeros(self.K, dtype=bool)
        for g in groups:
            if g.size == 0:
                raise ValidationError("every group must be non-empty")
            if np.any(g < 0) or np.any(g >= self.K):
                raise ValidationError("group index out of range")
            if np.any(seen[g]):
                raise ValidationError("groups must be disjoint")
            seen[g] = True
        if not np.all(seen):
            raise ValidationError("groups must cover all indices")
        object.__setattr__(self, "groups", groups)


def _as_scores(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise ValidationError("score vector must be non-empty")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    if np.any(s < -1e-12) or np.any(s > 1.0 + 1e-12):
        raise ValidationError("scores must lie in [0, 1]")
    return s


def sparsity_loss(s, rho: float, lam: LagrangeState) -> float:
    """lambda1 * (mean(s) - rho) + lambda2 * (mean(s) - rho)^2."""
    s = _as_scores(s)
    dev = float(np.mean(s)) - rho
    return lam.lambda1 * dev + lam.lambda2 * dev * dev


def sparsity_grad(s, rho: float, lam: LagrangeState) -> np.ndarray:
    """d(sparsity_loss)/ds_k = (lambda1 + 2*lambda2*(mean(s) - rho)) / K."""
    s = _as_scores(s)
    dev = float(np.mean(s)) - rho
    return np.full(s.shape, (lam.lambda1 + 2.0 * lam.lambda2 * dev) / s.size)


def group_sparsity_loss(s, part: GroupPartition, lam: LagrangeState) -> float:
    """Per-group budget penalty averaged over groups; collapses to sparsity_loss for one group."""
    s = _as_scores(s)
    if s.size != part.K:
        raise ValidationError(f"scores length {s.size} does not match partition K={part.K}")
    terms = []
    for g in part.groups:
        dev = float(np.mean(s[g])) - part.rho
        terms.append(lam.lambda1 * dev + lam.lambda2 * dev * dev)
    return float(np.mean(terms))


def group_sparsity_grad(s, part: GroupPartition, lam: LagrangeState) -> np.ndarray:
    s = _as_scores(s)
    if s.size != part.K:
        raise ValidationError(f"scores length {s.size} does not match partition K={part.K}")
    grad = np.zeros_like(s)
    n_groups = len(part.groups)
    for g in part.groups:
        dev = float(np.mean(s[g])) - part.rho
        grad[g] = (lam.lambda1 + 2.0 * lam.lambda2 * dev) / (n_groups * g.size)
    return grad


def binarization_loss(s, lambda3: float) -> float:
    """lambda3 * mean(s * (1 - s)): zero iff every score is 0 or 1, maximal at 0.5."""
    s = _as_scores(s)
    return lambda3 * float(np.mean(s * (1.0 - s)))


def binarization_grad(s, lambda3: float) -> np.ndarray:
    s = _as_scores(s)
    return lambda3 * (1.0 - 2.0 * s) / s.size


def kl_distill_loss(teacher_dists, student_dists, *, reduction: str = "sum") -> float:
    """KL(teacher || student) accumulated over positions.

    Inputs are arrays of shape (..., vocab) holding per-position next-token
    distributions.  Zero teacher mass contributes zero; zero student mass under
    positive teacher mass is an explicit error rather than a silent inf, because
    every model here emits full-support softmax outputs and a zero would mean a bug.
    """
    pt = np.asarray(teacher_dists, dtype=np.float64)
    ps = np.asarray(student_dists, dtype=np.float64)
    if pt.shape != ps.shape:
        raise ValidationError(f"distribution shapes differ: {pt.shape} vs {ps.shape}")
    if pt.shape[-1] < 2:
        raise ValidationError("vocabulary axis must have size >= 2")
    if np.any(pt < 0) or np.any(ps < 0):
        raise ValidationError("distributions must be nonnegative")
    if np.any(np.abs(pt.sum(axis=-1) - 1.0) > 1e-6) or np.any(np.abs(ps.sum(axis=-1) - 1.0) > 1e-6):
        raise ValidationError("distributions must sum to 1 within 1e-6 per position")
    support = pt > 0.0
    if np.any(support & (ps == 0.0)):
        raise ValidationError("infinite divergence: student has zero mass where teacher is positive")
    contrib = np.zeros_like(pt)
    contrib[support] = pt[support] * (np.log(pt[support]) - np.log(ps[support]))
    total = float(contrib.sum())
    if reduction == "sum":
        return total
    if reduction == "mean":
        n_positions = int(np.prod(pt.shape[:-1])) if pt.ndim > 1 else 1
        return total / n_positions
    raise ValidationError(f"unknown reduction: {reduction!r}")


def total_loss(ce: float, kl: float, sparsity_terms, bin_terms, eta: float) -> float:
    """ce + eta * kl + sum of per-module-type sparsity and binarization terms."""
    if eta < 0:
        raise ValidationError(f"distillation weight must be >= 0, got {eta}")
    values = [ce, kl, eta, *sparsity_terms, *bin_terms]
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("total_loss inputs must be finite")
    return ce + eta * kl + float(sum(sparsity_terms)) + float(sum(bin_terms))
