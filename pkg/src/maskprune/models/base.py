"""Shared machinery for masked component models.

Every model is a frozen-parameter function decomposed as y = sum_k m_k * f_k(X).
Parameters are immutable after construction; only the K-vector of masks varies.
Gradients of the task loss with respect to the masks are hand-derived reverse
accumulation per model kind (no autodiff framework), which keeps runs bitwise
reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ValidationError

__all__ = [
    "Batch",
    "MaskGradient",
    "ComponentEntry",
    "ComponentModel",
    "silu",
    "silu_prime",
    "softmax",
    "rmsnorm",
    "rmsnorm_backward",
]

RMS_EPS = 1e-6


@dataclass(frozen=True)
class Batch:
    """Model inputs plus targets (regression values or next-token indices)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] == 0:
            raise ValidationError("batch must be non-empty")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValidationError("inputs and targets disagree on sample count")


@dataclass
class MaskGradient:
    """Task loss, optional distillation term, and d(loss_total)/d(mask)."""

    loss: float
    dloss_dm: np.ndarray
    kl: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.dloss_dm, dtype=np.float64)
        if not np.isfinite(self.loss) or not np.all(np.isfinite(values)):
            raise ValidationError("mask gradient must be finite")
        if self.kl is not None and not np.isfinite(self.kl):
            raise ValidationError("kl term must be finite")
        self.dloss_dm = values


@dataclass(frozen=True)
class ComponentEntry:
    """Which prunable module type and sub-group a mask index belongs to."""

    module_type: str
    group: str


class ComponentModel:
    """Base class: subclasses fill in theta arrays and the component map."""

    kind: str = "abstract"
    schema_version = 1

    def __init__(self, K: int, component_map: list[ComponentEntry], seed: int | None):
        if K <= 0:
            raise ValidationError("component count K must be positive")
        if len(component_map) != K:
            raise ValidationError("component_map length must equal K")
        self.K = K
        self.component_map = list(component_map)
        self.seed = seed
        self._frozen = False

    # -- parameter store -------------------------------------------------

    def _freeze(self):
        for arr in self.theta().values():
            arr.setflags(write=False)
        self._frozen = True

    def theta(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def theta_checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.theta()):
            arr = np.ascontiguousarray(self.theta()[name])
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        return h.hexdigest()

    # -- structure -------------------------------------------------------

    def module_types(self) -> list[str]:
        seen: list[str] = []
        for entry in self.component_map:
            if entry.module_type not in seen:
                seen.append(entry.module_type)
        return seen

    def type_indices(self, module_type: str) -> np.ndarray:
        idx = [k for k, e in enumerate(self.component_map) if e.module_type == module_type]
        return np.asarray(idx, dtype=np.intp)

    def group_indices(self, module_type: str) -> list[np.ndarray]:
        by_group: dict[str, list[int]] = {}
        for k, e in enumerate(self.component_map):
            if e.module_type == module_type:
                by_group.setdefault(e.group, []).append(k)
        return [np.asarray(v, dtype=np.intp) for v in by_group.values()]

    def _check_mask(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (self.K,):
            raise ValidationError(f"mask shape {m.shape} does not match K={self.K}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("mask must be finite")
        return m

    # -- contract --------------------------------------------------------

    def forward(self, X) -> np.ndarray:
        """Dense reference forward (no component decomposition)."""
        raise NotImplementedError

    def forward_masked(self, X, m) -> np.ndarray:
        raise NotImplementedError

    def loss_masked(self, batch: Batch, m) -> float:
        raise NotImplementedError

    def loss_and_mask_grads(self, batch: Batch, m, teacher=None, eta: float = 0.0) -> MaskGradient:
        raise NotImplementedError

    def fold_and_prune(self, z) -> "ComponentModel":
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


# -- numerics shared across model kinds ----------------------------------


def silu(x):
    """x * sigmoid(x); the gate nonlinearity used by the gated MLP components."""
    x = np.asarray(x, dtype=np.float64)
    sig = np.empty_like(x)
    pos = x >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)
    return x * sig


def silu_prime(x):
    x = np.asarray(x, dtype=np.float64)
    sig = np.empty_like(x)
    pos = x >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)
    return sig * (1.0 + x * (1.0 - sig))


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def rmsnorm(x, gain):
    """Root-mean-square normalization over the last axis, scaled by a gain vector."""
    rms = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMS_EPS)
    return x / rms * gain, rms


def rmsnorm_backward(g_out, x, rms, gain):
    """Gradient of rmsnorm w.r.t. x given upstream g_out and cached rms."""
    d = x.shape[-1]
    gg = g_out * gain
    dot = np.sum(gg * x, axis=-1, keepdims=True)
    return gg / rms - x * dot / (d * rms**3)
