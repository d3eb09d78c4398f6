"""Planted-support linear model: the verification fixture with a known optimum.

Exactly P_true components carry unit-scale weights; the rest carry amplitude at
most `noise`.  Targets are produced by the dense model restricted to the true
support, so the size-P_true subset recovering them with zero loss is known by
construction and brute-force search over subsets has a strict argmin.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import Batch, ComponentEntry, ComponentModel, MaskGradient

__all__ = ["PlantedLinearModel", "make_planted_model"]


class PlantedLinearModel(ComponentModel):
    kind = "planted-linear"

    def __init__(self, weights: np.ndarray, true_support: np.ndarray, seed: int | None = None):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1:
            raise ValidationError("weights must be a 1-d vector")
        K = weights.size
        super().__init__(K, [ComponentEntry("linear", "all") for _ in range(K)], seed)
        self.weights = weights.copy()
        self.true_support = np.asarray(sorted(true_support), dtype=np.intp)
        self._freeze()

    def theta(self):
        return {"weights": self.weights}

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return X @ self.weights

    def forward_masked(self, X, m) -> np.ndarray:
        m = self._check_mask(m)
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.K:
            raise ValidationError(f"input feature count {X.shape[1]} does not match K={self.K}")
        return X @ (m * self.weights)

    def component_outputs(self, X) -> np.ndarray:
        """f_k(X) for every component: shape (n, K)."""
        return np.asarray(X, dtype=np.float64) * self.weights

    def loss_masked(self, batch: Batch, m) -> float:
        y = self.forward_masked(batch.inputs, m)
        resid = y - batch.targets
        return float(np.mean(resid * resid))

    def loss_and_mask_grads(self, batch: Batch, m, teacher=None, eta: float = 0.0) -> MaskGradient:
        if teacher is not None:
            raise ValidationError("regression models have no output distributions to distill")
        m = self._check_mask(m)
        X = np.asarray(batch.inputs, dtype=np.float64)
        y = X @ (m * self.weights)
        resid = y - batch.targets
        loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise ValidationError("non-finite loss in planted-linear forward")
        # d mean(r^2) / dm_k = mean(2 r * w_k x_k)
        grad = (2.0 / X.shape[0]) * (X.T @ resid) * self.weights
        return MaskGradient(loss=loss, dloss_dm=grad)

    def fold_and_prune(self, z) -> "PlantedLinearModel":
        from ..surrogate import relu_gate

        m = relu_gate(np.asarray(z, dtype=np.float64))
        keep = np.nonzero(m > 0.0)[0]
        if keep.size == 0:
            raise ValidationError("all components pruned: degenerate model")
        pruned = PrunedLinearModel(self.weights[keep] * m[keep], keep, self.K, seed=self.seed)
        return pruned

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "component_map": [[e.module_type, e.group] for e in self.component_map],
            "true_support": [int(i) for i in self.true_support],
            "theta": {"weights": {"shape": list(self.weights.shape), "data": self.weights.tolist()}},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PlantedLinearModel":
        w = np.asarray(obj["theta"]["weights"]["data"], dtype=np.float64)
        return cls(w, np.asarray(obj["true_support"], dtype=np.intp), seed=obj.get("seed"))


class PrunedLinearModel(PlantedLinearModel):
    """Planted model after folding: kept components only, mask values merged in."""

    kind = "planted-linear-pruned"

    def __init__(self, folded_weights, kept_indices, original_K, seed=None):
        self.kept_indices = np.asarray(kept_indices, dtype=np.intp)
        self.original_K = int(original_K)
        super().__init__(np.asarray(folded_weights), [], seed=seed)

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] == self.original_K:
            X = X[:, self.kept_indices]
        return X @ self.weights

    def to_json(self) -> dict:
        obj = super().to_json()
        obj["kind"] = self.kind
        obj["kept_indices"] = [int(i) for i in self.kept_indices]
        obj["original_K"] = self.original_K
        return obj


def make_planted_model(K: int, P_true: int, noise: float, seed: int, n_samples: int = 64):
    """Build the planted fixture: (model, fixed data batch, true support indices).

    Signal components draw magnitudes from [0.75, 1.25] with random sign; the
    remaining K - P_true components get amplitude at most `noise`.
    """
    if not (1 <= P_true <= K):
        raise ValidationError(f"P_true must lie in [1, {K}], got {P_true}")
    if noise < 0:
        raise ValidationError("noise amplitude must be >= 0")
    rng = np.random.Generator(np.random.Philox(key=seed))
    support = np.sort(rng.choice(K, size=P_true, replace=False))
    weights = np.zeros(K)
    signs = rng.choice([-1.0, 1.0], size=P_true)
    weights[support] = signs * rng.uniform(0.75, 1.25, size=P_true)
    off = np.setdiff1d(np.arange(K), support)
    if off.size:
        weights[off] = noise * rng.uniform(-1.0, 1.0, size=off.size)
    X = rng.standard_normal((n_samples, K))
    targets = X[:, support] @ weights[support]
    model = PlantedLinearModel(weights, support, seed=seed)
    return model, Batch(inputs=X, targets=targets), support
