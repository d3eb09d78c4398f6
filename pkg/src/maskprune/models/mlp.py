"""Gated-MLP regression model with per-channel masks.

Channel j contributes (silu(X u_j) * (X g_j)) v_j; the mask scales each
channel's contribution before the down-projection sum.  Targets are the frozen
dense model's own outputs, so pruning trades budget against fidelity to the
dense function and the all-ones mask has exactly zero loss.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import Batch, ComponentEntry, ComponentModel, MaskGradient, silu, silu_prime

__all__ = ["GatedMlpModel", "make_mlp_model"]


class GatedMlpModel(ComponentModel):
    kind = "toy-mlp"

    def __init__(self, up, gate, down, seed: int | None = None, group: str = "layer0"):
        up = np.asarray(up, dtype=np.float64)
        gate = np.asarray(gate, dtype=np.float64)
        down = np.asarray(down, dtype=np.float64)
        if up.shape != gate.shape or up.shape[1] != down.shape[0]:
            raise ValidationError("up/gate must be (d, C) and down (C, d_out)")
        C = up.shape[1]
        super().__init__(C, [ComponentEntry("mlp", group) for _ in range(C)], seed)
        self.up, self.gate, self.down = up.copy(), gate.copy(), down.copy()
        self._freeze()

    @property
    def d_in(self) -> int:
        return self.up.shape[0]

    def theta(self):
        return {"up": self.up, "gate": self.gate, "down": self.down}

    def _activations(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.d_in:
            raise ValidationError(f"input width {X.shape[1]} does not match d={self.d_in}")
        zu = X @ self.up
        zg = X @ self.gate
        return zu, zg, silu(zu) * zg

    def forward(self, X) -> np.ndarray:
        _, _, act = self._activations(X)
        return act @ self.down

    def forward_masked(self, X, m) -> np.ndarray:
        m = self._check_mask(m)
        _, _, act = self._activations(X)
        return (act * m) @ self.down

    def component_outputs(self, X) -> np.ndarray:
        """f_j(X) stacked: shape (n, C, d_out)."""
        _, _, act = self._activations(X)
        return act[:, :, None] * self.down[None, :, :]

    def loss_masked(self, batch: Batch, m) -> float:
        y = self.forward_masked(batch.inputs, m)
        resid = y - batch.targets
        return float(np.mean(resid * resid))

    def loss_and_mask_grads(self, batch: Batch, m, teacher=None, eta: float = 0.0) -> MaskGradient:
        if teacher is not None:
            raise ValidationError("regression models have no output distributions to distill")
        m = self._check_mask(m)
        _, _, act = self._activations(batch.inputs)
        y = (act * m) @ self.down
        resid = y - batch.targets
        loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise ValidationError("non-finite loss in mlp forward")
        g_y = 2.0 * resid / resid.size
        grad = np.einsum("nj,nj->j", g_y @ self.down.T, act)
        return MaskGradient(loss=loss, dloss_dm=grad)

    def fold_and_prune(self, z) -> "GatedMlpModel":
        from ..surrogate import relu_gate

        m = relu_gate(np.asarray(z, dtype=np.float64))
        keep = np.nonzero(m > 0.0)[0]
        if keep.size == 0:
            raise ValidationError("all channels pruned: degenerate model")
        folded = GatedMlpModel(
            self.up[:, keep],
            self.gate[:, keep],
            self.down[keep] * m[keep][:, None],
            seed=self.seed,
            group=self.component_map[0].group,
        )
        return folded

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "component_map": [[e.module_type, e.group] for e in self.component_map],
            "theta": {
                name: {"shape": list(arr.shape), "data": arr.tolist()}
                for name, arr in self.theta().items()
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GatedMlpModel":
        t = obj["theta"]
        group = obj["component_map"][0][1] if obj["component_map"] else "layer0"
        return cls(
            np.asarray(t["up"]["data"]),
            np.asarray(t["gate"]["data"]),
            np.asarray(t["down"]["data"]),
            seed=obj.get("seed"),
            group=group,
        )


def make_mlp_model(C: int = 16, d: int = 8, d_out: int = 8, seed: int = 0, n_samples: int = 64):
    """Random frozen gated MLP plus a fixed batch targeting its dense outputs."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    scale = 1.0 / np.sqrt(d)
    model = GatedMlpModel(
        rng.standard_normal((d, C)) * scale,
        rng.standard_normal((d, C)) * scale,
        rng.standard_normal((C, d_out)) / np.sqrt(C),
        seed=seed,
    )
    X = rng.standard_normal((n_samples, d))
    return model, Batch(inputs=X, targets=model.forward(X))
