"""RMSProp with a per-parameter mean-square accumulator.

Update rule, applied elementwise:

    acc   <- decay * acc + (1 - decay) * grad^2
    param <- param - lr * grad / (sqrt(acc) + eps)

A step with any non-finite gradient is rejected before touching either the
parameters or the accumulators.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["RMSProp", "NonFiniteGradient"]


class NonFiniteGradient(RuntimeError):
    """A gradient contained NaN or infinity; the update was not applied."""


class RMSProp:
    def __init__(
        self,
        params: list[Tensor],
        lr: float = 5e-4,
        decay: float = 0.9,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.decay = float(decay)
        self.eps = float(eps)
        self.acc = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float | None = None) -> None:
        """Apply one update using each parameter's accumulated gradient.

        Parameters without a gradient are skipped.  `lr` overrides the
        stored learning rate for this step only (used by schedules).
        """
        rate = self.lr if lr is None else float(lr)
        grads = []
        for p in self.params:
            g = p.grad
            if g is not None and not np.all(np.isfinite(g)):
                raise NonFiniteGradient(
                    f"non-finite gradient for parameter of shape {p.data.shape}; "
                    "step rejected"
                )
            grads.append(g)
        for p, acc, g in zip(self.params, self.acc, grads):
            if g is None:
                continue
            acc *= self.decay
            acc += (1.0 - self.decay) * (g * g)
            p.data -= rate * g / (np.sqrt(acc) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self, prefix: str = "opt") -> dict[str, np.ndarray]:
        """Accumulators as named arrays for checkpointing."""
        return {f"{prefix}.{i}": a for i, a in enumerate(self.acc)}

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "opt") -> None:
        for i in range(len(self.acc)):
            src = arrays[f"{prefix}.{i}"]
            if src.shape != self.acc[i].shape:
                raise ValueError(
                    f"accumulator {i} shape mismatch: checkpoint {src.shape} vs "
                    f"parameter {self.acc[i].shape}"
                )
            np.copyto(self.acc[i], src)
