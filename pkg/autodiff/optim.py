"""
Adam optimizer over `Tensor` parameters.
"""
from autodiff.tensor import Tensor
from dataclasses import dataclass, field
from interfaces.errors import ShapeError
import logging
import numpy as np
from typing import List, Optional, Sequence


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float = 1e-3) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray]) -> bool:
    """
    Applies one bias-corrected Adam update in place.

    A batch whose gradients contain non-finite values is skipped: parameters,
    moments and the step counter are left untouched.

    Args:
        state: optimizer state, updated in place
        params: parameters to update (their `.data` is replaced)
        grads: gradients aligned with params

    Returns:
        applied: False when the update was skipped

    Raises:
        ShapeError: gradient/moment shapes do not match the parameters
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError(
            f"Adam got {len(params)} params, {len(grads)} grads, {len(state.m)} moments"
        )
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"Adam shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
    if not all(np.all(np.isfinite(g)) for g in grads):
        logging.warning(f"Non-finite gradient at Adam step {state.step + 1}; update skipped.")
        return False

    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bias1
        v_hat = state.v[i] / bias2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return True


class Adam:
    """Convenience wrapper binding a parameter list to an `AdamState`."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3) -> None:
        self.params = list(params)
        self.state = AdamState.for_params(self.params, lr=lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, grads: Optional[Sequence[np.ndarray]] = None) -> bool:
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        return adam_step(self.state, self.params, grads)
