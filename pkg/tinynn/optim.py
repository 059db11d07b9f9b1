"""
Adam optimizer and soft target updates on flat parameter vectors.
"""

from dataclasses import dataclass, replace

import numpy as np

from tinynn.mlp import NetworkParams, ShapeError


class NumericalFault(Exception):
    """Raised when a gradient or loss is NaN or infinite."""
    pass


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams, lr: float) -> "AdamState":
        return cls(m=np.zeros_like(params.values), v=np.zeros_like(params.values), lr=lr)


def check_finite(name: str, values) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalFault(f"Non-finite values in {name}")


def adam_step(params: NetworkParams, grads: np.ndarray, state: AdamState):
    """
    One bias-corrected Adam descent step.

    Returns (new params, new state); neither input is modified. Ascent is a
    descent step on the negated gradient.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.values.shape or state.m.shape != params.values.shape:
        raise ShapeError(
            f"Gradient {grads.shape} / moments {state.m.shape} do not match params {params.values.shape}"
        )
    check_finite("gradient", grads)

    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    values = params.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    new_params = NetworkParams(params.spec, values, params.version + 1, params.buffers.copy())
    return new_params, replace(state, m=m, v=v, step=step)


def soft_update(target: NetworkParams, live: NetworkParams, eta: float) -> NetworkParams:
    """theta' <- eta * theta + (1 - eta) * theta', running statistics included."""
    if target.spec != live.spec:
        raise ShapeError("Soft update between networks of different specs")
    values = eta * live.values + (1.0 - eta) * target.values
    buffers = eta * live.buffers + (1.0 - eta) * target.buffers
    return NetworkParams(target.spec, values, target.version + 1, buffers)
