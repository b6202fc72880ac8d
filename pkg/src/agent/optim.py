from dataclasses import dataclass

import numpy as np

from agent.network import NetworkParams


@dataclass
class AdamState:
    """Adam moments for one parameter set; m and v mirror the parameter arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(
        cls,
        params: NetworkParams | list[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        arrays = _as_arrays(params)
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def _as_arrays(values: NetworkParams | list[np.ndarray]) -> list[np.ndarray]:
    if isinstance(values, NetworkParams):
        return list(values.arrays())
    return [np.asarray(a, dtype=np.float64) for a in values]


def _restore(template: NetworkParams | list[np.ndarray], arrays: list[np.ndarray]):
    if isinstance(template, NetworkParams):
        return template.with_arrays(arrays)
    return arrays


def adam_step(
    params: NetworkParams | list[np.ndarray],
    grads: NetworkParams | list[np.ndarray],
    state: AdamState,
) -> tuple[NetworkParams | list[np.ndarray], AdamState]:
    """One bias-corrected Adam step. Returns new params and a new state.

    Raises:
        ValueError: On shape mismatch or non-finite gradients
    """
    p_arrays = _as_arrays(params)
    g_arrays = _as_arrays(grads)
    if [a.shape for a in p_arrays] != [g.shape for g in g_arrays] or len(p_arrays) != len(state.m):
        raise ValueError("Gradient shapes do not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise ValueError("Non-finite gradient; update rejected")

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v, strict=True):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)

    new_state = AdamState(
        m=new_m, v=new_v, t=t, lr=state.lr, beta1=b1, beta2=b2, eps=state.eps
    )
    return _restore(params, new_p), new_state


def global_norm(grads: NetworkParams | list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in _as_arrays(grads))))


def clip_gradients_global(grads: NetworkParams | list[np.ndarray], max_norm: float):
    """Scale all gradients by max_norm / N when their global norm N exceeds max_norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return _restore(grads, [g * scale for g in _as_arrays(grads)])
