"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        st = cls(**hyper)
        for name, p in params.items():
            st.m[name] = np.zeros_like(p)
            st.v[name] = np.zeros_like(p)
        return st


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """In-place update of every parameter in ``params``; increments ``state.step``.

    p -= lr * m_hat / (sqrt(v_hat) + eps), m_hat and v_hat bias-corrected.
    """
    for name, g in grads.items():
        if g.shape != params[name].shape or state.m[name].shape != g.shape:
            raise ValueError(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        m, v, p = state.m[name], state.v[name], params[name]
        gf, mf, vf, pf = (a.reshape(-1) for a in (g, m, v, p))
        # blocks sized to stay in cache: same elementwise arithmetic, far less memory traffic
        for a in range(0, gf.size, _BLOCK):
            b = a + _BLOCK
            _update(gf[a:b], mf[a:b], vf[a:b], pf[a:b], state, b1, b2, c1, c2)


_BLOCK = 1 << 15


def _update(g, m, v, p, state, b1, b2, c1, c2):
    tmp = np.multiply(g, 1.0 - b1, dtype=m.dtype)
    m *= b1
    m += tmp
    np.multiply(g, g, out=tmp)
    tmp *= 1.0 - b2
    v *= b2
    v += tmp
    if state.lr == 0.0:
        return
    np.divide(v, c2, out=tmp)
    np.sqrt(tmp, out=tmp)
    tmp += state.eps
    np.divide(m, tmp, out=tmp)
    tmp *= state.lr / c1
    p -= tmp
