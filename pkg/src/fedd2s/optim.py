"""Adam optimizer over per-layer parameter blocks.

adam_step is functional: it returns fresh params and state, leaving its
inputs untouched. A gradient entry of None masks that block out entirely,
meaning its parameters AND its moment accumulators stay as they were. The
step counter still advances once per call. This masking is what lets a
restricted distillation step update only a model prefix without perturbing
the frozen remainder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ModelParams, ParamBlock, zeros_like_params


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    t: int = 0


def adam_init(params: ModelParams) -> AdamState:
    return AdamState(m=zeros_like_params(params), v=zeros_like_params(params), t=0)


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One Adam update; returns (new_params, new_state)."""
    if len(params) != len(grads):
        raise ValueError("params and grads must have the same number of blocks")
    t = state.t + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_params: ModelParams = []
    new_m: ModelParams = []
    new_v: ModelParams = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p is None or g is None:
            new_params.append(p)
            new_m.append(m)
            new_v.append(v)
            continue
        if p.w.shape != g.w.shape or p.b.shape != g.b.shape:
            raise ValueError("gradient shape does not match parameter shape")
        mw = beta1 * m.w + (1.0 - beta1) * g.w
        mb = beta1 * m.b + (1.0 - beta1) * g.b
        vw = beta2 * v.w + (1.0 - beta2) * g.w**2
        vb = beta2 * v.b + (1.0 - beta2) * g.b**2
        new_w = p.w - lr * (mw / c1) / (np.sqrt(vw / c2) + eps)
        new_b = p.b - lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
        new_params.append(ParamBlock(new_w, new_b))
        new_m.append(ParamBlock(mw, mb))
        new_v.append(ParamBlock(vw, vb))
    return new_params, AdamState(m=new_m, v=new_v, t=t)
