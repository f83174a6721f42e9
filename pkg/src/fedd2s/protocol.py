"""Mutual data-free distillation rounds with a deep-to-shallow schedule.

One round runs: select participants, resolve each participant's
distillation layer from its participation count, extract knowledge
triplets (H1, Hl, Y), distill each participant's triplets into a staged
copy of the global model (clients-to-server), average the staged copies,
then distill the refreshed global model back into each participant
(server-to-clients), where only the local prefix up to the distillation
layer learns from the distillation loss while ground-truth cross-entropy
updates the whole local model.

All randomness is drawn from substreams keyed by (seed, tag, ...), so
rounds are reproducible and the client-selection stream is shared by every
protocol, making cross-protocol comparisons paired by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import wire
from .data import ClientSplit, batches
from .errors import ProtocolError
from .losses import cross_entropy_grad, kd_loss_grad, kl_divergence, mse_grad, tempered_softmax
from .nn import (
    Flatten,
    ModelParams,
    ModelSpec,
    average_params,
    backward,
    clone_params,
    forward,
    forward_trace,
)
from .optim import AdamState, adam_init, adam_step
from .rng import TAG_SELECT, substream

# epoch-code phases; each (round, phase, pass) gets its own shuffle
PHASE_LOCAL = 0
PHASE_EXTRACT = 1
PHASE_S2C = 2


def epoch_code(round_idx: int, phase: int, idx: int = 0) -> int:
    """Distinct integer per (round, phase, pass) for seeding batch orders."""
    if not 0 <= idx < 64:
        raise ValueError(f"pass index {idx} out of range 0..63")
    return (round_idx * 8 + phase) * 64 + idx


@dataclass
class ClientState:
    """One client's model, data, and persistent optimizer state.

    The distillation and ground-truth losses keep separate Adam moments
    (opt_j, opt_q): a zero distillation gradient must leave the model
    untouched, which shared momentum from the other loss would break.
    """

    id: int
    params: ModelParams
    opt_j: AdamState
    opt_q: AdamState
    split: ClientSplit
    batch_seed: int
    z: int = 0  # rounds this client has participated in


@dataclass
class ServerState:
    params: ModelParams
    round: int = 0


@dataclass(frozen=True)
class DropConfig:
    """Eligible distillation boundaries (ascending layer indices) and the
    number of participations each boundary serves before dropping shallower."""

    drop_set: tuple
    z0: float  # positive int, or math.inf to pin the deepest boundary forever

    def __post_init__(self) -> None:
        ds = tuple(sorted(int(l) for l in self.drop_set))
        if not ds:
            raise ValueError("drop set must be nonempty")
        if len(set(ds)) != len(ds):
            raise ValueError(f"drop set has duplicate entries: {self.drop_set}")
        object.__setattr__(self, "drop_set", ds)
        if not (self.z0 >= 1):
            raise ValueError(f"dropping rate must be >= 1, got {self.z0}")


def distillation_layer(z: int, cfg: DropConfig) -> int:
    """Boundary for a client participating for the z-th time.

    Starts at the deepest entry and moves one entry shallower after every
    z0 participations, clamping at the shallowest entry.
    """
    if z < 1:
        raise ValueError(f"participation count must be >= 1, got {z}")
    steps = 0 if math.isinf(cfg.z0) else int((z - 1) // cfg.z0)
    idx = len(cfg.drop_set) - 1 - min(steps, len(cfg.drop_set) - 1)
    return cfg.drop_set[idx]


def validate_boundary(spec: ModelSpec, layer: int, allow_flatten: bool = True) -> None:
    if not 1 <= layer <= spec.num_layers:
        raise ValueError(f"boundary {layer} out of range 1..{spec.num_layers}")
    if not allow_flatten and isinstance(spec.layers[layer - 1], Flatten):
        raise ValueError(f"layer {layer} is a flatten layer and cannot appear in a drop set")


def select_clients(n_clients: int, rho: float, seed: int, round_idx: int) -> list:
    """Sorted ids of the round's participants: round(rho * N) of them, at least 1."""
    if not 0 < rho <= 1:
        raise ValueError(f"participation ratio must be in (0, 1], got {rho}")
    size = max(1, int(math.floor(rho * n_clients + 0.5)))
    rng = substream(seed, TAG_SELECT, round_idx)
    return sorted(int(i) for i in rng.choice(n_clients, size=size, replace=False))


def extract_knowledge(
    spec: ModelSpec,
    params: ModelParams,
    split: ClientSplit,
    layer: int,
    batch_size: int,
    batch_seed: int,
    code: int,
) -> list:
    """Per-batch triplets (H1, Hl, Y) from the current local model; no gradients."""
    out = []
    for idx in batches(len(split.train), batch_size, batch_seed, code):
        x = split.train.x[idx]
        y = split.train.y[idx]
        h1 = forward(spec, params, x, 1, 1)
        hl = forward(spec, params, h1, 2, layer)  # continues the same pass
        out.append((h1, hl, y))
    return out


def triplets_via_wire(client_id: int, layer: int, triplets: list) -> list:
    """Round-trip triplets through the byte transport, as a real link would."""
    blob = wire.encode_triplets(client_id, layer, triplets)
    decoded = wire.decode_triplets(blob)
    for cid, lay, _, _, _ in decoded:
        if cid != client_id or lay != layer:
            raise ProtocolError(f"wire round-trip corrupted header for client {client_id}")
    return [(h1, hl, y) for _, _, h1, hl, y in decoded]


def distill_passes(epochs: int) -> int:
    """Interleaved distillation+label passes per phase: the epoch budget is
    split half to each loss family, and one pass covers both."""
    return max(1, epochs // 2)


class LossMeter:
    def __init__(self) -> None:
        self.kl_sum = 0.0
        self.kl_n = 0
        self.ce_sum = 0.0
        self.ce_n = 0
        self.diag_kl_tv: float | None = None  # KL(t || v) on the first triplet

    def add_kl(self, v: float) -> None:
        self.kl_sum += v
        self.kl_n += 1

    def add_ce(self, v: float) -> None:
        self.ce_sum += v
        self.ce_n += 1

    def kl_mean(self):
        return self.kl_sum / self.kl_n if self.kl_n else None

    def ce_mean(self):
        return self.ce_sum / self.ce_n if self.ce_n else None


def c2s_distill(
    spec: ModelSpec,
    global_params: ModelParams,
    triplets: list,
    layer: int,
    *,
    passes: int,
    tau: float,
    ce_tau: float,
    lr: float,
    kl_order: str,
    variant: str,
    meter: LossMeter,
) -> ModelParams:
    """Distill one client's triplets into a fresh staged copy of the global model.

    Per triplet: a distillation step on the suffix above layer 1 (teacher
    recomputed from the transmitted Hl through the current staged head, its
    branch blocked), then a cross-entropy step on the same suffix. Layer 1
    of the staged model is unreachable from H1 and never changes.
    """
    L = spec.num_layers
    staged = clone_params(global_params)
    opt_j = adam_init(staged)
    opt_q = adam_init(staged)
    if triplets and triplets[0][1].shape[0] != triplets[0][2].shape[0]:
        raise ProtocolError("triplet fields disagree on batch size")
    for _ in range(passes):
        for h1, hl, y in triplets:
            if variant == "mse":
                out, tr = forward_trace(spec, staged, h1, 2, layer)
                loss, da = mse_grad(out, hl)
                grads, _ = backward(spec, staged, tr, da)
            else:
                teacher = tempered_softmax(forward(spec, staged, hl, layer + 1, L), tau)
                out, tr = forward_trace(spec, staged, h1, 2, L)
                loss, dlog = kd_loss_grad(out, teacher, tau, kl_order)
                grads, _ = backward(spec, staged, tr, dlog)
            staged, opt_j = adam_step(staged, grads, opt_j, lr)
            meter.add_kl(loss)

            out, tr = forward_trace(spec, staged, h1, 2, L)
            loss, dlog = cross_entropy_grad(out, y, ce_tau)
            grads, _ = backward(spec, staged, tr, dlog)
            staged, opt_q = adam_step(staged, grads, opt_q, lr)
            meter.add_ce(loss)
    return staged


def s2c_targets(spec: ModelSpec, global_params: ModelParams, h1, hl, layer: int, tau: float):
    """Soft labels (t, v) from the aggregated global model: t drives the
    client update, v is diagnostic only."""
    L = spec.num_layers
    t = tempered_softmax(forward(spec, global_params, h1, 2, L), tau)
    v = tempered_softmax(forward(spec, global_params, hl, layer + 1, L), tau)
    return t, v


def s2c_distill(
    spec: ModelSpec,
    client: ClientState,
    global_params: ModelParams,
    layer: int,
    *,
    round_idx: int,
    passes: int,
    batch_size: int,
    tau: float,
    ce_tau: float,
    lr: float,
    kl_order: str,
    variant: str,
    meter: LossMeter,
) -> None:
    """Distill the global model into one client, then fit ground truth.

    Per batch: a distillation step whose gradient reaches only the local
    prefix up to `layer` (the global head is read-only), then a
    cross-entropy step on the full local model. Targets are recomputed at
    the start of every pass from a snapshot of the local model, mirroring
    fresh extraction.
    """
    L = spec.num_layers
    train = client.split.train
    for p in range(passes):
        snapshot = clone_params(client.params)
        code = epoch_code(round_idx, PHASE_S2C, p)
        for idx in batches(len(train), batch_size, client.batch_seed, code):
            x = train.x[idx]
            y = train.y[idx]
            h1 = forward(spec, snapshot, x, 1, 1)
            if variant == "mse":
                target = forward(spec, global_params, h1, 2, layer)
                out, tr_pre = forward_trace(spec, client.params, x, 1, layer)
                loss, da = mse_grad(out, target)
                grads, _ = backward(spec, client.params, tr_pre, da)
            else:
                target = tempered_softmax(forward(spec, global_params, h1, 2, L), tau)
                hpre, tr_pre = forward_trace(spec, client.params, x, 1, layer)
                out, tr_suf = forward_trace(spec, global_params, hpre, layer + 1, L)
                loss, dlog = kd_loss_grad(out, target, tau, kl_order)
                # head is frozen: only the input gradient leaves the suffix
                _, gh = backward(spec, global_params, tr_suf, dlog, param_lo=1, param_hi=0, need_input_grad=True)
                grads, _ = backward(spec, client.params, tr_pre, gh)
            client.params, client.opt_j = adam_step(client.params, grads, client.opt_j, lr)
            meter.add_kl(loss)

            out, tr = forward_trace(spec, client.params, x, 1, L)
            loss, dlog = cross_entropy_grad(out, y, ce_tau)
            grads, _ = backward(spec, client.params, tr, dlog)
            client.params, client.opt_q = adam_step(client.params, grads, client.opt_q, lr)
            meter.add_ce(loss)


def local_ce_epochs(
    spec: ModelSpec,
    client: ClientState,
    *,
    epochs: int,
    round_idx: int,
    batch_size: int,
    ce_tau: float,
    lr: float,
    meter: LossMeter | None = None,
) -> None:
    """Plain supervised epochs on the client's own data (shared by FedAvg,
    local-only, and the optional pre-distillation warmup)."""
    train = client.split.train
    for e in range(epochs):
        code = epoch_code(round_idx, PHASE_LOCAL, e)
        for idx in batches(len(train), batch_size, client.batch_seed, code):
            out, tr = forward_trace(spec, client.params, train.x[idx], 1, spec.num_layers)
            loss, dlog = cross_entropy_grad(out, train.y[idx], ce_tau)
            grads, _ = backward(spec, client.params, tr, dlog)
            client.params, client.opt_q = adam_step(client.params, grads, client.opt_q, lr)
            if meter is not None:
                meter.add_ce(loss)


def run_round(
    server: ServerState,
    clients: list,
    spec: ModelSpec,
    *,
    round_idx: int,
    seed: int,
    rho: float,
    epochs: int,
    batch_size: int,
    tau: float,
    ce_tau: float,
    lr: float,
    kl_order: str,
    drop_cfg: DropConfig | None,
    fixed_layer: int | None = None,
    variant: str = "head",
    pre_local_epochs: int = 0,
    wire_roundtrip: bool = False,
):
    """One full mutual-distillation round. Returns (selected ids,
    {client id: distillation layer}, {client id: LossMeter})."""
    selected = select_clients(len(clients), rho, seed, round_idx)
    passes = distill_passes(epochs)
    layers: dict = {}
    meters: dict = {cid: LossMeter() for cid in selected}
    for cid in selected:
        clients[cid].z += 1
        if fixed_layer is not None:
            layers[cid] = fixed_layer
        else:
            layers[cid] = distillation_layer(clients[cid].z, drop_cfg)

    if pre_local_epochs:
        for cid in selected:
            local_ce_epochs(
                spec, clients[cid], epochs=pre_local_epochs, round_idx=round_idx,
                batch_size=batch_size, ce_tau=ce_tau, lr=lr,
            )

    code = epoch_code(round_idx, PHASE_EXTRACT, 0)
    all_triplets: dict = {}
    for cid in selected:
        c = clients[cid]
        trips = extract_knowledge(spec, c.params, c.split, layers[cid], batch_size, c.batch_seed, code)
        if wire_roundtrip:
            trips = triplets_via_wire(cid, layers[cid], trips)
        all_triplets[cid] = trips

    staged = []
    for cid in selected:  # sorted, so aggregation order is fixed
        staged.append(
            c2s_distill(
                spec, server.params, all_triplets[cid], layers[cid],
                passes=passes, tau=tau, ce_tau=ce_tau, lr=lr,
                kl_order=kl_order, variant=variant, meter=meters[cid],
            )
        )
    if not staged:
        raise ProtocolError(f"round {round_idx}: no participants")
    server.params = average_params(staged)

    for cid in selected:  # diagnostic soft labels from the aggregated model
        h1, hl, _ = all_triplets[cid][0]
        t, v = s2c_targets(spec, server.params, h1, hl, layers[cid], tau)
        meters[cid].diag_kl_tv = kl_divergence(v, t)

    for cid in selected:
        s2c_distill(
            spec, clients[cid], server.params, layers[cid],
            round_idx=round_idx, passes=passes, batch_size=batch_size,
            tau=tau, ce_tau=ce_tau, lr=lr, kl_order=kl_order,
            variant=variant, meter=meters[cid],
        )
    server.round = round_idx
    return selected, layers, meters


def evaluate(spec: ModelSpec, params: ModelParams, ds) -> float:
    """Top-1 accuracy on a dataset; empty dataset is an error upstream."""
    logits = forward(spec, params, ds.x, 1, spec.num_layers)
    return float(np.mean(np.argmax(logits, axis=-1) == ds.y))
