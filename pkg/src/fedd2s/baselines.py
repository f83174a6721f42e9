"""Comparison protocols sharing the engine, data, and selection streams.

fedavg:            selected clients train locally from the broadcast global
                   model; their weights are averaged and pushed to everyone.
local_only:        every client trains on its own data; no communication.
fedd2s_fixed_layer and fedd2s_mse reuse the distillation round with a
pinned boundary or an MSE feature loss and live in the protocol module.
"""

from __future__ import annotations

from .errors import ProtocolError
from .nn import ModelSpec, average_params, clone_params
from .protocol import (
    ClientState,
    LossMeter,
    ServerState,
    local_ce_epochs,
    select_clients,
)


def fedavg_round(
    server: ServerState,
    clients: list,
    spec: ModelSpec,
    *,
    round_idx: int,
    seed: int,
    rho: float,
    epochs: int,
    batch_size: int,
    ce_tau: float,
    lr: float,
):
    """Classic parameter averaging; returns (selected, layers, meters)."""
    selected = select_clients(len(clients), rho, seed, round_idx)
    meters = {cid: LossMeter() for cid in selected}
    for cid in selected:
        clients[cid].z += 1
        clients[cid].params = clone_params(server.params)
        local_ce_epochs(
            spec, clients[cid], epochs=epochs, round_idx=round_idx,
            batch_size=batch_size, ce_tau=ce_tau, lr=lr, meter=meters[cid],
        )
    trained = [clients[cid].params for cid in selected]
    if not trained:
        raise ProtocolError(f"round {round_idx}: no participants")
    server.params = average_params(trained)
    for c in clients:  # broadcast: everyone holds the fresh global model
        c.params = clone_params(server.params)
    server.round = round_idx
    return selected, {cid: None for cid in selected}, meters


def local_only_round(
    clients: list,
    spec: ModelSpec,
    *,
    round_idx: int,
    epochs: int,
    batch_size: int,
    ce_tau: float,
    lr: float,
):
    """Every client trains alone; selection and rho play no part."""
    ids = [c.id for c in clients]
    meters = {cid: LossMeter() for cid in ids}
    for c in clients:
        local_ce_epochs(
            spec, c, epochs=epochs, round_idx=round_idx,
            batch_size=batch_size, ce_tau=ce_tau, lr=lr, meter=meters[c.id],
        )
    return ids, {cid: None for cid in ids}, meters
