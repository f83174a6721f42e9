"""Run configuration, training orchestration, metrics, and persistence.

A run is fully described by a RunConfig; the resolved config (every
default made explicit) is embedded in the MetricsLog so any figure can be
reproduced from the metrics file alone. Serialization is canonical:
emitting the same log twice yields byte-identical JSON.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import baselines, protocol
from .data import (
    Dataset,
    dirichlet_partition,
    load_csv,
    load_idx,
    synth_blobs,
    synth_digits,
    train_test_split,
)
from .errors import ConfigError, MetricsError
from .models import default_drop_set, flatten_index, parse_arch
from .nn import clone_params, init_params
from .optim import adam_init
from .protocol import ClientState, DropConfig, ServerState, validate_boundary
from .rng import TAG_CLIENT, TAG_INIT, derive_seed, substream

PROTOCOLS = ("fedd2s", "fedd2s_fixed_layer", "fedd2s_mse", "fedavg", "local_only")

CSV_HEADER = "round,client_id,selected,test_acc,distill_layer,loss_kl,loss_ce"


@dataclass(frozen=True)
class RunConfig:
    protocol: str = "fedd2s"
    rounds: int = 30
    clients: int = 8
    rho: float = 0.5
    epochs: int = 8
    batch: int = 16
    lr: float = 0.01
    tau: float = 3.0
    ce_tau: float | None = None  # None: reuse tau for the label loss
    alpha: float = 0.1
    z0: float | None = None  # None: keyed to alpha (3 / 5 / 7)
    drop_set: tuple | None = None  # None: deepest conv + dense layers
    fixed_layer: int | None = None  # None: flatten boundary (fixed-layer protocol only)
    arch: str = "desk"
    dataset: str = "digits:60,0.35"
    seed: int = 0
    pre_local_epochs: int = 0
    ua_window: int | None = None  # None: min(10, rounds)
    kl_order: str = "teacher_student"
    wire_roundtrip: bool = False

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; pick one of {PROTOCOLS}")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if min(self.clients, self.epochs, self.batch) < 1:
            raise ConfigError("clients, epochs, and batch must be >= 1")
        if self.epochs > 128:
            raise ConfigError("epochs capped at 128")
        if not 0 < self.rho <= 1:
            raise ConfigError(f"rho must be in (0, 1], got {self.rho}")
        if self.lr <= 0 or self.tau <= 0:
            raise ConfigError("lr and tau must be positive")
        if self.ce_tau is not None and self.ce_tau <= 0:
            raise ConfigError("ce_tau must be positive")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.z0 is not None and not self.z0 >= 1:
            raise ConfigError(f"z0 must be >= 1, got {self.z0}")
        if self.pre_local_epochs < 0:
            raise ConfigError("pre_local_epochs must be >= 0")
        if self.ua_window is not None and not 1 <= self.ua_window <= max(self.rounds, 1):
            raise ConfigError(f"ua_window must be in 1..rounds, got {self.ua_window}")
        if self.kl_order not in ("teacher_student", "student_teacher"):
            raise ConfigError(f"unknown kl_order {self.kl_order!r}")


def default_z0(alpha: float) -> int:
    """Dropping-rate default keyed to heterogeneity: 3 / 5 / 7 as alpha grows."""
    if alpha <= 0.3:
        return 3
    if alpha <= 0.75:
        return 5
    return 7


def resolve_config(cfg: RunConfig, spec) -> RunConfig:
    """Fill every None field with its concrete default and re-validate."""
    cfg.validate()
    out = cfg
    if out.ce_tau is None:
        out = replace(out, ce_tau=out.tau)
    if out.z0 is None:
        out = replace(out, z0=default_z0(out.alpha))
    if out.drop_set is None:
        out = replace(out, drop_set=default_drop_set(spec))
    else:
        out = replace(out, drop_set=tuple(sorted(int(l) for l in out.drop_set)))
    if out.fixed_layer is None and out.protocol == "fedd2s_fixed_layer":
        out = replace(out, fixed_layer=flatten_index(spec))
    if out.ua_window is None:
        out = replace(out, ua_window=min(10, max(out.rounds, 1)))
    for l in out.drop_set:
        validate_boundary(spec, l, allow_flatten=False)
    if out.fixed_layer is not None:
        validate_boundary(spec, out.fixed_layer, allow_flatten=True)
    out.validate()
    return out


# config file parsing: flat `key = value` lines, '#' comments, no sections

_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_value(name: str, text: str, kind: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        text = text[1:-1]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "z0":
            return math.inf if text.lower() in ("inf", "infinity") else float(int(text))
        if kind == "bool":
            return _BOOL[text.lower()]
        if kind == "int_list":
            return tuple(int(p) for p in text.split(",") if p.strip())
    except (ValueError, KeyError):
        raise ConfigError(f"config key {name!r}: cannot parse {text!r} as {kind}")
    return text


_FIELD_KINDS = {
    "protocol": "str", "rounds": "int", "clients": "int", "rho": "float",
    "epochs": "int", "batch": "int", "lr": "float", "tau": "float",
    "ce_tau": "float", "alpha": "float", "z0": "z0", "drop_set": "int_list",
    "fixed_layer": "int", "arch": "str", "dataset": "str", "seed": "int",
    "pre_local_epochs": "int", "ua_window": "int", "kl_order": "str",
    "wire_roundtrip": "bool",
}
assert set(_FIELD_KINDS) == {f.name for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse the flat key = value grammar; unknown keys are hard errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELD_KINDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        values[key] = _parse_value(key, val, _FIELD_KINDS[key])
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}")
    return parse_config_text(text, source=path)


def config_to_dict(cfg: RunConfig) -> dict:
    doc = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "z0" and v is not None and math.isinf(v):
            v = "inf"
        elif f.name == "z0" and v is not None:
            v = int(v)
        elif isinstance(v, tuple):
            v = list(v)
        doc[f.name] = v
    return doc


def config_from_dict(doc: dict) -> RunConfig:
    values = dict(doc)
    unknown = set(values) - set(_FIELD_KINDS)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if values.get("z0") == "inf":
        values["z0"] = math.inf
    if values.get("drop_set") is not None:
        values["drop_set"] = tuple(values["drop_set"])
    return RunConfig(**values)


# metrics


@dataclass
class ClientRound:
    id: int
    test_acc: float
    selected: bool
    distill_layer: int | None = None
    loss_kl: float | None = None
    loss_ce: float | None = None
    diag_kl_tv: float | None = None


@dataclass
class RoundRecord:
    round: int
    selected: list
    clients: list  # list[ClientRound], ordered by client id


@dataclass
class MetricsLog:
    config: dict
    rounds: list  # list[RoundRecord]; rounds[0] is the pre-training snapshot
    wall_clock: list = field(default_factory=list)  # seconds per round, not serialized

    def accuracy_matrix(self) -> np.ndarray:
        """(R+1, N) per-round, per-client test accuracies."""
        return np.array([[c.test_acc for c in r.clients] for r in self.rounds])


def average_ua(log: MetricsLog, window: int) -> float:
    """Percent accuracy: clients averaged per round, then the last `window`
    round means averaged."""
    if not 1 <= window <= len(log.rounds):
        raise ValueError(f"window {window} exceeds the {len(log.rounds)} recorded rounds")
    acc = log.accuracy_matrix()
    return float(100.0 * acc[-window:].mean())


def client_uas(log: MetricsLog, window: int) -> np.ndarray:
    """Per-client percent accuracy averaged over the last `window` rounds."""
    if not 1 <= window <= len(log.rounds):
        raise ValueError(f"window {window} exceeds the {len(log.rounds)} recorded rounds")
    return 100.0 * log.accuracy_matrix()[-window:].mean(axis=0)


def fairness_histogram(uas_percent, bucket_width: int) -> list:
    """Client counts per accuracy bucket; 100% lands in the top bucket."""
    if bucket_width < 1 or 100 % bucket_width != 0:
        raise ValueError(f"bucket width must divide 100, got {bucket_width}")
    n_buckets = 100 // bucket_width
    counts = [0] * n_buckets
    for ua in uas_percent:
        if not 0 <= ua <= 100:
            raise ValueError(f"accuracy {ua} outside [0, 100]")
        counts[min(int(ua // bucket_width), n_buckets - 1)] += 1
    return counts


def _round_to_doc(r: RoundRecord) -> dict:
    return {
        "round": r.round,
        "selected": list(r.selected),
        "clients": [
            {
                "id": c.id,
                "test_acc": c.test_acc,
                "selected": c.selected,
                "distill_layer": c.distill_layer,
                "loss_kl": c.loss_kl,
                "loss_ce": c.loss_ce,
                "diag_kl_tv": c.diag_kl_tv,
            }
            for c in r.clients
        ],
    }


def _round_from_doc(doc: dict) -> RoundRecord:
    clients = [
        ClientRound(
            id=int(c["id"]),
            test_acc=float(c["test_acc"]),
            selected=bool(c["selected"]),
            distill_layer=None if c.get("distill_layer") is None else int(c["distill_layer"]),
            loss_kl=c.get("loss_kl"),
            loss_ce=c.get("loss_ce"),
            diag_kl_tv=c.get("diag_kl_tv"),
        )
        for c in doc["clients"]
    ]
    return RoundRecord(round=int(doc["round"]), selected=[int(i) for i in doc["selected"]], clients=clients)


def metrics_to_json(log: MetricsLog) -> str:
    doc = {"config": log.config, "rounds": [_round_to_doc(r) for r in log.rounds]}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def metrics_from_json(text: str) -> MetricsLog:
    doc = json.loads(text)
    return MetricsLog(config=doc["config"], rounds=[_round_from_doc(r) for r in doc["rounds"]])


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_to_csv(log: MetricsLog) -> str:
    lines = [CSV_HEADER]
    for r in log.rounds:
        for c in r.clients:
            lines.append(
                ",".join(
                    [
                        str(r.round),
                        str(c.id),
                        _csv_cell(c.selected),
                        _csv_cell(float(c.test_acc)),
                        _csv_cell(c.distill_layer),
                        _csv_cell(c.loss_kl),
                        _csv_cell(c.loss_ce),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def metrics_from_csv(text: str) -> MetricsLog:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise MetricsError("metrics csv is empty")
    header = lines[0].strip()
    want = CSV_HEADER.split(",")
    got = header.split(",")
    for col in want:
        if col not in got:
            raise MetricsError(f"metrics csv is missing column {col!r}")
    if got != want:
        raise MetricsError(f"metrics csv header {header!r} does not match {CSV_HEADER!r}")
    by_round: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(want):
            raise MetricsError(f"metrics csv line {lineno}: expected {len(want)} cells")
        try:
            rnd = int(cells[0])
            cid = int(cells[1])
            sel = bool(int(cells[2]))
            acc = float(cells[3])
            layer = int(cells[4]) if cells[4] else None
            lkl = float(cells[5]) if cells[5] else None
            lce = float(cells[6]) if cells[6] else None
        except ValueError as e:
            raise MetricsError(f"metrics csv line {lineno}: {e}")
        by_round.setdefault(rnd, []).append(ClientRound(cid, acc, sel, layer, lkl, lce))
    rounds = []
    for rnd in sorted(by_round):
        clients = sorted(by_round[rnd], key=lambda c: c.id)
        selected = [c.id for c in clients if c.selected]
        rounds.append(RoundRecord(rnd, selected, clients))
    return MetricsLog(config={}, rounds=rounds)


def emit_metrics(log: MetricsLog, path: str, fmt: str | None = None) -> None:
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "json")
    if fmt not in ("csv", "json"):
        raise MetricsError(f"unknown metrics format {fmt!r}")
    text = metrics_to_csv(log) if fmt == "csv" else metrics_to_json(log)
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise MetricsError(f"cannot write metrics to {path}: {e.strerror}")


def load_metrics(path: str) -> MetricsLog:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise MetricsError(f"cannot read metrics from {path}: {e.strerror}")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return metrics_from_json(text)
    return metrics_from_csv(text)


# dataset resolution


def load_dataset(source: str, seed: int) -> Dataset:
    """Resolve a dataset source string.

    Forms: 'blobs:classes,per_class,dims,separation', 'digits:per_class,noise',
    'csv:path', 'idx:images_path,labels_path'.
    """
    kind, _, rest = source.partition(":")
    if kind == "digits":
        parts = rest.split(",") if rest else []
        if len(parts) != 2:
            raise ConfigError(f"digits source needs per_class,noise, got {source!r}")
        try:
            per_class = int(parts[0])
            noise = float(parts[1])
        except ValueError:
            raise ConfigError(f"cannot parse digits parameters in {source!r}")
        return synth_digits(per_class, noise, seed)
    if kind == "blobs":
        parts = rest.split(",") if rest else []
        if len(parts) != 4:
            raise ConfigError(f"blobs source needs classes,per_class,dims,separation, got {source!r}")
        try:
            classes, per_class, dims = (int(p) for p in parts[:3])
            separation = float(parts[3])
        except ValueError:
            raise ConfigError(f"cannot parse blobs parameters in {source!r}")
        return synth_blobs(classes, per_class, dims, separation, seed)
    if kind == "csv":
        if not rest:
            raise ConfigError("csv source needs a path, e.g. csv:data.csv")
        return load_csv(rest)
    if kind == "idx":
        parts = rest.split(",")
        if len(parts) != 2:
            raise ConfigError("idx source needs images,labels paths, e.g. idx:im.idx,lb.idx")
        return load_idx(parts[0], parts[1])
    raise ConfigError(f"unknown dataset source {source!r}")


# training drivers


def build_world(cfg: RunConfig):
    """Dataset, spec, resolved config, clients, and server for a run."""
    ds = load_dataset(cfg.dataset, cfg.seed)
    spec = parse_arch(cfg.arch, classes=ds.n_classes, input_shape=ds.x.shape[1:])
    cfg = resolve_config(cfg, spec)
    plan = dirichlet_partition(ds, cfg.clients, cfg.alpha, cfg.seed)
    init = init_params(spec, substream(cfg.seed, TAG_INIT))
    clients = []
    for cid in range(cfg.clients):
        client_seed = derive_seed(cfg.seed, TAG_CLIENT, cid)
        split = train_test_split(ds.subset(plan.clients[cid]), 0.2, client_seed)
        params = clone_params(init)
        clients.append(
            ClientState(
                id=cid, params=params, opt_j=adam_init(params), opt_q=adam_init(params),
                split=split, batch_seed=client_seed,
            )
        )
    server = ServerState(params=clone_params(init))
    return ds, spec, cfg, clients, server


def _record_round(round_idx, spec, clients, selected, layers, meters) -> RoundRecord:
    rows = []
    sel = set(selected)
    for c in clients:
        acc = protocol.evaluate(spec, c.params, c.split.test)
        meter = meters.get(c.id)
        rows.append(
            ClientRound(
                id=c.id,
                test_acc=acc,
                selected=c.id in sel,
                distill_layer=layers.get(c.id),
                loss_kl=None if meter is None else meter.kl_mean(),
                loss_ce=None if meter is None else meter.ce_mean(),
                diag_kl_tv=None if meter is None else meter.diag_kl_tv,
            )
        )
    return RoundRecord(round=round_idx, selected=list(selected), clients=rows)


def run_training(cfg: RunConfig) -> MetricsLog:
    """Execute cfg.rounds federated rounds and evaluate every client each round."""
    _, spec, cfg, clients, server = build_world(cfg)
    log = MetricsLog(config=config_to_dict(cfg), rounds=[])
    log.rounds.append(_record_round(0, spec, clients, [], {}, {}))
    drop_cfg = DropConfig(drop_set=cfg.drop_set, z0=cfg.z0)
    for r in range(1, cfg.rounds + 1):
        t0 = time.perf_counter()
        if cfg.protocol == "fedavg":
            selected, layers, meters = baselines.fedavg_round(
                server, clients, spec, round_idx=r, seed=cfg.seed, rho=cfg.rho,
                epochs=cfg.epochs, batch_size=cfg.batch, ce_tau=cfg.ce_tau, lr=cfg.lr,
            )
        elif cfg.protocol == "local_only":
            selected, layers, meters = baselines.local_only_round(
                clients, spec, round_idx=r, epochs=cfg.epochs,
                batch_size=cfg.batch, ce_tau=cfg.ce_tau, lr=cfg.lr,
            )
        else:
            selected, layers, meters = protocol.run_round(
                server, clients, spec, round_idx=r, seed=cfg.seed, rho=cfg.rho,
                epochs=cfg.epochs, batch_size=cfg.batch, tau=cfg.tau, ce_tau=cfg.ce_tau,
                lr=cfg.lr, kl_order=cfg.kl_order, drop_cfg=drop_cfg,
                fixed_layer=cfg.fixed_layer if cfg.protocol == "fedd2s_fixed_layer" else None,
                variant="mse" if cfg.protocol == "fedd2s_mse" else "head",
                pre_local_epochs=cfg.pre_local_epochs, wire_roundtrip=cfg.wire_roundtrip,
            )
        log.rounds.append(_record_round(r, spec, clients, selected, layers, meters))
        log.wall_clock.append(time.perf_counter() - t0)
    return log
