"""Round mechanics: layer scheduling, client selection, knowledge
extraction, both distillation directions, and the degeneracy reductions
that pin down the protocol wiring."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedd2s import data, losses, nn, optim, protocol, wire
from fedd2s.errors import IngestError
from fedd2s.experiment import RunConfig, build_world, run_training

from _oracles import schedule_walk


def tiny_spec() -> nn.ModelSpec:
    # conv, flatten, two dense: smallest stack with a non-trivial head
    return nn.ModelSpec(
        (4, 4, 1),
        (
            nn.Conv2D(3, 3, 2, 1),
            nn.Flatten(),
            nn.Dense(5),
            nn.Dense(3, activation="none"),
        ),
    )


TINY_ARCH = "in(4,4,1) conv(3,3,2,1) flatten dense(5) dense(3)"


def make_fixture(layer: int, seed: int = 0, batch: int = 6):
    rng = np.random.default_rng(seed)
    spec = tiny_spec()
    gp = nn.init_params(spec, rng)
    cp = nn.init_params(spec, rng)
    x = rng.uniform(size=(batch, *spec.input_shape))
    y = rng.integers(0, spec.num_classes, size=batch).astype(np.int64)
    h1 = nn.forward(spec, cp, x, 1, 1)
    hl = nn.forward(spec, cp, h1, 2, layer)
    return spec, gp, cp, x, (h1, hl, y)


def small_client(seed: int = 3, batch_seed: int = 7) -> tuple:
    spec = tiny_spec()
    ds = data.synth_blobs(3, 10, 16, 3.0, seed)
    split = data.train_test_split(ds, 0.2, seed)
    params = nn.init_params(spec, np.random.default_rng(seed + 1))
    client = protocol.ClientState(
        id=0, params=nn.clone_params(params), opt_j=optim.adam_init(params),
        opt_q=optim.adam_init(params), split=split, batch_seed=batch_seed,
    )
    gp = nn.init_params(spec, np.random.default_rng(seed + 2))
    return spec, client, params, gp


# schedule


def test_layer_schedule_hand_values():
    cfg = protocol.DropConfig((2, 4, 5), 3)
    assert protocol.distillation_layer(1, cfg) == 5  # first participation: deepest
    assert protocol.distillation_layer(3, cfg) == 5
    assert protocol.distillation_layer(4, cfg) == 4
    assert protocol.distillation_layer(6, cfg) == 4
    assert protocol.distillation_layer(7, cfg) == 2
    assert protocol.distillation_layer(100, cfg) == 2  # clamped at the shallowest


def test_layer_schedule_four_entry_set():
    # four boundaries, rate 3: the fourth participation moves one step shallower
    cfg = protocol.DropConfig((3, 4, 5, 6), 3)
    assert protocol.distillation_layer(4, cfg) == 5
    assert protocol.distillation_layer(100, cfg) == 3


def test_layer_schedule_infinite_rate_pins_deepest():
    cfg = protocol.DropConfig((2, 5), math.inf)
    for z in (1, 7, 10_000):
        assert protocol.distillation_layer(z, cfg) == 5


@given(
    z=st.integers(1, 100),
    z0=st.integers(1, 7),
    drop=st.lists(st.integers(1, 30), min_size=1, max_size=6, unique=True),
)
@settings(max_examples=120, deadline=None)
def test_layer_schedule_matches_stepwise_walk(z, z0, drop):
    cfg = protocol.DropConfig(tuple(drop), z0)
    assert protocol.distillation_layer(z, cfg) == schedule_walk(z, z0, sorted(drop, reverse=True))


def test_layer_schedule_monotone_and_constant_on_blocks():
    cfg = protocol.DropConfig((1, 3, 4, 6), 4)
    seq = [protocol.distillation_layer(z, cfg) for z in range(1, 60)]
    assert all(a >= b for a, b in zip(seq, seq[1:]))
    for k, v in enumerate(seq):
        assert v == seq[4 * (k // 4)]


def test_drop_config_validation():
    with pytest.raises(ValueError):
        protocol.DropConfig((), 3)
    with pytest.raises(ValueError):
        protocol.DropConfig((2, 2, 4), 3)
    with pytest.raises(ValueError):
        protocol.DropConfig((2, 4), 0)
    with pytest.raises(ValueError):
        protocol.distillation_layer(0, protocol.DropConfig((2,), 3))


def test_epoch_codes_are_distinct():
    seen = set()
    for r in range(4):
        for phase in (protocol.PHASE_LOCAL, protocol.PHASE_EXTRACT, protocol.PHASE_S2C):
            for idx in range(6):
                seen.add(protocol.epoch_code(r, phase, idx))
    assert len(seen) == 4 * 3 * 6


def test_epoch_code_pass_range():
    with pytest.raises(ValueError):
        protocol.epoch_code(0, protocol.PHASE_LOCAL, 64)
    with pytest.raises(ValueError):
        protocol.epoch_code(0, protocol.PHASE_LOCAL, -1)


# selection


def test_select_full_participation_takes_everyone():
    assert protocol.select_clients(5, 1.0, seed=9, round_idx=3) == [0, 1, 2, 3, 4]


def test_select_size_rounds_half_up():
    assert len(protocol.select_clients(50, 0.2, 0, 1)) == 10
    assert len(protocol.select_clients(8, 0.5, 0, 1)) == 4
    assert len(protocol.select_clients(3, 0.5, 0, 1)) == 2
    assert len(protocol.select_clients(10, 0.04, 0, 1)) == 1  # never empty


def test_select_is_deterministic_per_round_and_varies_across_rounds():
    a = protocol.select_clients(10, 0.3, seed=4, round_idx=7)
    assert a == protocol.select_clients(10, 0.3, seed=4, round_idx=7)
    assert a == sorted(set(a))
    draws = {tuple(protocol.select_clients(10, 0.3, seed=4, round_idx=r)) for r in range(30)}
    assert len(draws) > 1


def test_select_frequencies_are_uniform():
    # 2000 rounds of 3-of-10: per-client count 600, sigma ~20.5, allow 4 sigma
    counts = np.zeros(10)
    for r in range(2000):
        for cid in protocol.select_clients(10, 0.3, seed=11, round_idx=r):
            counts[cid] += 1
    assert np.all(np.abs(counts - 600) < 82)


def test_select_rho_validation():
    with pytest.raises(ValueError):
        protocol.select_clients(5, 0.0, 0, 0)
    with pytest.raises(ValueError):
        protocol.select_clients(5, 1.2, 0, 0)


# extraction


def test_extract_coinciding_layers_duplicate_first_activations():
    spec, client, _, _ = small_client()
    trips = protocol.extract_knowledge(spec, client.params, client.split, 1, 8, client.batch_seed, code=0)
    assert trips
    for h1, hl, y in trips:
        assert np.array_equal(h1, hl)
        assert len(y) == len(h1)


@pytest.mark.parametrize("layer", [1, 3, 4])
def test_extract_matches_independent_prefix(layer):
    spec, client, _, _ = small_client()
    code = protocol.epoch_code(2, protocol.PHASE_EXTRACT, 0)
    trips = protocol.extract_knowledge(spec, client.params, client.split, layer, 8, client.batch_seed, code)
    got = np.concatenate([hl for _, hl, _ in trips])
    order = np.concatenate(list(data.batches(len(client.split.train), 8, client.batch_seed, code)))
    want = nn.forward_prefix(spec, client.params, client.split.train.x[order], layer)
    assert np.array_equal(got, want)
    assert sorted(order.tolist()) == list(range(len(client.split.train)))


def test_extract_deepest_layer_yields_logits():
    spec, client, _, _ = small_client()
    trips = protocol.extract_knowledge(spec, client.params, client.split, spec.num_layers, 8, client.batch_seed, code=0)
    assert all(hl.shape[-1] == spec.num_classes for _, hl, _ in trips)


# clients-to-server distillation


def test_c2s_coinciding_distributions_make_distillation_inert():
    # boundary at layer 1: teacher and student read the same H1 through the
    # same staged suffix, so the distributions coincide, the loss is exactly
    # zero, and the gradient is zero to machine precision (softmax row sums
    # are exact only to one ulp)
    spec, gp, cp, x, trip = make_fixture(layer=1)
    h1, hl, y = trip
    logits = nn.forward(spec, gp, h1, 2, spec.num_layers)
    loss, g = losses.kd_loss_grad(logits, losses.tempered_softmax(logits, 1.0), 1.0)
    assert loss == 0.0
    assert np.abs(g).max() < 1e-14

    meter = protocol.LossMeter()
    out = protocol.c2s_distill(
        spec, gp, [trip], 1, passes=2, tau=1.0, ce_tau=1.0, lr=0.01,
        kl_order="teacher_student", variant="head", meter=meter,
    )
    assert meter.kl_sum == 0.0

    # the pass therefore tracks a label-only loop; adam turns the ulp-scale
    # gradient noise into at most ~1e-10 parameter drift
    oracle = nn.clone_params(gp)
    opt = optim.adam_init(oracle)
    for _ in range(2):
        out_logits, tr = nn.forward_trace(spec, oracle, h1, 2, spec.num_layers)
        _, dlog = losses.cross_entropy_grad(out_logits, y, 1.0)
        grads, _ = nn.backward(spec, oracle, tr, dlog)
        oracle, opt = optim.adam_step(oracle, grads, opt, 0.01)
    for a, b in zip(out, oracle):
        if a is None:
            assert b is None
            continue
        assert np.allclose(a.w, b.w, atol=1e-8)
        assert np.allclose(a.b, b.b, atol=1e-8)


def test_c2s_leaves_layer_one_and_the_caller_untouched():
    spec, gp, cp, x, trip = make_fixture(layer=3)
    gp_before = nn.clone_params(gp)
    meter = protocol.LossMeter()
    out = protocol.c2s_distill(
        spec, gp, [trip], 3, passes=2, tau=2.0, ce_tau=1.0, lr=0.01,
        kl_order="teacher_student", variant="head", meter=meter,
    )
    assert nn.params_equal(gp, gp_before)  # staged copy only
    # layer 1 is unreachable from H1 and must stay bitwise identical
    assert np.array_equal(out[0].w, gp[0].w) and np.array_equal(out[0].b, gp[0].b)
    assert out[1] is None
    assert not np.array_equal(out[2].w, gp[2].w)
    assert meter.kl_n == meter.ce_n == 2


def test_c2s_runs_are_repeatable():
    spec, gp, cp, x, trip = make_fixture(layer=3)
    kw = dict(passes=1, tau=1.0, ce_tau=1.0, lr=0.01, kl_order="teacher_student", variant="head")
    a = protocol.c2s_distill(spec, gp, [trip], 3, meter=protocol.LossMeter(), **kw)
    b = protocol.c2s_distill(spec, gp, [trip], 3, meter=protocol.LossMeter(), **kw)
    assert nn.params_equal(a, b)


def test_c2s_distillation_objective_descends_on_fixture():
    spec, gp, cp, x, _ = make_fixture(layer=3, batch=12)
    rng = np.random.default_rng(5)
    trips = []
    for _ in range(3):
        xb = rng.uniform(size=(6, *spec.input_shape))
        yb = rng.integers(0, 3, size=6).astype(np.int64)
        h1 = nn.forward(spec, cp, xb, 1, 1)
        trips.append((h1, nn.forward(spec, cp, h1, 2, 3), yb))

    def j_total(theta):
        total = 0.0
        for h1, hl, _ in trips:
            t = losses.tempered_softmax(nn.forward(spec, theta, hl, 4, spec.num_layers), 1.0)
            s = losses.tempered_softmax(nn.forward(spec, theta, h1, 2, spec.num_layers), 1.0)
            total += losses.kl_divergence(s, t)
        return total

    before = j_total(gp)
    out = protocol.c2s_distill(
        spec, gp, trips, 3, passes=1, tau=1.0, ce_tau=1.0, lr=0.001,
        kl_order="teacher_student", variant="head", meter=protocol.LossMeter(),
    )
    assert j_total(out) <= before + 1e-12


def test_c2s_deepest_boundary_is_plain_response_distillation():
    # boundary at the output layer: the staged head is the identity, so the
    # first distillation loss equals tau^2 * KL between the tempered
    # transmitted logits and the staged model's own tempered logits
    spec, gp, cp, x, trip = make_fixture(layer=4)
    h1, hl, y = trip
    tau = 2.0
    meter = protocol.LossMeter()
    protocol.c2s_distill(
        spec, gp, [trip], spec.num_layers, passes=1, tau=tau, ce_tau=1.0,
        lr=0.01, kl_order="teacher_student", variant="head", meter=meter,
    )
    student = losses.tempered_softmax(nn.forward(spec, gp, h1, 2, spec.num_layers), tau)
    want = tau * tau * losses.kl_divergence(student, losses.tempered_softmax(hl, tau))
    assert meter.kl_n == 1
    assert abs(meter.kl_sum - want) < 1e-10


def test_c2s_mse_variant_fits_transmitted_activations():
    spec, gp, cp, x, trip = make_fixture(layer=3)
    h1, hl, y = trip
    before = losses.mse(nn.forward(spec, gp, h1, 2, 3), hl)
    out = protocol.c2s_distill(
        spec, gp, [trip], 3, passes=1, tau=1.0, ce_tau=1.0, lr=0.001,
        kl_order="teacher_student", variant="mse", meter=protocol.LossMeter(),
    )
    assert losses.mse(nn.forward(spec, out, h1, 2, 3), hl) <= before + 1e-12


# server-to-clients distillation


def test_s2c_targets_coincide_at_first_layer():
    spec, gp, cp, x, trip = make_fixture(layer=1)
    h1, hl, _ = trip
    t, v = protocol.s2c_targets(spec, gp, h1, hl, 1, tau=1.3)
    assert np.array_equal(t, v)
    assert np.allclose(t.sum(axis=-1), 1.0, atol=1e-6)
    assert np.allclose(v.sum(axis=-1), 1.0, atol=1e-6)


def test_s2c_targets_match_independent_full_forward():
    # when the client's first layer equals the global one, the target built
    # from transmitted H1 must equal a full forward on the raw inputs
    spec, gp, cp, x, _ = make_fixture(layer=3)
    h1 = nn.forward(spec, gp, x, 1, 1)
    hl = nn.forward(spec, gp, h1, 2, 3)
    t, _ = protocol.s2c_targets(spec, gp, h1, hl, 3, tau=1.0)
    want = losses.tempered_softmax(nn.forward(spec, gp, x, 1, spec.num_layers), 1.0)
    assert np.array_equal(t, want)


def test_s2c_leaves_the_transmitted_head_untouched():
    spec, client, params_before, gp = small_client()
    gp_before = nn.clone_params(gp)
    meter = protocol.LossMeter()
    protocol.s2c_distill(
        spec, client, gp, 3, round_idx=1, passes=2, batch_size=8, tau=1.0,
        ce_tau=1.0, lr=0.01, kl_order="teacher_student", variant="head", meter=meter,
    )
    assert nn.params_equal(gp, gp_before)  # bitwise: the head is read-only
    assert not nn.params_equal(client.params, params_before)
    assert meter.kl_n == meter.ce_n > 0


def test_s2c_distillation_gradient_stops_at_the_boundary():
    # reproduce one distillation step's backward pass and check which blocks
    # receive gradients: only the local prefix up to the boundary
    spec, gp, cp, x, _ = make_fixture(layer=3)
    h1 = nn.forward(spec, cp, x, 1, 1)
    target = losses.tempered_softmax(nn.forward(spec, gp, h1, 2, spec.num_layers), 1.0)
    hpre, tr_pre = nn.forward_trace(spec, cp, x, 1, 3)
    out, tr_suf = nn.forward_trace(spec, gp, hpre, 4, spec.num_layers)
    _, dlog = losses.kd_loss_grad(out, target, 1.0)
    head_grads, gh = nn.backward(spec, gp, tr_suf, dlog, param_lo=1, param_hi=0, need_input_grad=True)
    assert all(g is None for g in head_grads)
    assert gh.shape == hpre.shape
    grads, _ = nn.backward(spec, cp, tr_pre, gh)
    assert grads[0] is not None and grads[2] is not None
    assert grads[1] is None  # flatten holds no parameters
    assert grads[3] is None  # above the boundary


def test_s2c_coinciding_target_is_inert():
    # boundary at layer 1, whole train set in one batch, one pass: the target
    # equals the client's own head-mapped output, so the single distillation
    # step contributes exactly zero loss
    spec, client, params_before, gp = small_client()
    n = len(client.split.train)
    meter = protocol.LossMeter()
    protocol.s2c_distill(
        spec, client, gp, 1, round_idx=1, passes=1, batch_size=n, tau=1.0,
        ce_tau=1.0, lr=0.01, kl_order="teacher_student", variant="head", meter=meter,
    )
    assert meter.kl_n == 1 and meter.kl_sum == 0.0


def test_s2c_distillation_objective_descends_on_fixture():
    spec, client, _, gp = small_client()
    xs = client.split.train.x
    snapshot = nn.clone_params(client.params)
    h1 = nn.forward(spec, snapshot, xs, 1, 1)
    target = losses.tempered_softmax(nn.forward(spec, gp, h1, 2, spec.num_layers), 1.0)

    def j_mean(theta):
        s = losses.tempered_softmax(
            nn.forward(spec, gp, nn.forward(spec, theta, xs, 1, 3), 4, spec.num_layers), 1.0
        )
        return losses.kl_divergence(s, target)

    before = j_mean(client.params)
    protocol.s2c_distill(
        spec, client, gp, 3, round_idx=1, passes=1, batch_size=len(xs), tau=1.0,
        ce_tau=1.0, lr=0.001, kl_order="teacher_student", variant="head",
        meter=protocol.LossMeter(),
    )
    assert j_mean(client.params) <= before + 1e-12


def test_s2c_mse_variant_pulls_prefix_toward_global_features():
    spec, client, _, gp = small_client()
    xs = client.split.train.x
    snapshot = nn.clone_params(client.params)
    target = nn.forward(spec, gp, nn.forward(spec, snapshot, xs, 1, 1), 2, 3)
    before = losses.mse(nn.forward(spec, client.params, xs, 1, 3), target)
    protocol.s2c_distill(
        spec, client, gp, 3, round_idx=1, passes=1, batch_size=len(xs), tau=1.0,
        ce_tau=1.0, lr=0.001, kl_order="teacher_student", variant="mse",
        meter=protocol.LossMeter(),
    )
    assert losses.mse(nn.forward(spec, client.params, xs, 1, 3), target) <= before + 1e-12


# full rounds


def run_round_defaults(server, clients, spec, cfg, round_idx):
    return protocol.run_round(
        server, clients, spec, round_idx=round_idx, seed=cfg.seed, rho=cfg.rho,
        epochs=cfg.epochs, batch_size=cfg.batch, tau=cfg.tau, ce_tau=cfg.ce_tau,
        lr=cfg.lr, kl_order=cfg.kl_order,
        drop_cfg=protocol.DropConfig(cfg.drop_set, cfg.z0),
    )


def test_non_participants_are_bitwise_unchanged():
    cfg = RunConfig(
        dataset="blobs:3,12,16,3.0", arch=TINY_ARCH, clients=4, rho=0.5,
        rounds=0, epochs=2, batch=8, drop_set=(1, 3, 4), z0=2, seed=5,
    )
    _, spec, cfg, clients, server = build_world(cfg)
    before = [nn.clone_params(c.params) for c in clients]
    selected, layers, meters = run_round_defaults(server, clients, spec, cfg, 1)
    assert selected == sorted(selected) and len(selected) == 2
    for cid, c in enumerate(clients):
        if cid in selected:
            assert not nn.params_equal(c.params, before[cid])
            assert c.z == 1 and layers[cid] == 4  # deepest on first participation
            assert meters[cid].diag_kl_tv is not None and meters[cid].diag_kl_tv >= 0.0
        else:
            assert nn.params_equal(c.params, before[cid])
            assert c.z == 0 and cid not in layers and cid not in meters


def test_round_aggregation_is_mean_of_staged_copies():
    # with lr=0 nothing trains, so the aggregated server params must equal
    # the mean of the participants' staged copies, each a clone of the server
    cfg = RunConfig(
        dataset="blobs:3,12,16,3.0", arch=TINY_ARCH, clients=3, rho=1.0,
        rounds=0, epochs=2, batch=8, drop_set=(3, 4), z0=2, seed=2, lr=1e-300,
    )
    _, spec, cfg, clients, server = build_world(cfg)
    server_before = nn.clone_params(server.params)
    run_round_defaults(server, clients, spec, cfg, 1)
    for got, want in zip(server.params, server_before):
        if got is None:
            continue
        assert np.allclose(got.w, want.w, atol=1e-250)
        assert np.allclose(got.b, want.b, atol=1e-250)


def test_wire_roundtrip_does_not_change_the_round():
    def run(wire_roundtrip):
        cfg = RunConfig(
            dataset="blobs:3,12,16,3.0", arch=TINY_ARCH, clients=2, rho=1.0,
            rounds=0, epochs=2, batch=8, drop_set=(3, 4), z0=2, seed=8,
        )
        _, spec, cfg, clients, server = build_world(cfg)
        protocol.run_round(
            server, clients, spec, round_idx=1, seed=cfg.seed, rho=cfg.rho,
            epochs=cfg.epochs, batch_size=cfg.batch, tau=cfg.tau, ce_tau=cfg.ce_tau,
            lr=cfg.lr, kl_order=cfg.kl_order,
            drop_cfg=protocol.DropConfig(cfg.drop_set, cfg.z0),
            wire_roundtrip=wire_roundtrip,
        )
        return server, clients

    sa, ca = run(False)
    sb, cb = run(True)
    assert nn.params_equal(sa.params, sb.params)
    for a, b in zip(ca, cb):
        assert nn.params_equal(a.params, b.params)


def test_triplets_survive_the_wire_bitwise():
    spec, gp, cp, x, trip = make_fixture(layer=3)
    back = protocol.triplets_via_wire(3, 2, [trip, trip])
    assert len(back) == 2
    for b1, bl, by in back:
        assert np.array_equal(b1, trip[0])
        assert np.array_equal(bl, trip[1])
        assert np.array_equal(by, trip[2])


def test_wire_truncation_is_reported():
    spec, gp, cp, x, trip = make_fixture(layer=3)
    blob = wire.encode_triplets(1, 2, [trip])
    with pytest.raises(IngestError):
        wire.decode_triplets(blob[:-3])


def test_single_client_reduction_matches_flat_script():
    # one client, full participation, boundary pinned at the output layer: a
    # round collapses to extract, response-distill into a staged copy, adopt
    # the copy, distill it back, fit labels; the flat loop below applies the
    # same four stages with no federation machinery in between
    cfg = RunConfig(
        protocol="fedd2s", rounds=3, clients=1, rho=1.0, epochs=2, batch=8,
        lr=0.01, tau=1.5, alpha=1.0, z0=math.inf, drop_set=(4,), arch=TINY_ARCH,
        dataset="blobs:3,12,16,3.0", seed=6,
    )
    _, spec, rcfg, clients, server = build_world(cfg)
    c = clients[0]
    L = spec.num_layers
    train = c.split.train
    accs = [protocol.evaluate(spec, c.params, c.split.test)]
    for r in range(1, cfg.rounds + 1):
        code = protocol.epoch_code(r, protocol.PHASE_EXTRACT, 0)
        trips = []
        for idx in data.batches(len(train), rcfg.batch, c.batch_seed, code):
            h1 = nn.forward(spec, c.params, train.x[idx], 1, 1)
            trips.append((h1, nn.forward(spec, c.params, h1, 2, L), train.y[idx]))

        staged = nn.clone_params(server.params)
        oj, oq = optim.adam_init(staged), optim.adam_init(staged)
        for h1, hl, y in trips:  # one pass: epochs // 2
            out, tr = nn.forward_trace(spec, staged, h1, 2, L)
            _, dlog = losses.kd_loss_grad(out, losses.tempered_softmax(hl, rcfg.tau), rcfg.tau)
            g, _ = nn.backward(spec, staged, tr, dlog)
            staged, oj = optim.adam_step(staged, g, oj, rcfg.lr)
            out, tr = nn.forward_trace(spec, staged, h1, 2, L)
            _, dlog = losses.cross_entropy_grad(out, y, rcfg.ce_tau)
            g, _ = nn.backward(spec, staged, tr, dlog)
            staged, oq = optim.adam_step(staged, g, oq, rcfg.lr)
        server.params = staged  # mean of a single staged copy

        snapshot = nn.clone_params(c.params)
        code = protocol.epoch_code(r, protocol.PHASE_S2C, 0)
        for idx in data.batches(len(train), rcfg.batch, c.batch_seed, code):
            x, y = train.x[idx], train.y[idx]
            h1 = nn.forward(spec, snapshot, x, 1, 1)
            target = losses.tempered_softmax(nn.forward(spec, server.params, h1, 2, L), rcfg.tau)
            out, tr = nn.forward_trace(spec, c.params, x, 1, L)
            _, dlog = losses.kd_loss_grad(out, target, rcfg.tau)
            g, _ = nn.backward(spec, c.params, tr, dlog)
            c.params, c.opt_j = optim.adam_step(c.params, g, c.opt_j, rcfg.lr)
            out, tr = nn.forward_trace(spec, c.params, x, 1, L)
            _, dlog = losses.cross_entropy_grad(out, y, rcfg.ce_tau)
            g, _ = nn.backward(spec, c.params, tr, dlog)
            c.params, c.opt_q = optim.adam_step(c.params, g, c.opt_q, rcfg.lr)
        accs.append(protocol.evaluate(spec, c.params, c.split.test))

    # the protocol-driven world must land on bitwise-identical parameters
    _, spec2, rcfg2, clients2, server2 = build_world(cfg)
    for r in range(1, cfg.rounds + 1):
        selected, layers, _ = run_round_defaults(server2, clients2, spec2, rcfg2, r)
        assert selected == [0] and layers == {0: L}
    assert nn.params_equal(clients2[0].params, c.params)
    assert nn.params_equal(server2.params, server.params)

    # and the metrics driver reports the same accuracy trajectory
    log = run_training(cfg)
    assert [rec.clients[0].test_acc for rec in log.rounds] == accs
