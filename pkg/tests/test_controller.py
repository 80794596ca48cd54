import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quatmotion import controller as ctl
from quatmotion import integrators as it
from quatmotion import rotcore as rc
from quatmotion import runner, synth

from .conftest import random_unit_quats

DATA = Path(__file__).parent / "data"
ONE = np.array([1.0, 0, 0, 0])
Z = np.array([0.0, 0, 1])


def gains(n=1, kp=0.0, kd=0.0, ka=0.0, bias=None):
    return ctl.Gains(np.full(n, kp), np.full(n, kd), np.full(n, ka),
                     np.zeros((n, 3)) if bias is None else bias, 0.0, 0.0)


def flat(g: ctl.Gains):
    return np.concatenate([g.kp, g.kd, g.ka, g.bias.reshape(-1), [g.root_kp, g.root_kd]])


def test_gain_scales_printed_values():
    s = ctl.GainScales()
    assert (s.a, s.p, s.d, s.root_p, s.root_d) == (40, 40, 30, 200, 200)


# -- error terms -------------------------------------------------------------------------------

def test_pd_error_examples():
    q = rc.from_axis_angle([0.3, 0.1, -0.7], 1.1)
    np.testing.assert_array_equal(ctl.pd_error(q, q), [0, 0, 0])
    e = ctl.pd_error(rc.from_axis_angle(Z, 0.2), ONE)
    np.testing.assert_allclose(e, [0, 0, np.sin(0.1)], atol=1e-16)
    assert e[2] == pytest.approx(0.09983, abs=1e-5)


def test_pd_error_sign_canonical():
    qr = rc.from_axis_angle(Z, 0.2)
    np.testing.assert_allclose(ctl.pd_error(-qr, ONE), ctl.pd_error(qr, ONE), atol=1e-16)


def test_pd_error_swap_and_frames(rng):
    a, b = random_unit_quats(rng, 500), random_unit_quats(rng, 500)
    world = ctl.pd_error(a, b, "world")
    np.testing.assert_allclose(ctl.pd_error(b, a, "world"), -world, atol=1e-15)
    body = ctl.pd_error(a, b, "body")
    np.testing.assert_allclose(ctl.pd_error(b, a, "body"), -body, atol=1e-15)
    # world and body errors differ by the rotation of the current pose
    np.testing.assert_allclose(world, rc.rotate(b, body), atol=1e-14)


def test_pd_error_rejects_off_sphere():
    with pytest.raises(ValueError):
        ctl.pd_error(np.array([1.1, 0, 0, 0]), ONE)


def window_about_z(angles):
    return ctl.ReferenceWindow(np.stack([rc.from_axis_angle(Z, a)[None] for a in angles]), np.zeros(3))


def test_accel_enhancement_examples():
    assert np.all(ctl.accel_enhancement(window_about_z([0.4, 0.4, 0.4])) == 0)
    np.testing.assert_allclose(ctl.accel_enhancement(window_about_z([0.0, 0.1, 0.3]))[0],
                               [0, 0, np.sin(0.1) - np.sin(0.05)], atol=1e-16)


@settings(max_examples=200)
@given(start=st.floats(-10, 10), step=st.floats(-1, 1),
       axis=st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1))
def test_accel_enhancement_vanishes_at_constant_increment(start, step, axis):
    angles = [start, start + step, start + 2 * step]
    w = ctl.ReferenceWindow(np.stack([rc.from_axis_angle(axis, a)[None] for a in angles]), np.zeros(3))
    assert np.max(np.abs(ctl.accel_enhancement(w))) <= 1e-12


def test_window_padding_repeats_earliest():
    q0 = rc.from_axis_angle(Z, 0.3)[None]
    w = ctl.ReferenceWindow.from_history([q0], np.zeros(3))
    assert w.quats.shape == (3, 1, 4)
    np.testing.assert_array_equal(ctl.accel_enhancement(w), 0)
    q1 = rc.from_axis_angle(Z, 0.5)[None]
    w = ctl.ReferenceWindow.from_history([q0, q1], np.zeros(3))
    np.testing.assert_array_equal(w.quats[0], q0)
    np.testing.assert_array_equal(w.current, q1)


def test_angular_accel_example():
    q_ref = rc.from_axis_angle(Z, 0.2)[None]
    w = ctl.ReferenceWindow(np.stack([q_ref] * 3), np.zeros(3))
    acc = ctl.angular_accel(ONE[None], np.array([[0, 0, 0.5]]), w, gains(kp=40, kd=30))
    np.testing.assert_allclose(acc, [[0, 0, 40 * np.sin(0.1) - 15]], atol=1e-14)
    assert acc[0, 2] == pytest.approx(-11.00666, abs=1e-5)


@pytest.mark.parametrize("frame", ["world", "body"])
def test_equilibrium_is_exact(rng, frame):
    q_ref = random_unit_quats(rng, 24)
    w = ctl.ReferenceWindow(np.stack([q_ref] * 3), np.zeros(3))
    for q in (q_ref, -q_ref):
        acc = ctl.angular_accel(q, np.zeros((24, 3)), w, gains(24, 40, 30, 40), frame)
        assert np.all(acc == 0)


def test_alpha_amplifies_step_response():
    before = rc.from_axis_angle(Z, 0.0)[None]
    after = rc.from_axis_angle(Z, 0.5)[None]
    w = ctl.ReferenceWindow(np.stack([before, before, after]), np.zeros(3))
    base = ctl.angular_accel(before, np.zeros((1, 3)), w, gains(kp=40, kd=30, ka=0))
    boosted = ctl.angular_accel(before, np.zeros((1, 3)), w, gains(kp=40, kd=30, ka=10))
    assert np.linalg.norm(boosted) > np.linalg.norm(base)


def test_bias_and_alpha_toggles():
    before, after = rc.from_axis_angle(Z, 0.0)[None], rc.from_axis_angle(Z, 0.5)[None]
    w = ctl.ReferenceWindow(np.stack([before, before, after]), np.zeros(3))
    g = gains(kp=0, kd=0, ka=10, bias=np.array([[1.0, 2, 3]]))
    q = before
    np.testing.assert_allclose(ctl.angular_accel(q, np.zeros((1, 3)), w, g, use_alpha=False), [[1, 2, 3]])
    np.testing.assert_allclose(ctl.angular_accel(q, np.zeros((1, 3)), w, g, use_bias=False),
                               10 * ctl.accel_enhancement(w), atol=1e-15)


def test_vector_accel_component_differences():
    g = gains(kp=2, kd=3, ka=5, bias=np.array([[0.1, 0, 0]]))
    hist = [np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]]), np.array([[3.0, 0, 0]])]
    acc = ctl.vector_accel(hist[2], np.array([[1.0, 0, 0]]), np.array([[1.0, 0, 0]]), hist, g)
    np.testing.assert_allclose(acc, [[2 * 2 - 3 + 0.1 + 5 * 1, 0, 0]])


# -- closed-loop damping -----------------------------------------------------------------------

def closed_loop(q0, target, kp, kd, steps=500, dt=0.04):
    g = gains(len(q0), kp, kd)
    cfg = it.StepConfig(dt=dt, frame="world")
    w = ctl.ReferenceWindow(np.stack([target] * 3), np.zeros(3))
    q, omega = q0, np.zeros((len(q0), 3))
    peak = 0.0
    for _ in range(steps):
        omega = it.step_omega(omega, ctl.angular_accel(q, omega, w, g), cfg)
        q = it.step_exact(q, omega, cfg)
        peak = max(peak, float(np.max(np.linalg.norm(omega, axis=-1))))
    return rc.geodesic_angle(q, target), peak


def test_damping_at_paper_scale_gains(rng):
    target = random_unit_quats(rng, 200)
    axes = rng.normal(size=(200, 3))
    q0 = rc.hamilton(rc.from_axis_angle(axes, rng.uniform(0, 0.3, 200)), target)
    err, peak = closed_loop(q0, target, 40.0, 30.0)
    assert np.max(err) < 1e-4
    assert peak < 10


# -- initial state -----------------------------------------------------------------------------

def test_init_state_examples():
    s = ctl.init_state(ONE[None], ONE[None], np.zeros(3), np.zeros(3), 0.04)
    np.testing.assert_array_equal(s.omega, [[0, 0, 0]])
    s = ctl.init_state(ONE[None], rc.from_axis_angle(Z, 0.04)[None], np.zeros(3), [0.04, 0, 0], 0.04)
    np.testing.assert_allclose(s.omega, [[0, 0, 1]], atol=1e-13)
    np.testing.assert_allclose(s.root.v, [1, 0, 0], atol=1e-15)
    np.testing.assert_array_equal(s.q, ONE[None])
    np.testing.assert_array_equal(s.beta, [0.0])


def test_init_state_reproduces_second_reference(rng):
    q0, q1 = random_unit_quats(rng, 24), random_unit_quats(rng, 24)
    s = ctl.init_state(q0, q1, np.zeros(3), np.zeros(3), 0.04)
    q = it.step_exact(q0, s.omega, it.StepConfig())
    assert np.max(rc.geodesic_angle(q, q1)) <= 1e-12


# -- gain policies -----------------------------------------------------------------------------

def test_constant_policy_and_bounds():
    pol = ctl.gain_policy_constant({"kp": 40, "kd": 30, "ka": 10}, n_joints=3)
    g = pol(None, None, None, None, None)
    np.testing.assert_array_equal(g.kp, [40, 40, 40])
    assert g.within(ctl.GainScales())
    with pytest.raises(ValueError, match="scales"):
        ctl.gain_policy_constant({"kp": 41}, n_joints=3)
    with pytest.raises(ValueError, match="bias"):
        ctl.gain_policy_constant({"bias": "adaptive"}, n_joints=3)


def test_feedforward_bias_cancels_velocity_lag():
    rate = 0.8
    refs = [rc.from_axis_angle(Z, rate * 0.04 * k)[None] for k in range(3)]
    w = ctl.ReferenceWindow(np.stack(refs), np.zeros(3))
    pol = ctl.gain_policy_constant({"kp": 40, "kd": 30, "ka": 0, "bias": "feedforward"}, n_joints=1)
    # on the reference, moving at the reference rate: zero acceleration
    acc = ctl.angular_accel(refs[2], np.array([[0, 0, rate]]), w, pol(None, None, w, None, None))
    np.testing.assert_allclose(acc, 0, atol=1e-12)


def zero_head_weights(seed=0, n=24, hidden=512):
    w = ctl.init_weights(seed, n, hidden)
    for k in w:
        if k.startswith("head."):
            w[k] = np.zeros_like(w[k])
    return w


def test_zero_heads_give_half_scale():
    w = zero_head_weights()
    x = np.random.default_rng(3).normal(size=ctl.input_dim(24))
    g = ctl.gains_from_raw(ctl.raw_heads(x, w))
    np.testing.assert_array_equal(g.kp, 20.0)
    np.testing.assert_array_equal(g.kd, 15.0)
    np.testing.assert_array_equal(g.ka, 20.0)
    np.testing.assert_array_equal(g.bias, 0.0)
    assert g.root_kp == 100.0 and g.root_kd == 100.0


def test_sigmoid_saturation():
    assert abs(ctl.sigmoid(30.0) * 40 - 40) < 1e-11
    assert ctl.sigmoid(-800.0) == 0.0 and ctl.sigmoid(800.0) == 1.0


def test_network_dimensions():
    assert ctl.input_dim(24) == 273
    shapes = ctl.layer_shapes()
    assert shapes["block1.linear.weight"] == (512, 273)
    assert shapes["block2.linear.weight"] == (512, 512)


def test_gain_bounds_over_random_weight_draws():
    rng = np.random.default_rng(2024)
    n, hidden = 24, 16
    shapes = ctl.layer_shapes(n, hidden)
    scales = ctl.GainScales()
    lo = np.zeros(3 * n + 2)
    hi = np.r_[np.full(n, scales.p), np.full(n, scales.d), np.full(n, scales.a), scales.root_p, scales.root_d]
    for _ in range(10_000):
        mag = 10.0 ** rng.uniform(-2, 3)
        w = {k: rng.normal(size=s) * mag for k, s in shapes.items()}
        x = rng.normal(size=ctl.input_dim(n)) * 10.0 ** rng.uniform(-1, 2)
        g = ctl.gains_from_raw(ctl.raw_heads(x, w), scales)
        v = np.r_[g.kp, g.kd, g.ka, g.root_kp, g.root_kd]
        assert np.all((v >= lo) & (v <= hi))


def test_full_size_network_gains_within_bounds(rng):
    pol = ctl.NetGainPolicy.from_seed(5)
    for _ in range(20):
        q = random_unit_quats(rng, 24)
        w = ctl.ReferenceWindow(np.stack([random_unit_quats(rng, 24)] * 3), rng.normal(size=3))
        g = pol(q, rng.normal(size=(24, 3)) * 5, w, rng.normal(size=3), rng.normal(size=3))
        assert g.within(ctl.GainScales())


def test_golden_forward_pass():
    golden = json.loads((DATA / "golden_forward_seed0.json").read_text())["output"]
    x = np.ones(ctl.input_dim(24))
    w = ctl.init_weights(0)
    g = ctl.gains_from_raw(ctl.raw_heads(x, w))
    np.testing.assert_allclose(flat(g), golden, rtol=0, atol=1e-10)


def test_forward_pass_matches_torch_reimplementation(rng):
    pytest.importorskip("torch")
    from .data.regen_golden_forward import forward

    w = ctl.init_weights(3)
    for x in (np.ones(273), rng.normal(size=273)):
        ours = flat(ctl.gains_from_raw(ctl.raw_heads(x, w)))
        np.testing.assert_allclose(ours, forward(w, x), rtol=0, atol=1e-10)


def test_policy_net_rejects_bad_input_width():
    w = ctl.init_weights(0, n_joints=24, hidden=8)
    with pytest.raises(ValueError, match="input width"):
        ctl.gain_policy_net(np.zeros((23, 4)), np.zeros((23, 3)), np.zeros((23, 4)),
                            np.zeros(3), np.zeros(3), np.zeros(3), w)


def test_weight_file_round_trip_and_validation(tmp_path):
    w = ctl.init_weights(1, n_joints=4, hidden=8)
    path = tmp_path / "w.json"
    ctl.save_weights(w, path, n_joints=4, hidden=8)
    loaded, n, hidden = ctl.load_weights(path)
    assert (n, hidden) == (4, 8)
    for k in w:
        np.testing.assert_array_equal(loaded[k], w[k])
    doc = json.loads(path.read_text())
    doc["layers"]["block2.linear.weight"] = [[0.0] * 7] * 8
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="block2.linear.weight"):
        ctl.load_weights(path)
    doc["format"] = "other"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="format"):
        ctl.load_weights(path)
    with pytest.raises(ValueError, match="missing"):
        ctl.check_weights({}, 4, 8)


# -- gain search -------------------------------------------------------------------------------

def small_suite(kind="step_target", **kw):
    spec = synth.MotionSpec(kind=kind, joints=(1, 2, 16), axis=(1, 0, 0), frames=100, **kw)
    base = runner.RunConfig(motions=[spec], f_omega=False, alpha=False, seeds=[0]).with_gains(bias="zero")
    return [synth.generate(spec)], base


def test_tune_gains_grid_oracle():
    suite, base = small_suite(step_frame=2, step_size=0.3)
    search = ctl.SearchConfig(kp=(10, 20, 40), kd=(1, 3, 6, 10, 20, 30), ka=(0,))
    best, results = ctl.tune_gains(suite, search, base)
    # exhaustive oracle: evaluate every grid point directly
    oracle = {(kp, kd, 0.0): runner.suite_loss(suite, base.with_gains(kp=kp, kd=kd, ka=0.0))
              for kp in search.kp for kd in search.kd}
    assert dict(results) == pytest.approx(oracle, rel=0, abs=0)
    assert best == min(oracle, key=oracle.get)
    assert best[0] == 40.0
    assert 1.0 < best[1] < 30.0


def test_tune_gains_tie_breaks_to_lowest():
    # references start at rest on target, so every candidate tracks perfectly
    suite, base = small_suite(kind="constant_omega", rate=0.0, start_angle=0.3)
    best, results = ctl.tune_gains(suite, ctl.SearchConfig(), base)
    assert all(loss == 0 for _, loss in results)
    assert best == (10.0, 5.0, 0.0)
    assert ctl.pick_best([((2, 1, 0), 1.0), ((1, 9, 0), 1.0 + 1e-15), ((0, 0, 0), 2.0)]) == (1, 9, 0)


def test_tune_gains_near_critical_damping():
    # small-angle 1-DoF: vec error ~ e/2, so critical damping sits at kd = sqrt(2 kp)
    spec = synth.MotionSpec(kind="step_target", joints=(1,), axis=(1, 0, 0), step_frame=10, step_size=0.2)
    base = runner.RunConfig(motions=[spec], f_omega=False, alpha=False, seeds=[0]).with_gains(bias="zero")
    grid = (1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    for kp in (10.0, 20.0, 30.0, 40.0):
        (_, kd, _), _ = ctl.tune_gains([synth.generate(spec)], ctl.SearchConfig(kp=(kp,), kd=grid), base)
        assert abs(kd - np.sqrt(2 * kp)) <= 5.0


def test_random_search_deterministic():
    suite, base = small_suite(step_frame=2, step_size=0.3)
    search = ctl.SearchConfig(method="random", samples=6, seed=11, kp=(5, 40), kd=(1, 30), ka=(0, 10))
    a = ctl.tune_gains(suite, search, base)
    b = ctl.tune_gains(suite, search, base)
    assert a == b
    assert all(0 <= g[0] <= 40 and 0 <= g[1] <= 30 and 0 <= g[2] <= 10 for g, _ in a[1])


def test_tune_gains_errors():
    with pytest.raises(ValueError, match="empty"):
        ctl.tune_gains([])
    with pytest.raises(ValueError, match="scale box"):
        ctl.candidate_gains(ctl.SearchConfig(kp=(50,)))
    with pytest.raises(ValueError, match="method"):
        ctl.candidate_gains(ctl.SearchConfig(method="anneal"))


def test_short_history_has_no_enhancement(rng):
    q = random_unit_quats(rng, 2 * 5).reshape(2, 5, 4)
    one = ctl.ReferenceWindow.from_history(q[:1], np.zeros(3))
    two = ctl.ReferenceWindow.from_history(q, np.zeros(3))
    assert (one.depth, two.depth) == (1, 2)
    assert np.all(ctl.accel_enhancement(one) == 0) and np.all(ctl.accel_enhancement(two) == 0)
    full = ctl.ReferenceWindow.from_history([q[0], q[0], q[1]], np.zeros(3))
    assert np.any(ctl.accel_enhancement(full) != 0)


def test_from_axis_angle_rejects_zero_axis():
    with pytest.raises(ValueError, match="non-zero"):
        rc.from_axis_angle(np.zeros(3), 1.0)
