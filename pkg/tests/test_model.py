import numpy as np
import pytest

from ssrl.buffers import ReplayBuffer, Transition
from ssrl.controller import GaitConfig, ControlConfig
from ssrl.diffengine import Tape, gaussian_nll, positive_variance, ops
from ssrl.dynamics import make_pendulum, make_hopper, TerrainParams, integrate_arrays
from ssrl.envs import Env, EnvConfig, RewardWeights, pendulum_reward_weights
from ssrl.model import (History, push_batch, ModelConfig, make_ensemble,
                        SemiStructuredEnsemble, BlackBoxEnsemble,
                        multistep_loss, train_models, hallucinate)

from helpers import fd_gradient, rel_err, flatten_dict


def pendulum_setup(family="semi", seed=0, **cfg_kw):
    robot = make_pendulum(damping=0.05)
    gait = GaitConfig()
    ctrl = ControlConfig()
    kw = dict(family=family, ensemble_size=2, latent_dim=4, width=16, depth=2,
              history_len=3, horizon=2, batch_size=32, lr=1e-3)
    kw.update(cfg_kw)
    cfg = ModelConfig(**kw)
    model = make_ensemble(robot, gait, ctrl, cfg, np.random.default_rng(seed))
    return robot, gait, ctrl, model


def fill_pendulum_buffer(robot, gait, ctrl, n_steps=400, seed=0, h=3,
                         tau_e_fn=None, buffer=None):
    """Roll the pendulum with smoothed random torques; log transitions."""
    rng = np.random.default_rng(seed)
    buf = buffer or ReplayBuffer(n_steps, 2, 1, h, "env")
    q = np.array([rng.uniform(-0.5, 0.5)])
    qd = np.zeros(1)
    hist = History(h, 2)
    hist.fill(np.array([q[0], qd[0]]))
    a = 0.0
    ep, step_in_ep = 0, 0
    for t in range(n_steps):
        s = np.array([q[0], qd[0]])
        a = np.clip(0.8 * a + 0.4 * rng.standard_normal(), -1.0, 1.0)
        tau = np.array([a]) * robot.tau_max[0]
        tau_e = (tau_e_fn(s) if tau_e_fn is not None
                 else -robot.damping * qd)
        q, qd = integrate_arrays(q, qd, tau, tau_e, ctrl.dt_ctrl, robot)
        s_next = np.array([q[0], qd[0]])
        buf.add(Transition(s=s, a=np.array([a]), r=0.0, s_next=s_next, d=False,
                           hist=hist.snapshot(), phase_step=t, episode_id=ep,
                           step_in_episode=step_in_ep, source="env"))
        hist.push(s)
        step_in_ep += 1
        if step_in_ep == 100:
            ep += 1
            step_in_ep = 0
            q = np.array([rng.uniform(-0.5, 0.5)])
            qd = np.zeros(1)
            hist.fill(np.array([q[0], qd[0]]))
    return buf


class TestHistory:
    def test_padding_by_repetition(self):
        h = History(3, 2)
        h.fill(np.array([1.0, 2.0]))
        assert np.array_equal(h.snapshot(), np.tile([1.0, 2.0], (3, 1)))

    def test_push_order_newest_first(self):
        h = History(3, 1)
        h.fill(np.array([0.0]))
        h.push(np.array([1.0]))
        h.push(np.array([2.0]))
        assert np.array_equal(h.snapshot().ravel(), [2.0, 1.0, 0.0])

    def test_snapshot_immutable(self):
        h = History(2, 1)
        h.fill(np.array([5.0]))
        snap = h.snapshot()
        h.push(np.array([9.0]))
        assert np.array_equal(snap.ravel(), [5.0, 5.0])

    def test_push_batch(self):
        hist = np.zeros((2, 3, 1))
        out = push_batch(hist, np.ones((2, 1)))
        assert np.array_equal(out[:, 0], np.ones((2, 1)))
        assert out.shape == (2, 3, 1)


class TestPredict:
    def test_zero_torque_head_equals_physics(self):
        robot, gait, ctrl, model = pendulum_setup()
        s = np.array([0.4, -1.0])
        a = np.array([0.3])
        hist = np.tile(s, (3, 1))
        pred = model.predict_mean(0, s, 0, a, hist)
        tau = a * robot.tau_max[0]
        q, qd = integrate_arrays(s[:1], s[1:], tau, np.zeros(1), ctrl.dt_ctrl, robot)
        assert np.allclose(pred, [q[0], qd[0]], atol=1e-14)

    def test_ground_truth_torque_matches_sim(self):
        # torque head replaced by the true (substep-averaged) external torque:
        # the single-step prediction matches the substepped simulator tightly
        # in smooth regimes; impact transients carry the integrator-coarseness
        # gap the learned torque absorbs during training
        robot = make_hopper()
        gait = GaitConfig(cycle_period=0.25, swing_height=0.04,
                          stance_fraction=0.6, p_stand=(-0.0194, -0.30))
        ctrl = ControlConfig(kp=28.0, kd=0.8)
        env = Env(robot, TerrainParams(), gait, ctrl, RewardWeights(),
                  EnvConfig(), np.random.default_rng(0))
        from ssrl.controller import motor_map

        def one_step_gap(s):
            sim_q, sim_qd = env.sim.q.copy(), env.sim.qd.copy()
            tau = motor_map(robot, gait, ctrl, s, env.episode.phase_step,
                            np.zeros(3))
            s2, _, d, _, info = env.step(s, np.zeros(3))
            q, qd = integrate_arrays(sim_q, sim_qd, tau, info["tau_e"],
                                     ctrl.dt_ctrl, robot)
            pred = np.concatenate([q[2:5], qd])
            return np.abs(pred - s2), s2, d, info

        s = env.reset()
        base = (0, 3, 4, 5)   # pitch, vx, vz, pitch rate
        base_gaps, joint_gaps = [], []
        for _ in range(60):
            gap, s, d, info = one_step_gap(s)
            base_gaps.append(max(gap[i] for i in base))
            joint_gaps.append(max(gap[i] for i in (1, 2, 6, 7)))
            if d:
                break
        # base coordinates (what the torque-validation study reads) stay
        # tight; the fast-swinging joints carry the one-step coarseness
        assert max(base_gaps) < 0.05
        assert max(joint_gaps) < 5.0

    def test_ground_truth_torque_matches_sim_pendulum(self):
        # the contact-free sanity system: one-step prediction under the true
        # substep-averaged torque tracks the substepped simulator to ~1e-3
        robot = make_pendulum(damping=0.05)
        env = Env(robot, TerrainParams(), GaitConfig(), ControlConfig(),
                  pendulum_reward_weights(), EnvConfig(),
                  np.random.default_rng(0))
        from ssrl.controller import motor_map
        s = env.reset()
        rng = np.random.default_rng(1)
        gaps = []
        for _ in range(100):
            sim_q, sim_qd = env.sim.q.copy(), env.sim.qd.copy()
            a = np.array([rng.uniform(-0.5, 0.5)])
            tau = motor_map(robot, env.gait, env.ctrl, s, 0, a)
            s2, _, _, _, info = env.step(s, a)
            q, qd = integrate_arrays(sim_q, sim_qd, tau, info["tau_e"],
                                     env.ctrl.dt_ctrl, robot)
            pred = np.concatenate([q, qd])
            gaps.append(np.max(np.abs(pred - s2)) / max(1.0, np.max(np.abs(s2))))
            s = s2
        assert max(gaps) < 1.1e-3

    def test_same_seed_identical_predictions(self):
        _, _, _, m1 = pendulum_setup(seed=5)
        _, _, _, m2 = pendulum_setup(seed=5)
        s = np.array([0.2, 0.3])
        hist = np.tile(s, (3, 1))
        p1 = m1.predict_mean(1, s, 0, np.array([0.1]), hist)
        p2 = m2.predict_mean(1, s, 0, np.array([0.1]), hist)
        assert np.array_equal(p1, p2)

    def test_sample_noise_disabled_equals_mean(self):
        robot, gait, ctrl, model = pendulum_setup(noise_enabled=False)
        s = np.array([0.1, 0.0])
        hist = np.tile(s, (3, 1))
        rng = np.random.default_rng(0)
        samp = model.predict_sample(0, s, 0, np.array([0.5]), hist, rng)
        mean = model.predict_mean(0, s, 0, np.array([0.5]), hist)
        assert np.array_equal(samp, mean)

    def test_sample_variance_matches_noise_head(self):
        robot, gait, ctrl, model = pendulum_setup(seed=3)
        s = np.array([0.1, 0.0])
        a = np.array([0.5])
        hist = np.tile(s, (3, 1))
        _, var, _ = model.predict_all(s, 0, a, hist)
        n = 100000
        rng = np.random.default_rng(1)
        draws = model.predict_sample(
            0, np.tile(s, (n, 1)), np.zeros(n, dtype=int), np.tile(a, (n, 1)),
            np.tile(hist, (n, 1, 1)), rng)
        emp = draws.var(axis=0)
        assert np.all(np.abs(emp - var[0, 0]) / var[0, 0] < 0.03)

    def test_same_rng_seed_identical_samples(self):
        robot, gait, ctrl, model = pendulum_setup()
        s = np.array([0.1, 0.0])
        hist = np.tile(s, (3, 1))
        a = np.array([0.2])
        s1 = model.predict_sample(0, s, 0, a, hist, np.random.default_rng(42))
        s2 = model.predict_sample(0, s, 0, a, hist, np.random.default_rng(42))
        assert np.array_equal(s1, s2)

    def test_blackbox_zero_net_is_identity(self):
        robot, gait, ctrl, model = pendulum_setup(family="blackbox")
        s = np.array([0.7, -2.0])
        hist = np.tile(s, (3, 1))
        pred = model.predict_mean(0, s, 0, np.array([0.3]), hist)
        assert np.array_equal(pred, s)


def segments_batch(model, buf, n, horizon, seed=0):
    rng = np.random.default_rng(seed)
    starts = buf.segment_starts(horizon)
    sel = starts[rng.integers(0, len(starts), size=n)]
    P = model.cfg.ensemble_size
    pack = buf.gather_segments(sel, horizon)
    return {k: np.stack([v] * P) for k, v in pack.items()}


class TestMultistepLoss:
    def test_h1_equals_one_step_nll(self):
        robot, gait, ctrl, model = pendulum_setup()
        buf = fill_pendulum_buffer(robot, gait, ctrl)
        batch = segments_batch(model, buf, 16, 1)
        loss = multistep_loss(model, model.params, batch, horizon=1)
        mean, var, _ = model.core(model.params, batch["s0"], batch["phase0"],
                                  batch["a"][:, :, 0], batch["hist0"])
        direct = gaussian_nll(mean, var, batch["targets"][:, :, 0]).mean(axis=-1)
        assert np.max(np.abs(np.asarray(loss) - direct)) < 1e-12

    def test_perfect_model_unit_variance_gives_zero(self):
        # data generated by the model itself, noise off, unit variances:
        # residuals vanish and log det of the identity is zero
        robot, gait, ctrl, model = pendulum_setup(seed=2)
        # rig the noise head to output exactly unit variance
        for k in model.params:
            if k.startswith("noi"):
                model.params[k] = np.zeros_like(model.params[k])
        bias_key = [k for k in model.params if k.startswith("noi.b")][-1]
        inv_softplus_1 = np.log(np.expm1(1.0 - 1e-6))
        model.params[bias_key] = np.full_like(model.params[bias_key], inv_softplus_1)

        h = model.cfg.history_len
        buf = ReplayBuffer(200, 2, 1, h, "env")
        rng = np.random.default_rng(0)
        s = np.array([0.3, 0.0])
        hist = History(h, 2)
        hist.fill(s)
        for t in range(80):
            a = np.array([float(np.sin(0.05 * t))])
            s_next = model.predict_mean(0, s, t, a, hist.snapshot())
            buf.add(Transition(s=s, a=a, r=0.0, s_next=s_next, d=False,
                               hist=hist.snapshot(), phase_step=t, episode_id=0,
                               step_in_episode=t, source="env"))
            hist.push(s)
            s = s_next
        batch = segments_batch(model, buf, 8, 3)
        # keep only the generating member's row
        loss = multistep_loss(model, model.member_params(0), batch, horizon=3)
        assert abs(float(np.asarray(loss)[0])) < 1e-16

    def test_two_step_hand_rolled_blackbox(self):
        # spreadsheet check: tiny black-box net evaluated by hand
        robot, gait, ctrl, model = pendulum_setup(family="blackbox",
                                                  ensemble_size=1, width=4,
                                                  depth=1, history_len=1)
        buf = fill_pendulum_buffer(robot, gait, ctrl, n_steps=50, h=1)
        batch = segments_batch(model, buf, 4, 2, seed=1)
        loss = np.asarray(multistep_loss(model, model.params, batch, horizon=2))

        # independent recomputation straight from the definitions
        from ssrl import statespace
        from ssrl.features import history_features, phase_features

        def net(x):
            h = np.tanh(x @ model.params["net.w0"][0] + model.params["net.b0"][0])
            return h @ model.params["net.w1"][0] + model.params["net.b1"][0]

        total = np.zeros(batch["s0"].shape[1])
        s = batch["s0"][0]
        hist = [batch["hist0"][0][:, i] for i in range(1)]
        for j in range(2):
            feats = statespace.state_features(s, robot)
            hf = np.concatenate([statespace.state_features(hh, robot)
                                 for hh in hist], axis=-1)
            x = np.concatenate([feats, batch["a"][0][:, j], hf], axis=-1)
            out = net(x)
            delta, raw = out[:, :2], out[:, 2:]
            var = np.minimum(np.logaddexp(0, raw) + 1e-6, 1e4)
            s_next = s + delta
            resid = s_next - batch["targets"][0][:, j]
            total += (resid ** 2 / var).sum(-1) + np.log(var).sum(-1)
            hist = [s] + hist[:-1]
            s = s_next
        expect = (total / 2.0).mean()
        assert abs(loss[0] - expect) < 1e-10

    @pytest.mark.parametrize("family", ["semi", "blackbox"])
    def test_gradient_matches_finite_differences(self, family):
        robot, gait, ctrl, model = pendulum_setup(
            family=family, ensemble_size=2, width=6, depth=1, history_len=2,
            seed=4)
        # break the zero-init symmetry so the checks exercise generic points
        rng = np.random.default_rng(8)
        for k in model.params:
            model.params[k] = model.params[k] + 0.05 * rng.standard_normal(
                model.params[k].shape)
        buf = fill_pendulum_buffer(robot, gait, ctrl, n_steps=120, h=2)
        batch = segments_batch(model, buf, 4, 2, seed=2)
        flat, restore = flatten_dict(model.params)

        def f(vec):
            loss = multistep_loss(model, restore(vec), batch, horizon=2)
            return float(np.asarray(loss).sum())

        tape = Tape()
        leaves = tape.leaves(model.params)
        loss = multistep_loss(model, leaves, batch, horizon=2).sum()
        grads = tape.gradients(loss, list(leaves.values()))
        g_ad = np.concatenate([g.ravel() for g in grads])
        g_fd = fd_gradient(f, flat)
        assert rel_err(g_ad, g_fd) < 1e-4

    def test_hopper_loss_gradient_through_integrator(self):
        robot = make_hopper()
        gait = GaitConfig(cycle_period=0.25, swing_height=0.04,
                          stance_fraction=0.6, p_stand=(-0.0194, -0.30))
        ctrl = ControlConfig(kp=28.0, kd=0.8)
        cfg = ModelConfig(family="semi", ensemble_size=1, latent_dim=3,
                          width=6, depth=1, history_len=2, horizon=2)
        model = make_ensemble(robot, gait, ctrl, cfg, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        for k in model.params:
            model.params[k] = model.params[k] + 0.05 * rng.standard_normal(
                model.params[k].shape)
        # synthetic hopper segments: random-ish states, real env steps
        env = Env(robot, TerrainParams(), gait, ctrl, RewardWeights(),
                  EnvConfig(), np.random.default_rng(2))
        buf = ReplayBuffer(100, 8, 3, 2, "env")
        s = env.reset()
        hist = History(2, 8)
        hist.fill(s)
        for t in range(60):
            a = rng.uniform(*[b for b in map(np.asarray, ([(-0.1, -0.05, -0.05)], [(0.1, 0.05, 0.0)]))])[0]
            s_next, r, d, trunc, _ = env.step(s, a)
            buf.add(Transition(s=s, a=a, r=r, s_next=s_next, d=d,
                               hist=hist.snapshot(), phase_step=t,
                               episode_id=0, step_in_episode=t, source="env"))
            hist.push(s)
            s = s_next
            if d:
                break
        batch = segments_batch(model, buf, 3, 2, seed=3)
        flat, restore = flatten_dict(model.params)

        def f(vec):
            return float(np.asarray(
                multistep_loss(model, restore(vec), batch, horizon=2)).sum())

        tape = Tape()
        leaves = tape.leaves(model.params)
        loss = multistep_loss(model, leaves, batch, horizon=2).sum()
        g_ad = np.concatenate([g.ravel() for g in
                               tape.gradients(loss, list(leaves.values()))])
        g_fd = fd_gradient(f, flat)
        assert rel_err(g_ad, g_fd) < 1e-4


class TestTrainModels:
    def test_recovers_known_constant_force(self):
        robot, gait, ctrl, model = pendulum_setup(
            ensemble_size=2, width=24, depth=2, history_len=2, horizon=2,
            batch_size=64, lr=3e-3)
        true_tau_e = 0.8

        buf = fill_pendulum_buffer(robot, gait, ctrl, n_steps=900, h=2,
                                   tau_e_fn=lambda s: np.array([true_tau_e]))
        metrics = train_models(model, buf, np.random.default_rng(0),
                               horizon=2, max_epochs=60)
        # held-out states: query the learned external torque
        test_buf = fill_pendulum_buffer(robot, gait, ctrl, n_steps=100, seed=9,
                                        h=2, tau_e_fn=lambda s: np.array([true_tau_e]))
        pack = test_buf.gather(np.arange(80))
        tau_e = model.external_torque(pack["s"], pack["phase_step"], pack["a"],
                                      pack["hist"])
        err = np.abs(tau_e.mean(axis=0) - true_tau_e) / abs(true_tau_e)
        assert float(np.sqrt((err ** 2).mean())) < 0.05

    def test_training_loss_decreases(self):
        robot, gait, ctrl, model = pendulum_setup(width=16, horizon=2,
                                                  batch_size=32)
        buf = fill_pendulum_buffer(robot, gait, ctrl, n_steps=400, h=3)
        metrics = train_models(model, buf, np.random.default_rng(0),
                               horizon=2, max_epochs=12)
        tl = metrics["train_loss"].mean(axis=1)
        k = 5
        smooth = np.convolve(tl, np.ones(k) / k, mode="valid")
        assert smooth[-1] < smooth[0]

    def test_members_diverge_with_training(self):
        robot, gait, ctrl, model = pendulum_setup(ensemble_size=2)
        buf = fill_pendulum_buffer(robot, gait, ctrl, n_steps=300, h=3)
        train_models(model, buf, np.random.default_rng(0), horizon=2,
                     max_epochs=4)
        w = model.params["tor.w0"]
        assert not np.allclose(w[0], w[1])


class TestHallucinate:
    def test_degenerate_equals_predict_mean(self):
        robot, gait, ctrl, model = pendulum_setup(ensemble_size=1,
                                                  noise_enabled=False)
        out = ReplayBuffer(10, 2, 1, 3, "model")
        s0 = np.array([0.2, 0.1])
        hist0 = np.tile(s0, (3, 1))

        def policy(s, phase, hist, rng):
            return np.full((s.shape[0], 1), 0.3)

        n = hallucinate(out, model, policy, pendulum_reward_weights(),
                        s0, hist0, 0, k=1, rng=np.random.default_rng(0))
        assert n == 1
        pred = model.predict_mean(0, s0, 0, np.array([0.3]), hist0)
        got = out.gather(np.array([0]))
        assert np.allclose(got["s_next"][0], pred, atol=1e-15)

    def test_member_choice_uniform(self):
        robot, gait, ctrl, model = pendulum_setup(ensemble_size=4)
        counts = np.zeros(4)
        rng = np.random.default_rng(0)
        # spy on member selection through prediction variance tagging:
        # instead, count via rng reproduction
        n = 10000
        rng2 = np.random.default_rng(123)
        out = ReplayBuffer(n, 2, 1, 3, "model")

        def policy(s, phase, hist, r):
            return np.zeros((s.shape[0], 1))

        hallucinate(out, model, policy, pendulum_reward_weights(),
                    np.tile([0.1, 0.0], (n, 1)), np.zeros((n, 3, 2)),
                    np.zeros(n, dtype=int), k=1, rng=np.random.default_rng(123))
        # replay the rng the same way hallucinate consumes it
        r = np.random.default_rng(123)
        _ = r.standard_normal((n, 1))  # policy noise? policy here consumes none
        member = r.integers(0, 4, size=n)
        freqs = np.bincount(member, minlength=4) / n
        assert np.all(np.abs(freqs - 0.25) < 0.05 * 1.0)

    def test_early_termination_stops_rollout(self):
        robot = make_hopper()
        gait = GaitConfig(cycle_period=0.25, swing_height=0.04,
                          stance_fraction=0.6, p_stand=(-0.0194, -0.30))
        ctrl = ControlConfig(kp=28.0, kd=0.8)
        cfg = ModelConfig(family="semi", ensemble_size=1, latent_dim=3,
                          width=8, depth=1, history_len=2, noise_enabled=False)
        model = make_ensemble(robot, gait, ctrl, cfg, np.random.default_rng(0))
        out = ReplayBuffer(100, 8, 3, 2, "model")
        s0 = np.zeros(8)
        s0[0] = np.pi / 4 + 0.05   # beyond the pitch limit already
        s0[5] = 2.0

        def policy(s, phase, hist, rng):
            return np.zeros((s.shape[0], 3))

        n = hallucinate(out, model, policy, RewardWeights(), s0,
                        np.tile(s0, (2, 1)), 0, k=10,
                        rng=np.random.default_rng(0))
        # first predicted state inherits the excessive pitch: rollout ends
        assert n < 10

    def test_buffer_tag_enforced(self):
        buf = ReplayBuffer(4, 2, 1, 2, "env")
        tr = Transition(s=np.zeros(2), a=np.zeros(1), r=0.0, s_next=np.zeros(2),
                        d=False, hist=np.zeros((2, 2)), phase_step=0,
                        episode_id=0, step_in_episode=0, source="model")
        with pytest.raises(ValueError):
            buf.add(tr)


class TestNoiseHeadRecovery:
    def test_variance_fit_on_frozen_residuals(self):
        # train only the noise head against fixed residuals: the optimum of
        # the likelihood is the empirical residual variance per dimension
        rng = np.random.default_rng(0)
        from ssrl.diffengine import mlp_init, mlp_forward, optimizer_init, \
            optimizer_step, params_as_dict
        sigma_true = np.array([0.4, 1.7])
        resid = rng.normal(0.0, sigma_true, size=(512, 2))
        net = mlp_init(rng, [3, 16, 2])
        params = params_as_dict("noi", net)
        x = rng.normal(size=(512, 3)) * 0.0 + 1.0   # constant input
        opt = optimizer_init(params, lr=2e-2)
        for it in range(400):
            tape = Tape()
            leaves = tape.leaves(params)
            out = mlp_forward([leaves["noi.w0"], leaves["noi.w1"]],
                              [leaves["noi.b0"], leaves["noi.b1"]], x)
            var = positive_variance(out)
            loss = gaussian_nll(resid, var, np.zeros_like(resid)).mean()
            grads = tape.gradients(loss, list(leaves.values()))
            params, opt = optimizer_step(
                params, {k: g for k, g in zip(leaves, grads)}, opt)
        out = mlp_forward([params["noi.w0"], params["noi.w1"]],
                          [params["noi.b0"], params["noi.b1"]], x)
        var = np.minimum(np.logaddexp(0, out) + 1e-6, 1e4)
        emp = (resid ** 2).mean(axis=0)
        assert np.all(np.abs(var.mean(axis=0) - emp) / emp < 0.05)
