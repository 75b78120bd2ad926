"""Probabilistic dynamics ensembles.

Two families with identical training and rollout protocols:

semi-structured
    A shared-history encoder produces a latent; per-member torque and noise
    heads map (state features, phase, action, latent) to an external
    generalized torque and a diagonal next-state variance. The torque
    prediction is pushed through the known Lagrangian integrator, so the
    model only ever learns what physics cannot explain.

black-box
    One MLP maps (state features, phase, action, flattened history) straight
    to a state delta and a diagonal variance; next state = s + delta.

Parameters are stacked along a leading member axis; every member sees its
own minibatches but the whole ensemble evaluates as one batched pass.
Heads end in zero-initialized output layers: the untrained semi-structured
model is exactly the physics integrator, the untrained black-box model is
the identity map.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import statespace
from ..controller import GaitConfig, ControlConfig, motor_map
from ..diffengine import (ops, mlp_init, mlp_forward, positive_variance,
                          params_as_dict, save_params, load_params)
from ..dynamics import RobotModel, integrate_arrays
from ..features import phase_features, history_features, phase_dim

NOISE_BIAS_INIT = -2.0   # initial diagonal variance around softplus(-2) ~ 0.13


@dataclass
class ModelConfig:
    family: str = "semi"            # "semi" | "blackbox"
    ensemble_size: int = 4          # P
    latent_dim: int = 8             # n_z, semi-structured only
    width: int = 128
    depth: int = 2
    history_len: int = 5            # h
    horizon: int = 4                # H, multi-step loss length
    lr: float = 1e-3
    batch_size: int = 200
    max_epochs: int = 40
    patience: int = 5
    holdout_frac: float = 0.1
    noise_enabled: bool = True      # fixed unit variance when disabled

    def __post_init__(self):
        if self.family not in ("semi", "blackbox"):
            raise ValueError("family must be 'semi' or 'blackbox'")
        if self.ensemble_size < 1 or self.history_len < 1 or self.horizon < 1:
            raise ValueError("ensemble_size, history_len, horizon must be >= 1")


def _zero_last_layer(p, bias: float = 0.0):
    p.weights[-1] = np.zeros_like(p.weights[-1])
    p.biases[-1] = np.full_like(p.biases[-1], bias)
    return p


class _EnsembleBase:
    family = ""

    def __init__(self, robot: RobotModel, gait: GaitConfig, ctrl: ControlConfig,
                 cfg: ModelConfig, rng: np.random.Generator):
        self.robot = robot
        self.gait = gait
        self.ctrl = ctrl
        self.cfg = cfg
        self.state_dim = statespace.state_dim(robot)
        self.action_dim = statespace.action_dim(robot)
        self.feat_dim = statespace.feature_dim(robot)
        self.params: dict = {}
        self._net_sizes: dict = {}
        self.init_params(rng)

    # subclasses define init_params() and core()

    def member_params(self, member: int) -> dict:
        return {k: v[member:member + 1] for k, v in self.params.items()}

    def clone_with(self, params: dict) -> "_EnsembleBase":
        out = object.__new__(type(self))
        out.__dict__ = dict(self.__dict__)
        out.params = params
        return out

    def head_inputs(self, s, phase_step, a, m=ops):
        feats = statespace.state_features(s, self.robot)
        ph = phase_features(self.robot, self.gait, self.ctrl, phase_step)
        return ops.concat([feats, ph, a], axis=-1)

    def _mlp(self, params, prefix, x):
        n = self._net_sizes[prefix]
        ws = [params[f"{prefix}.w{i}"] for i in range(n)]
        bs = [params[f"{prefix}.b{i}"] for i in range(n)]
        return mlp_forward(ws, bs, x)

    # -- numpy prediction paths ------------------------------------------------

    def _tiled(self, x: np.ndarray) -> np.ndarray:
        P = self.cfg.ensemble_size
        return np.broadcast_to(x, (P,) + x.shape)

    def predict_all(self, s, phase_step, a, hist):
        """Mean next states and variances for every member: (P, N, ...)."""
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        hist = np.asarray(hist, dtype=np.float64)
        if hist.ndim == 2:
            hist = hist[None]
        step = np.broadcast_to(np.asarray(phase_step), (s.shape[0],))
        mean, var, tau_e = self.core(
            self.params, self._tiled(s), self._tiled(step), self._tiled(a),
            self._tiled(hist), ops)
        return mean, var, tau_e

    def predict_mean(self, member: int, s, phase_step, a, hist) -> np.ndarray:
        """Deterministic next-state prediction of one member."""
        mean, _, _ = self.predict_all(s, phase_step, a, hist)
        out = mean[member]
        return out[0] if np.asarray(s).ndim == 1 else out

    def predict_sample(self, member: int, s, phase_step, a, hist,
                       rng: np.random.Generator) -> np.ndarray:
        """Uncertainty-aware prediction: mean plus diagonal Gaussian noise."""
        mean, var, _ = self.predict_all(s, phase_step, a, hist)
        m, v = mean[member], var[member]
        if self.cfg.noise_enabled:
            m = m + np.sqrt(v) * rng.standard_normal(m.shape)
        return m[0] if np.asarray(s).ndim == 1 else m

    def external_torque(self, s, phase_step, a, hist) -> np.ndarray:
        """Per-member external generalized torque estimates (P, N, ndof)."""
        _, _, tau_e = self.predict_all(s, phase_step, a, hist)
        return tau_e

    # -- checkpointing ----------------------------------------------------------

    def save(self, path) -> None:
        save_params(path, self.params)

    def load(self, path) -> None:
        loaded = load_params(path)
        if set(loaded) != set(self.params):
            raise ValueError("checkpoint does not match this model family")
        self.params = loaded


class SemiStructuredEnsemble(_EnsembleBase):
    family = "semi"

    def init_params(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        P = cfg.ensemble_size
        hid = [cfg.width] * cfg.depth
        enc_in = cfg.history_len * self.feat_dim
        head_in = self.feat_dim + phase_dim(self.robot) + self.action_dim \
            + cfg.latent_dim
        enc = mlp_init(rng, [enc_in] + hid + [cfg.latent_dim], ensemble=P)
        tor = _zero_last_layer(mlp_init(rng, [head_in] + hid + [self.robot.ndof],
                                        ensemble=P))
        noi = _zero_last_layer(mlp_init(rng, [head_in] + hid + [self.state_dim],
                                        ensemble=P), bias=NOISE_BIAS_INIT)
        self.params = {**params_as_dict("enc", enc),
                       **params_as_dict("tor", tor),
                       **params_as_dict("noi", noi)}
        self._net_sizes = {"enc": cfg.depth + 1, "tor": cfg.depth + 1,
                           "noi": cfg.depth + 1}

    def core(self, params, s, phase_step, a, hist, m=ops):
        """One prediction step. ``hist`` is a (..., h, d) array or a list of
        (...,) d-dim states newest first (tape path)."""
        z = self._mlp(params, "enc", history_features(self.robot, hist))
        head_in = ops.concat([self.head_inputs(s, phase_step, a, m), z], axis=-1)
        tau_e = self._mlp(params, "tor", head_in)
        var = positive_variance(self._mlp(params, "noi", head_in))
        tau = motor_map(self.robot, self.gait, self.ctrl, s, phase_step, a)
        q, qd = statespace.q_qd_from_state(s, self.robot)
        q2, qd2 = integrate_arrays(q, qd, tau, tau_e, self.ctrl.dt_ctrl,
                                   self.robot, m)
        return statespace.state_from_q_qd(q2, qd2, self.robot), var, tau_e


class BlackBoxEnsemble(_EnsembleBase):
    family = "blackbox"

    def init_params(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        P = cfg.ensemble_size
        hid = [cfg.width] * cfg.depth
        net_in = self.feat_dim + phase_dim(self.robot) + self.action_dim \
            + cfg.history_len * self.feat_dim
        net = mlp_init(rng, [net_in] + hid + [2 * self.state_dim], ensemble=P)
        # zero delta and a modest initial variance at init
        net.weights[-1] = np.zeros_like(net.weights[-1])
        net.biases[-1] = np.zeros_like(net.biases[-1])
        net.biases[-1][..., self.state_dim:] = NOISE_BIAS_INIT
        self.params = params_as_dict("net", net)
        self._net_sizes = {"net": cfg.depth + 1}

    def core(self, params, s, phase_step, a, hist, m=ops):
        hf = history_features(self.robot, hist)
        x = ops.concat([self.head_inputs(s, phase_step, a, m), hf], axis=-1)
        out = self._mlp(params, "net", x)
        ds = self.state_dim
        delta = out[..., :ds]
        var = positive_variance(out[..., ds:])
        return s + delta, var, None


def make_ensemble(robot: RobotModel, gait: GaitConfig, ctrl: ControlConfig,
                  cfg: ModelConfig, rng: np.random.Generator) -> _EnsembleBase:
    cls = SemiStructuredEnsemble if cfg.family == "semi" else BlackBoxEnsemble
    return cls(robot, gait, ctrl, cfg, rng)
