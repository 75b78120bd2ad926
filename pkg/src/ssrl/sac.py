"""Soft actor-critic from scratch: twin critics with target smoothing, a
tanh-squashed Gaussian policy, and automatic entropy-temperature tuning.

The deterministic policy used for real-environment rollouts is the mean of
the stochastic policy; the stochastic policy generates the synthetic data.
Everything runs on the diffengine tape; target computations stay in plain
numpy (no gradient flows into targets).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffengine import (Tape, mlp_init, mlp_forward, params_as_dict,
                         optimizer_init, optimizer_step, ops,
                         save_params, load_params)

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0
_SQUASH_EPS = 1e-6


@dataclass
class SacConfig:
    width: int = 512
    depth: int = 2
    lr: float = 2e-3
    batch_size: int = 256
    gamma: float = 0.99
    tau_smooth: float = 1e-3
    auto_alpha: bool = True
    alpha: float = 0.1                    # initial (auto) or fixed value
    target_entropy: float | None = None   # default: -action_dim

    def __post_init__(self):
        if not 0.0 < self.tau_smooth <= 1.0:
            raise ValueError("tau_smooth must be in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")


def _vmin(a, b):
    """Elementwise min of two tape Vars (piecewise-linear gradient)."""
    mask = (a.value <= b.value).astype(np.float64)
    return a * mask + b * (1.0 - mask)


class SacAgent:
    def __init__(self, obs_dim: int, act_low: np.ndarray, act_high: np.ndarray,
                 cfg: SacConfig, rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.act_low = np.asarray(act_low, dtype=np.float64)
        self.act_high = np.asarray(act_high, dtype=np.float64)
        self.act_dim = self.act_low.size
        self.cfg = cfg
        self._center = 0.5 * (self.act_high + self.act_low)
        self._halfspan = 0.5 * (self.act_high - self.act_low)
        self.target_entropy = (cfg.target_entropy if cfg.target_entropy
                               is not None else -float(self.act_dim))

        hid = [cfg.width] * cfg.depth
        self.actor = params_as_dict(
            "pi", mlp_init(rng, [obs_dim] + hid + [2 * self.act_dim]))
        self.q1 = params_as_dict(
            "q1", mlp_init(rng, [obs_dim + self.act_dim] + hid + [1]))
        self.q2 = params_as_dict(
            "q2", mlp_init(rng, [obs_dim + self.act_dim] + hid + [1]))
        self.q1_targ = {k: v.copy() for k, v in self.q1.items()}
        self.q2_targ = {k: v.copy() for k, v in self.q2.items()}
        self.log_alpha = float(np.log(max(cfg.alpha, 1e-300)))

        self.opt_actor = optimizer_init(self.actor, lr=cfg.lr)
        self.opt_q1 = optimizer_init(self.q1, lr=cfg.lr)
        self.opt_q2 = optimizer_init(self.q2, lr=cfg.lr)
        self.opt_alpha = optimizer_init({"log_alpha": np.zeros(1)}, lr=cfg.lr)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    # -- forward passes ----------------------------------------------------------

    def _net(self, params: dict, prefix: str, x):
        n = self.cfg.depth + 1
        ws = [params[f"{prefix}.w{i}"] for i in range(n)]
        bs = [params[f"{prefix}.b{i}"] for i in range(n)]
        return mlp_forward(ws, bs, x)

    def _policy_stats(self, params: dict, obs):
        out = self._net(params, "pi", obs)
        mu = out[..., :self.act_dim]
        log_std = ops.clip(out[..., self.act_dim:], LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std

    def _squash(self, u):
        t = ops.tanh(u)
        return self._center + self._halfspan * t, t

    def _log_prob(self, u, mu, log_std, t):
        std = ops.exp(log_std)
        z = (u - mu) / std
        base = ops.sum_(-0.5 * z * z - log_std, axis=-1) \
            - 0.5 * self.act_dim * np.log(2.0 * np.pi)
        corr = ops.sum_(ops.log(1.0 - t * t + _SQUASH_EPS), axis=-1)
        return base - corr - float(np.sum(np.log(self._halfspan)))

    def sample_action(self, obs: np.ndarray, rng: np.random.Generator):
        """Stochastic action and its log-probability (numpy path)."""
        obs = np.asarray(obs, dtype=np.float64)
        mu, log_std = self._policy_stats(self.actor, obs)
        u = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
        a, t = self._squash(u)
        return a, self._log_prob(u, mu, log_std, t)

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic policy: squashed mean of the stochastic policy."""
        mu, _ = self._policy_stats(self.actor, np.asarray(obs, dtype=np.float64))
        a, _ = self._squash(mu)
        return a

    def q_values(self, params: dict, prefix: str, obs, act):
        x = ops.concat([obs, act], axis=-1)
        return self._net(params, prefix, x)[..., 0]

    # -- updates -------------------------------------------------------------------

    def td_targets(self, batch: dict, rng: np.random.Generator) -> np.ndarray:
        """y = r + gamma (1-d) [min Q_targ(s', a') - alpha log pi(a'|s')]."""
        a2, logp2 = self.sample_action(batch["obs_next"], rng)
        q1 = self.q_values(self.q1_targ, "q1", batch["obs_next"], a2)
        q2 = self.q_values(self.q2_targ, "q2", batch["obs_next"], a2)
        qmin = np.minimum(q1, q2)
        return batch["r"] + self.cfg.gamma * (1.0 - batch["d"]) * \
            (qmin - self.alpha * logp2)

    def critic_update(self, batch: dict, rng: np.random.Generator) -> float:
        y = self.td_targets(batch, rng)
        tape = Tape()
        leaves1 = tape.leaves(self.q1)
        leaves2 = tape.leaves(self.q2)
        q1 = self.q_values(leaves1, "q1", batch["obs"], batch["a"])
        q2 = self.q_values(leaves2, "q2", batch["obs"], batch["a"])
        loss = ((q1 - y) ** 2).mean() + ((q2 - y) ** 2).mean()
        if not np.isfinite(loss.value):
            raise FloatingPointError("critic loss diverged")
        grads = tape.gradients(loss, list(leaves1.values()) + list(leaves2.values()))
        g1 = dict(zip(leaves1.keys(), grads[:len(leaves1)]))
        g2 = dict(zip(leaves2.keys(), grads[len(leaves1):]))
        self.q1, self.opt_q1 = optimizer_step(self.q1, g1, self.opt_q1)
        self.q2, self.opt_q2 = optimizer_step(self.q2, g2, self.opt_q2)
        return float(loss.value)

    def actor_and_temperature_update(self, batch: dict,
                                     rng: np.random.Generator):
        """Policy ascends min-critic minus entropy cost; alpha tracks the
        entropy target. Returns (policy loss, new alpha)."""
        obs = batch["obs"]
        eps = rng.standard_normal((obs.shape[0], self.act_dim))
        tape = Tape()
        leaves = tape.leaves(self.actor)
        mu, log_std = self._policy_stats(leaves, obs)
        u = mu + ops.exp(log_std) * eps
        a, t = self._squash(u)
        logp = self._log_prob(u, mu, log_std, t)
        q = _vmin(self.q_values(self.q1, "q1", obs, a),
                  self.q_values(self.q2, "q2", obs, a))
        loss = (self.alpha * logp - q).mean()
        if not np.isfinite(loss.value):
            raise FloatingPointError("actor loss diverged")
        grads = tape.gradients(loss, list(leaves.values()))
        self.actor, self.opt_actor = optimizer_step(
            self.actor, dict(zip(leaves.keys(), grads)), self.opt_actor)

        if self.cfg.auto_alpha:
            mean_logp = float(logp.value.mean())
            g = np.array([-(mean_logp + self.target_entropy)])
            new, self.opt_alpha = optimizer_step(
                {"log_alpha": np.array([self.log_alpha])},
                {"log_alpha": g}, self.opt_alpha)
            self.log_alpha = float(new["log_alpha"][0])
        return float(loss.value), self.alpha

    def target_update(self) -> None:
        """Polyak blend: targ <- tau * online + (1 - tau) * targ."""
        t = self.cfg.tau_smooth
        for k in self.q1:
            self.q1_targ[k] = t * self.q1[k] + (1.0 - t) * self.q1_targ[k]
        for k in self.q2:
            self.q2_targ[k] = t * self.q2[k] + (1.0 - t) * self.q2_targ[k]

    # -- persistence -----------------------------------------------------------------

    def save(self, path) -> None:
        blob = {**self.actor, **self.q1, **self.q2,
                **{f"targ_{k}": v for k, v in self.q1_targ.items()},
                **{f"targ_{k}": v for k, v in self.q2_targ.items()},
                "log_alpha": np.array([self.log_alpha])}
        save_params(path, blob)

    def load(self, path) -> None:
        blob = load_params(path)
        self.actor = {k: blob[k] for k in self.actor}
        self.q1 = {k: blob[k] for k in self.q1}
        self.q2 = {k: blob[k] for k in self.q2}
        self.q1_targ = {k: blob[f"targ_{k}"] for k in self.q1}
        self.q2_targ = {k: blob[f"targ_{k}"] for k in self.q2}
        self.log_alpha = float(blob["log_alpha"][0])
