"""The end-to-end Dyna-style training loop.

Each epoch: collect real transitions with the deterministic policy, retrain
the dynamics ensemble on everything seen so far, refill the hallucination
buffer with branched synthetic rollouts whose length follows the clipped
linear schedule, and run batches of actor-critic updates on a real/synthetic
mixture. Networks are optionally reinitialized once at a configured
environment-step count (plasticity reset) while both buffers survive.

Real-environment interactions are counted exactly: one counter increments
only inside collect_real, and the run asserts it equals epochs * steps at
the end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import statespace
from .buffers import ReplayBuffer, Transition
from .envs import Env
from .features import obs_inputs
from .model import History, ModelConfig, make_ensemble, train_models, hallucinate
from .model.history import push_batch
from .sac import SacAgent, SacConfig


@dataclass
class Schedule:
    """Clipped linear interpolation: x at epoch a, y at epoch b."""

    x: float
    y: float
    a: int = 0
    b: int = 1

    def __post_init__(self):
        if self.b <= self.a:
            raise ValueError("schedule needs b > a")


def schedule_value(epoch: int, sched: Schedule, integer: bool = True):
    f = sched.x + (epoch - sched.a) / (sched.b - sched.a) * (sched.y - sched.x)
    lo, hi = min(sched.x, sched.y), max(sched.x, sched.y)
    f = min(max(f, lo), hi)
    return int(math.floor(f)) if integer else f


@dataclass
class TrainConfig:
    """Every knob of the outer loop, named after the usual symbols."""

    N_epochs: int = 40
    N_E: int = 1000                     # env steps per epoch
    K: Schedule = field(default_factory=lambda: Schedule(10, 1000, 0, 4))
    M: int = 400                        # model rollouts per hallucination update
    G: int = 60                         # gradient updates per hallucination update
    k: Schedule = field(default_factory=lambda: Schedule(1, 20, 0, 10))
    r_D: float = 0.06                   # real fraction of each update batch
    H: int = 4                          # multi-step loss horizon
    h: int = 5                          # observation history length
    reset_at: int | None = 10000        # env-step count for the plasticity reset
    model_buffer_capacity: int = 100000

    def __post_init__(self):
        if not 0.0 <= self.r_D <= 1.0:
            raise ValueError("r_D must be in [0, 1]")
        for name in ("N_epochs", "N_E", "M", "G", "H", "h"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def mix_batch(rng: np.random.Generator, d_env: ReplayBuffer,
              d_model: ReplayBuffer, batch_size: int, r_D: float) -> dict:
    """floor(r_D * batch) real transitions, the rest synthetic; all real
    when the model buffer is empty."""
    if len(d_env) == 0:
        raise ValueError("real buffer is empty")
    n_real = int(math.floor(r_D * batch_size))
    if len(d_model) == 0:
        n_real = batch_size
    n_syn = batch_size - n_real
    parts = []
    if n_real:
        parts.append(d_env.gather(d_env.sample_indices(rng, n_real)))
    if n_syn:
        parts.append(d_model.gather(d_model.sample_indices(rng, n_syn)))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


class SsrlTrainer:
    """Owns one training run: environment, model, agent, buffers, rng streams.

    ``algorithm`` selects the variant: "ssrl" (semi-structured model),
    "ssrl-blackbox" (same loop, black-box model), or "sac" (no model, no
    synthetic data, stochastic acting).
    """

    def __init__(self, env: Env, train_cfg: TrainConfig, model_cfg: ModelConfig,
                 sac_cfg: SacConfig, master_seed: int, algorithm: str = "ssrl"):
        if algorithm not in ("ssrl", "ssrl-blackbox", "sac"):
            raise ValueError(f"unknown algorithm {algorithm!r}")
        self.env = env
        self.cfg = train_cfg
        self.model_cfg = model_cfg
        self.sac_cfg = sac_cfg
        self.algorithm = algorithm
        model_cfg.history_len = train_cfg.h
        model_cfg.horizon = train_cfg.H
        if algorithm == "ssrl-blackbox":
            model_cfg.family = "blackbox"

        ss = np.random.SeedSequence(master_seed)
        (s_env, s_model, s_model_train, s_sac, s_sac_up, s_hallu, s_mix,
         s_reset) = ss.spawn(8)
        env.rng = np.random.default_rng(s_env)
        self.rng_model_train = np.random.default_rng(s_model_train)
        self.rng_sac = np.random.default_rng(s_sac_up)
        self.rng_hallu = np.random.default_rng(s_hallu)
        self.rng_mix = np.random.default_rng(s_mix)
        self.rng_reset = np.random.default_rng(s_reset)

        ds = env.state_dim
        da = env.action_dim
        self.d_env = ReplayBuffer(train_cfg.N_epochs * train_cfg.N_E, ds, da,
                                  train_cfg.h, "env")
        self.d_model = ReplayBuffer(train_cfg.model_buffer_capacity, ds, da,
                                    train_cfg.h, "model")
        self.model = None
        if algorithm != "sac":
            self.model = make_ensemble(env.robot, env.gait, env.ctrl, model_cfg,
                                       np.random.default_rng(s_model))
        obs_dim = len(obs_inputs(env.robot, env.gait, env.ctrl, np.zeros(ds), 0,
                                 np.zeros((train_cfg.h, ds))))
        self.agent = SacAgent(obs_dim, *statespace.action_bounds(env.robot),
                              sac_cfg, np.random.default_rng(s_sac))

        self.env_steps = 0
        self.episode_id = 0
        self.model_episode_id = 0
        self._reset_done = False
        self._s = None
        self._hist = History(train_cfg.h, ds)
        self._ep_return = 0.0
        self._ep_steps = 0
        self.epoch_history: list[dict] = []

    # -- acting --------------------------------------------------------------------

    def _obs(self, s, phase_step, hist):
        return obs_inputs(self.env.robot, self.env.gait, self.env.ctrl,
                          s, phase_step, hist)

    def act_deterministic(self, s, phase_step, hist) -> np.ndarray:
        return self.agent.mean_action(self._obs(s, phase_step, hist))

    def policy_sampler(self):
        agent = self.agent

        def sample(s, phase_step, hist, rng):
            obs = obs_inputs(self.env.robot, self.env.gait, self.env.ctrl,
                             s, phase_step, hist)
            a, _ = agent.sample_action(obs, rng)
            return a

        return sample

    # -- data collection --------------------------------------------------------------

    def _begin_episode(self):
        self._s = self.env.reset()
        self._hist.fill(self._s)
        self._ep_return = 0.0
        self._ep_steps = 0

    def collect_real(self, n_steps: int, stochastic: bool = False) -> dict:
        """Exactly ``n_steps`` deterministic environment steps into D_env.

        Episodes reset on termination or at the length cap. Returns the
        completed-episode returns (reward accumulated until the episode's
        first termination) and the mean forward velocity.
        """
        completed = []
        vsum, vcount = 0.0, 0
        vel_idx = 3 if self.env.robot.tag == "PlanarHopper" else 1
        if self._s is None:
            self._begin_episode()
        for _ in range(n_steps):
            phase_step = self.env.episode.phase_step
            if stochastic:
                a = self.policy_sampler()(self._s[None], np.array([phase_step]),
                                          self._hist.snapshot()[None],
                                          self.rng_sac)[0]
            else:
                a = self.act_deterministic(self._s, phase_step,
                                           self._hist.snapshot())
            s_next, r, d, truncated, info = self.env.step(self._s, a)
            self.d_env.add(Transition(
                s=self._s, a=a, r=r, s_next=s_next, d=d,
                hist=self._hist.snapshot(), phase_step=phase_step,
                episode_id=self.episode_id,
                step_in_episode=self._ep_steps, source="env"))
            self.env_steps += 1
            self._ep_return += r
            self._ep_steps += 1
            vsum += s_next[vel_idx]
            vcount += 1
            self._hist.push(self._s)
            self._s = s_next
            if d or truncated:
                completed.append(self._ep_return)
                self.episode_id += 1
                self._begin_episode()
        return {"episode_returns": completed,
                "mean_velocity": vsum / max(1, vcount)}

    # -- network lifecycle ---------------------------------------------------------------

    def reset_networks(self) -> None:
        """Fresh model/actor/critic parameters and optimizer state; buffers
        and environment state are preserved."""
        s_model, s_sac = np.random.SeedSequence(
            self.rng_reset.integers(2 ** 63)).spawn(2)
        if self.model is not None:
            self.model = make_ensemble(self.env.robot, self.env.gait,
                                       self.env.ctrl, self.model_cfg,
                                       np.random.default_rng(s_model))
        self.agent = SacAgent(self.agent.obs_dim, self.agent.act_low,
                              self.agent.act_high, self.sac_cfg,
                              np.random.default_rng(s_sac))

    # -- SAC batch assembly -----------------------------------------------------------

    def sac_batch(self, fields: dict) -> dict:
        env_ = self.env
        hist_next = push_batch(fields["hist"], fields["s"])
        return {
            "obs": obs_inputs(env_.robot, env_.gait, env_.ctrl, fields["s"],
                              fields["phase_step"], fields["hist"]),
            "a": fields["a"],
            "r": fields["r"],
            "obs_next": obs_inputs(env_.robot, env_.gait, env_.ctrl,
                                   fields["s_next"], fields["phase_step"] + 1,
                                   hist_next),
            "d": fields["d"],
        }

    def _sac_updates(self, n: int) -> tuple[float, float]:
        closs = 0.0
        aloss = 0.0
        for _ in range(n):
            if self.algorithm == "sac":
                fields = self.d_env.gather(self.d_env.sample_indices(
                    self.rng_mix, self.sac_cfg.batch_size))
            else:
                fields = mix_batch(self.rng_mix, self.d_env, self.d_model,
                                   self.sac_cfg.batch_size, self.cfg.r_D)
            batch = self.sac_batch(fields)
            closs += self.agent.critic_update(batch, self.rng_sac)
            al, _ = self.agent.actor_and_temperature_update(batch, self.rng_sac)
            aloss += al
            self.agent.target_update()
        return closs / max(1, n), aloss / max(1, n)

    # -- the epoch ---------------------------------------------------------------------

    def run_epoch(self, epoch: int) -> dict:
        cfg = self.cfg
        if (cfg.reset_at is not None and not self._reset_done
                and self.env_steps >= cfg.reset_at > 0):
            self.reset_networks()
            self._reset_done = True

        stoch = self.algorithm == "sac"
        stats = self.collect_real(cfg.N_E, stochastic=stoch)

        model_train_loss = math.nan
        model_holdout_loss = math.nan
        if self.model is not None:
            m = train_models(self.model, self.d_env, self.rng_model_train,
                             horizon=cfg.H)
            model_train_loss = float(m["train_loss"][-1].mean())
            model_holdout_loss = float(np.nanmean(m["holdout_loss"]))

        k = schedule_value(epoch, cfg.k)
        K = schedule_value(epoch, cfg.K)
        if self.model is not None:
            self.d_model.clear()
            policy = self.policy_sampler()
            weights = self.env.weights
            for _ in range(K):
                idx = self.d_env.sample_indices(self.rng_hallu, cfg.M)
                starts = self.d_env.gather(idx)
                hallucinate(self.d_model, self.model, policy, weights,
                            starts["s"], starts["hist"], starts["phase_step"],
                            k, self.rng_hallu,
                            episode_id_start=self.model_episode_id)
                self.model_episode_id += cfg.M
                self._sac_updates(cfg.G)
        else:
            self._sac_updates(K * cfg.G)

        row = {
            "epoch": epoch,
            "env_steps": self.env_steps,
            "mean_return_to_first_termination":
                float(np.mean(stats["episode_returns"]))
                if stats["episode_returns"] else math.nan,
            "mean_velocity": stats["mean_velocity"],
            "model_train_loss": model_train_loss,
            "model_holdout_loss": model_holdout_loss,
            "k": k,
            "K": K,
            "alpha": self.agent.alpha,
        }
        self.epoch_history.append(row)
        return row

    def run(self, callback=None) -> list[dict]:
        for epoch in range(self.cfg.N_epochs):
            row = self.run_epoch(epoch)
            if callback is not None:
                callback(epoch, row, self)
        expected = self.cfg.N_epochs * self.cfg.N_E
        if self.env_steps != expected:
            raise AssertionError(
                f"environment interaction accounting broken: "
                f"{self.env_steps} != {expected}")
        return self.epoch_history


METRIC_COLUMNS = ["epoch", "env_steps", "mean_return_to_first_termination",
                  "mean_velocity", "model_train_loss", "model_holdout_loss",
                  "k", "K", "alpha"]


def metrics_to_csv(rows: list[dict]) -> str:
    lines = [",".join(METRIC_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in METRIC_COLUMNS))
    return "\n".join(lines) + "\n"
