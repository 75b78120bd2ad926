"""Auto-regressive synthetic rollouts from the learned ensembles.

Each rollout step samples an action from the stochastic policy, draws one
ensemble member uniformly, samples the uncertainty-aware next state, pushes
the prediction into the history, and scores reward/termination with the
known reward function on predicted states. Rollouts stop early on predicted
termination.
"""
from __future__ import annotations

import numpy as np

from ..buffers import ReplayBuffer, Transition
from ..envs import RewardWeights, reward, terminated
from ..controller import motor_map
from .ensemble import _EnsembleBase
from .history import push_batch


def hallucinate(buffer_out: ReplayBuffer, model: _EnsembleBase, policy_sample,
                weights: RewardWeights, s0: np.ndarray, hist0: np.ndarray,
                phase0: np.ndarray, k: int, rng: np.random.Generator,
                episode_id_start: int = 0) -> int:
    """Roll ``k`` synthetic steps from a batch of start states into
    ``buffer_out``. ``policy_sample(s, phase_step, hist, rng) -> actions``.

    Returns the number of transitions appended.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.atleast_2d(np.asarray(s0, dtype=np.float64)).copy()
    hist = np.asarray(hist0, dtype=np.float64)
    if hist.ndim == 2:
        hist = hist[None]
    hist = hist.copy()
    phase_step = np.broadcast_to(np.asarray(phase0), (s.shape[0],)).copy()
    active = np.ones(s.shape[0], dtype=bool)
    P = model.cfg.ensemble_size
    added = 0
    ep_ids = episode_id_start + np.arange(s.shape[0])

    for t in range(k):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        sa, ha, pa = s[idx], hist[idx], phase_step[idx]
        a = policy_sample(sa, pa, ha, rng)
        means, variances, _ = model.predict_all(sa, pa, a, ha)
        member = rng.integers(0, P, size=len(idx))
        rows = np.arange(len(idx))
        mean = means[member, rows]
        var = variances[member, rows]
        if model.cfg.noise_enabled:
            s_next = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
        else:
            s_next = mean
        tau = motor_map(model.robot, model.gait, model.ctrl, sa, pa, a)
        r = reward(model.robot, weights, sa, tau, s_next)
        d = terminated(model.robot, s_next)
        for j, i in enumerate(idx):
            buffer_out.add(Transition(
                s=sa[j], a=a[j], r=float(r[j]), s_next=s_next[j],
                d=bool(d[j]), hist=ha[j], phase_step=int(pa[j]),
                episode_id=int(ep_ids[i]), step_in_episode=t,
                source=buffer_out.tag))
            added += 1
        hist[idx] = push_batch(ha, sa)
        s[idx] = s_next
        phase_step[idx] += 1
        active[idx] = ~d
    return added
