"""Multi-step likelihood training of the dynamics ensembles.

The loss propagates mean predictions auto-regressively for H steps from a
real start state, feeding each prediction back into the history, and scores
every propagated mean against the logged next state under the per-step
predicted diagonal covariance:

    loss = (1/H) * sum_j (res_j^T diag(var_j)^-1 res_j + log det var_j)

averaged over segment starts. Gradients flow through the integrator via the
tape. Segments never cross episode boundaries; the 90/10 holdout split is by
segment start index, with per-member early stopping on the holdout loss.
"""
from __future__ import annotations

import numpy as np

from ..buffers import ReplayBuffer
from ..diffengine import Tape, gaussian_nll, optimizer_init, optimizer_step, ops
from .ensemble import _EnsembleBase


def _stack_segment_batches(buf: ReplayBuffer, starts_per_member: list,
                           horizon: int) -> dict:
    packs = [buf.gather_segments(s, horizon) for s in starts_per_member]
    return {k: np.stack([p[k] for p in packs]) for k in packs[0]}


def multistep_loss(model: _EnsembleBase, params: dict, batch: dict,
                   m=ops, horizon: int | None = None):
    """Per-member losses, shape (P,). ``params`` may be tape Vars.

    ``batch``: s0 (P,B,ds), hist0 (P,B,h,ds), phase0 (P,B),
    a (P,B,H,da), targets (P,B,H,ds).
    """
    H = horizon if horizon is not None else batch["targets"].shape[2]
    if batch["targets"].shape[2] < H:
        raise ValueError("segment shorter than requested horizon")
    h = batch["hist0"].shape[2]
    hist = [batch["hist0"][:, :, i] for i in range(h)]
    s = batch["s0"]
    total = None
    for j in range(H):
        s_next, var, _ = model.core(params, s, batch["phase0"] + j,
                                    batch["a"][:, :, j], hist, m)
        if not model.cfg.noise_enabled:
            var = np.ones_like(batch["targets"][:, :, j])
        nll = gaussian_nll(s_next, var, batch["targets"][:, :, j])
        total = nll if total is None else total + nll
        hist = [s] + hist[:-1]
        s = s_next
    return (total * (1.0 / H)).mean(axis=-1)


def _loss_and_grads(model, batch, horizon):
    tape = Tape()
    leaves = tape.leaves(model.params)
    per_member = multistep_loss(model, leaves, batch, m=ops, horizon=horizon)
    loss = per_member.sum()
    grads = tape.gradients(loss, list(leaves.values()))
    return (per_member.value,
            {k: g for k, g in zip(leaves.keys(), grads)})


def holdout_loss(model, buf, starts, horizon) -> np.ndarray:
    if len(starts) == 0:
        return np.full(model.cfg.ensemble_size, np.nan)
    batch = _stack_segment_batches(buf, [starts] * model.cfg.ensemble_size,
                                   horizon)
    return np.asarray(multistep_loss(model, model.params, batch, ops, horizon))


def train_models(model: _EnsembleBase, env_buffer: ReplayBuffer,
                 rng: np.random.Generator, horizon: int | None = None,
                 max_epochs: int | None = None) -> dict:
    """Train every member on its own minibatch stream; early-stop on holdout.

    Returns metrics: per-member final holdout loss, training-loss history,
    epochs run. Raises on divergence (non-finite loss).
    """
    cfg = model.cfg
    H = horizon if horizon is not None else cfg.horizon
    epochs_budget = max_epochs if max_epochs is not None else cfg.max_epochs
    P = cfg.ensemble_size

    starts = env_buffer.segment_starts(H)
    if len(starts) == 0:
        raise ValueError("buffer has no full training segment")
    starts = starts[rng.permutation(len(starts))]
    n_hold = max(1, int(cfg.holdout_frac * len(starts))) if len(starts) > 4 else 0
    hold, train = starts[:n_hold], starts[n_hold:]
    if len(train) == 0:
        train, hold = starts, starts[:0]

    opt = optimizer_init(model.params, lr=cfg.lr)
    member_rngs = [np.random.default_rng(rng.integers(2 ** 63)) for _ in range(P)]
    batch = min(cfg.batch_size, len(train))
    n_batches = max(1, len(train) // batch)

    best = {k: v.copy() for k, v in model.params.items()}
    best_hold = holdout_loss(model, env_buffer, hold, H)
    stale = np.zeros(P, dtype=int)
    train_hist = []
    epochs_run = 0

    for _ in range(epochs_budget):
        orders = [r.permutation(len(train)) for r in member_rngs]
        epoch_loss = np.zeros(P)
        for b in range(n_batches):
            sel = [train[o[b * batch:(b + 1) * batch]] for o in orders]
            data = _stack_segment_batches(env_buffer, sel, H)
            per_member, grads = _loss_and_grads(model, data, H)
            if not np.all(np.isfinite(per_member)):
                raise FloatingPointError(
                    f"model training diverged: member losses {per_member}")
            model.params, opt = optimizer_step(model.params, grads, opt)
            epoch_loss += per_member
        train_hist.append(epoch_loss / n_batches)
        epochs_run += 1

        if len(hold) > 0:
            hl = holdout_loss(model, env_buffer, hold, H)
            improved = hl < best_hold - 1e-8
            for p in range(P):
                if improved[p]:
                    best_hold[p] = hl[p]
                    stale[p] = 0
                    for k in model.params:
                        best[k][p] = model.params[k][p]
                else:
                    stale[p] += 1
            if np.all(stale >= cfg.patience):
                break

    if len(hold) > 0:
        model.params = best
    final_hold = holdout_loss(model, env_buffer, hold, H) if len(hold) else \
        np.asarray(train_hist[-1])
    return {"holdout_loss": final_hold,
            "train_loss": np.asarray(train_hist),
            "epochs": epochs_run,
            "n_segments": len(starts)}
