"""Soft Actor-Critic training with a shared replay buffer, expert
demonstration injection on failed episodes, a tolerance curriculum gated by a
70% trailing success rule, and the behavior-cloning ablation."""

from __future__ import annotations

import copy
import csv
import json
import math
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import torch

from .birrt import decimate, to_actions
from .env import MultiArmEnv, Transition, collect_episode, expert_action_source
from .neural import (NetConfig, PolicyNet, QNet, collate_sequences,
                     save_checkpoint, squashed_log_prob)

GRADUATION_SUCCESS_RATE = 0.70
GRADUATION_WINDOW = 100
EXPERT_DECIMATION_TOLERANCE = 0.01   # rad
EXPERT_ACTION_CAP = 0.5              # rad


@dataclass(frozen=True)
class CurriculumLevel:
    level: int
    position_tolerance: float   # m
    orientation_tolerance: float  # rad


def _build_curriculum():
    cm = [10.0, 8.0, 6.0, 4.0, 3.6, 3.2, 2.8, 2.6, 2.4, 2.2,
          2.1, 2.0, 1.9, 1.8, 1.7, 1.6, 1.5, 1.4, 1.3, 1.2, 1.1, 1.0]
    rad = [0.20, 0.16, 0.14, 0.10, 0.09, 0.08, 0.07, 0.06] + [0.05] * 14
    return tuple(CurriculumLevel(i + 1, p / 100.0, r)
                 for i, (p, r) in enumerate(zip(cm, rad)))


CURRICULUM = _build_curriculum()


@dataclass
class SACConfig:
    actor_lr: float = 0.0005
    q_lr: float = 0.001
    gamma: float = 0.99
    tau: float = 0.001
    batch_size: int = 4096
    warmup_steps: int = 20_000
    replay_capacity: int = 50_000
    target_entropy: float = -6.0
    temperature_lr: float = 0.0003
    initial_temperature: float = 1.0
    demo_anchor_weight: float = 0.0
    updates_per_env_step: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.actor_lr, self.q_lr, self.gamma, self.tau, self.batch_size,
               self.warmup_steps, self.replay_capacity, self.temperature_lr,
               self.initial_temperature) <= 0:
            raise ValueError("SAC parameters must be positive")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be >= batch size")
        if self.demo_anchor_weight < 0:
            raise ValueError("demo_anchor_weight must be >= 0")


class ReplayBuffer:
    """FIFO ring of transitions with provenance tags (policy | expert).

    Sampling is uniform with replacement; the tag never affects sampling."""

    def __init__(self, capacity):
        self.capacity = int(capacity)
        self._items = []
        self._cursor = 0
        self.pushed = {"policy": 0, "expert": 0}

    def __len__(self):
        return len(self._items)

    def push(self, transition: Transition, source="policy"):
        item = (transition, source)
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
        self._cursor = (self._cursor + 1) % self.capacity
        self.pushed[source] = self.pushed.get(source, 0) + 1

    def sample(self, batch_size, rng, with_sources=False):
        if not self._items:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        if with_sources:
            return [self._items[i] for i in idx]
        return [self._items[i][0] for i in idx]

    def source_counts(self):
        counts = {}
        for _, s in self._items:
            counts[s] = counts.get(s, 0) + 1
        return counts


class SACTrainer:
    """Owns the single mutable copy of all networks and the temperature."""

    def __init__(self, net_config: NetConfig = None, sac_config: SACConfig = None,
                 dtype=torch.float64):
        self.net_config = net_config or NetConfig()
        self.cfg = sac_config or SACConfig()
        self.dtype = dtype
        torch.manual_seed(self.cfg.seed)
        self.policy = PolicyNet(self.net_config).to(dtype)
        self.q1 = QNet(self.net_config).to(dtype)
        self.q2 = QNet(self.net_config).to(dtype)
        self.q1_target = copy.deepcopy(self.q1)
        self.q2_target = copy.deepcopy(self.q2)
        self.log_alpha = torch.tensor(math.log(self.cfg.initial_temperature),
                                      dtype=dtype, requires_grad=True)
        self.actor_opt = torch.optim.Adam(self.policy.parameters(), lr=self.cfg.actor_lr)
        self.q_opt = torch.optim.Adam(
            list(self.q1.parameters()) + list(self.q2.parameters()), lr=self.cfg.q_lr)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=self.cfg.temperature_lr)
        self.generator = torch.Generator().manual_seed(self.cfg.seed)
        self.updates = 0

    @property
    def alpha(self):
        return self.log_alpha.detach().exp()

    # -- acting -------------------------------------------------------------

    def act(self, observations, deterministic=False):
        """(k, 6) actions for the k per-arm observation sequences."""
        padded, lengths = collate_sequences(observations, dtype=self.dtype)
        with torch.no_grad():
            mean, log_std = self.policy(padded, lengths)
            if deterministic:
                u = mean
            else:
                eps = torch.randn(mean.shape, generator=self.generator, dtype=self.dtype)
                u = mean + log_std.exp() * eps
            return torch.tanh(u).numpy()

    # -- learning -----------------------------------------------------------

    def _collate_batch(self, batch):
        obs, lengths = collate_sequences([t.observation for t in batch], dtype=self.dtype)
        nxt, nxt_lengths = collate_sequences([t.next_observation for t in batch],
                                             dtype=self.dtype)
        actions = torch.as_tensor(np.stack([t.action for t in batch]), dtype=self.dtype)
        rewards = torch.as_tensor([t.reward for t in batch], dtype=self.dtype)
        dones = torch.as_tensor([float(t.done) for t in batch], dtype=self.dtype)
        return obs, lengths, actions, rewards, nxt, nxt_lengths, dones

    def compute_losses(self, batch):
        """Differentiable SAC losses for one batch (used by the gradient
        tests); update() applies them with optimizers."""
        obs, lengths, actions, rewards, nxt, nxt_lengths, dones = self._collate_batch(batch)
        cfg = self.cfg
        alpha = self.log_alpha.exp()

        with torch.no_grad():
            n_mean, n_log_std = self.policy(nxt, nxt_lengths)
            eps = torch.randn(n_mean.shape, generator=self.generator, dtype=self.dtype)
            n_u = n_mean + n_log_std.exp() * eps
            n_action = torch.tanh(n_u)
            n_logp = squashed_log_prob(n_mean, n_log_std, n_u)
            q_next = torch.min(self.q1_target(nxt, nxt_lengths, n_action),
                               self.q2_target(nxt, nxt_lengths, n_action))
            target = rewards + cfg.gamma * (1.0 - dones) * (q_next - alpha.detach() * n_logp)

        q1_loss = ((self.q1(obs, lengths, actions) - target) ** 2).mean()
        q2_loss = ((self.q2(obs, lengths, actions) - target) ** 2).mean()

        mean, log_std = self.policy(obs, lengths)
        eps = torch.randn(mean.shape, generator=self.generator, dtype=self.dtype)
        u = mean + log_std.exp() * eps
        new_action = torch.tanh(u)
        logp = squashed_log_prob(mean, log_std, u)
        q_new = torch.min(self.q1(obs, lengths, new_action),
                          self.q2(obs, lengths, new_action))
        actor_loss = (alpha.detach() * logp - q_new).mean()

        alpha_loss = -(self.log_alpha * (logp + cfg.target_entropy).detach()).mean()
        return {"actor": actor_loss, "q1": q1_loss, "q2": q2_loss,
                "temperature": alpha_loss}

    def update(self, buffer: ReplayBuffer, rng):
        """One SAC gradient step from a uniformly sampled batch."""
        tagged = buffer.sample(self.cfg.batch_size, rng, with_sources=True)
        batch = [t for t, _ in tagged]
        expert_mask = torch.tensor([s == "expert" for _, s in tagged],
                                   dtype=torch.bool)
        obs, lengths, actions, rewards, nxt, nxt_lengths, dones = self._collate_batch(batch)
        cfg = self.cfg
        alpha = self.log_alpha.exp().detach()

        with torch.no_grad():
            n_mean, n_log_std = self.policy(nxt, nxt_lengths)
            eps = torch.randn(n_mean.shape, generator=self.generator, dtype=self.dtype)
            n_u = n_mean + n_log_std.exp() * eps
            n_action = torch.tanh(n_u)
            n_logp = squashed_log_prob(n_mean, n_log_std, n_u)
            q_next = torch.min(self.q1_target(nxt, nxt_lengths, n_action),
                               self.q2_target(nxt, nxt_lengths, n_action))
            target = rewards + cfg.gamma * (1.0 - dones) * (q_next - alpha * n_logp)

        q1_loss = ((self.q1(obs, lengths, actions) - target) ** 2).mean()
        q2_loss = ((self.q2(obs, lengths, actions) - target) ** 2).mean()
        self.q_opt.zero_grad()
        (q1_loss + q2_loss).backward()
        self.q_opt.step()

        mean, log_std = self.policy(obs, lengths)
        eps = torch.randn(mean.shape, generator=self.generator, dtype=self.dtype)
        u = mean + log_std.exp() * eps
        new_action = torch.tanh(u)
        logp = squashed_log_prob(mean, log_std, u)
        q_new = torch.min(self.q1(obs, lengths, new_action),
                          self.q2(obs, lengths, new_action))
        actor_loss = (alpha * logp - q_new).mean()
        if cfg.demo_anchor_weight > 0.0 and bool(expert_mask.any()):
            # anchor the deterministic action to the demonstrated one on
            # expert-sourced samples (squashed-space error, as in bc_loss)
            err = ((torch.tanh(mean[expert_mask]) - actions[expert_mask]) ** 2).mean()
            actor_loss = actor_loss + cfg.demo_anchor_weight * err
        self.actor_opt.zero_grad()
        actor_loss.backward()
        self.actor_opt.step()

        alpha_loss = -(self.log_alpha * (logp + cfg.target_entropy).detach()).mean()
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()
        losses = {"actor": actor_loss, "q1": q1_loss, "q2": q2_loss,
                  "temperature": alpha_loss}

        self._polyak(self.q1, self.q1_target, self.cfg.tau)
        self._polyak(self.q2, self.q2_target, self.cfg.tau)
        self.updates += 1
        return {k: float(v.detach()) for k, v in losses.items()}

    @staticmethod
    def _polyak(online, target, tau):
        with torch.no_grad():
            for p, tp in zip(online.parameters(), target.parameters()):
                tp.mul_(1.0 - tau).add_(p, alpha=tau)

    def modules(self):
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target,
                "log_alpha": self.log_alpha.detach()}

    def save(self, path, meta=None):
        nc = self.net_config
        merged = {"net": {"state_dim": nc.state_dim, "hidden_dim": nc.hidden_dim,
                          "mlp_dims": list(nc.mlp_dims), "action_dim": nc.action_dim},
                  "dtype": str(self.dtype).replace("torch.", "")}
        merged.update(meta or {})
        save_checkpoint(path, self.modules(), merged)


# ---------------------------------------------------------------------------
# expert conversion

def expert_actions_for(trajectory, action_scale):
    """Decimate an expert trajectory and convert it to an env action source."""
    simplified = decimate(trajectory, EXPERT_DECIMATION_TOLERANCE)
    sequences = to_actions(simplified, EXPERT_ACTION_CAP)
    return expert_action_source(sequences, action_scale)


# ---------------------------------------------------------------------------
# training loop

METRICS_COLUMNS = ("episode", "env_steps", "level", "trailing100_success",
                   "actor_loss", "q_loss", "alpha", "expert_injections")


def run_training(dataset, expert_trajectories, sac_config, env_config, out_dir,
                 seed=0, curriculum=CURRICULUM, use_expert=True, arm=None,
                 net_config=None, dtype=torch.float64, max_env_steps=200_000,
                 max_episodes=None, stop_after_graduations=None,
                 checkpoint_every_episodes=None, log_fn=None):
    """Single-worker training loop; deterministic for a fixed seed.

    Expert transitions are injected only for episodes that failed at the
    current curriculum tolerance, and only when the expert's own replay in
    the environment succeeds. Returns a summary dict; writes metrics.csv and
    checkpoint files into out_dir.
    """
    if use_expert and not expert_trajectories:
        raise ValueError("expert trajectories required; pass use_expert=False "
                         "for the no-expert ablation")
    os.makedirs(out_dir, exist_ok=True)
    sac_config = sac_config or SACConfig()
    trainer = SACTrainer(net_config, sac_config, dtype=dtype)
    buffer = ReplayBuffer(sac_config.replay_capacity)
    rng = np.random.default_rng(seed)
    tasks = dataset.tasks
    if not tasks:
        raise ValueError("empty task dataset")

    level_index = 0
    window = deque(maxlen=GRADUATION_WINDOW)
    env_steps = 0
    episode = 0
    expert_injections = 0
    graduations = 0
    update_debt = 0.0
    last_losses = {"actor": math.nan, "q1": math.nan, "temperature": math.nan}

    metrics_path = os.path.join(out_dir, "metrics.csv")
    metrics = open(metrics_path, "w", newline="")
    writer = csv.writer(metrics)
    writer.writerow(METRICS_COLUMNS)

    def current_env_config():
        lvl = curriculum[level_index]
        return env_config.with_tolerances(lvl.position_tolerance,
                                          lvl.orientation_tolerance)

    try:
        while True:
            if max_episodes is not None and episode >= max_episodes:
                break
            if env_steps >= max_env_steps:
                break
            task = tasks[int(rng.integers(0, len(tasks)))]
            env = MultiArmEnv(arm, current_env_config())
            transitions, success = collect_episode(
                env, task, lambda obs, e: trainer.act(obs))
            new_steps = len(transitions[0])
            env_steps += new_steps
            for arm_transitions in transitions:
                for t in arm_transitions:
                    buffer.push(t, source="policy")

            if not success and use_expert:
                traj = expert_trajectories.get(task.id)
                if traj is not None:
                    source = expert_actions_for(traj, env.config.action_scale)
                    exp_transitions, exp_success = collect_episode(env, task, source)
                    env_steps += len(exp_transitions[0])
                    if exp_success:
                        expert_injections += 1
                        for arm_transitions in exp_transitions:
                            for t in arm_transitions:
                                buffer.push(t, source="expert")

            window.append(float(success))
            episode += 1

            if env_steps >= sac_config.warmup_steps and len(buffer) >= sac_config.batch_size:
                update_debt += new_steps * sac_config.updates_per_env_step
                while update_debt >= 1.0:
                    last_losses = trainer.update(buffer, rng)
                    update_debt -= 1.0

            trailing = sum(window) / len(window)
            writer.writerow([
                episode, env_steps, curriculum[level_index].level,
                repr(trailing), repr(last_losses["actor"]),
                repr(last_losses["q1"]), repr(float(trainer.alpha)),
                expert_injections,
            ])
            if log_fn is not None:
                log_fn(episode, env_steps, curriculum[level_index].level, trailing)

            if (len(window) == GRADUATION_WINDOW
                    and trailing >= GRADUATION_SUCCESS_RATE):
                graduations += 1
                window.clear()
                if level_index + 1 < len(curriculum):
                    level_index += 1
                if stop_after_graduations is not None and graduations >= stop_after_graduations:
                    break

            if (checkpoint_every_episodes is not None
                    and episode % checkpoint_every_episodes == 0):
                trainer.save(os.path.join(out_dir, f"checkpoint_{episode:07d}.bin"),
                             {"episode": episode, "env_steps": env_steps,
                              "level": curriculum[level_index].level})
    finally:
        metrics.close()

    final_path = os.path.join(out_dir, "checkpoint_final.bin")
    trainer.save(final_path, {"episode": episode, "env_steps": env_steps,
                              "level": curriculum[level_index].level})
    summary = {
        "episodes": episode,
        "env_steps": env_steps,
        "level": curriculum[level_index].level,
        "graduations": graduations,
        "expert_injections": expert_injections,
        "trailing_success": sum(window) / len(window) if window else None,
        "checkpoint": final_path,
        "metrics": metrics_path,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return summary


# ---------------------------------------------------------------------------
# behavior cloning ablation

def bc_loss(policy: PolicyNet, observations, actions, dtype=torch.float64):
    """Mean squared error between the deterministic (squashed) policy action
    and the expert action.  Expert actions produced by capped waypoint
    conversion frequently sit exactly at the +/-1 boundary, where a
    likelihood in pre-squash space is unbounded; the squashed-space error
    stays well behaved there."""
    padded, lengths = collate_sequences(observations, dtype=dtype)
    a = torch.as_tensor(np.stack(actions), dtype=dtype)
    mean, _ = policy(padded, lengths)
    return ((torch.tanh(mean) - a) ** 2).mean()


def behavior_clone(pairs, policy: PolicyNet, epochs, lr, batch_size=256,
                   seed=0, dtype=torch.float64):
    """Minimize squashed-action error against expert pairs; returns the
    trained policy."""
    if not pairs:
        raise ValueError("no expert observation-action pairs")
    if epochs == 0:
        return policy
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(policy.parameters(), lr=lr)
    n = len(pairs)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            chunk = [pairs[i] for i in order[start:start + batch_size]]
            loss = bc_loss(policy, [c[0] for c in chunk], [c[1] for c in chunk],
                           dtype=dtype)
            opt.zero_grad()
            loss.backward()
            opt.step()
    return policy
