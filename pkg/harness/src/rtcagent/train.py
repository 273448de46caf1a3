"""SAC training loop over live simulator episodes.

Training alternates short episodes of the easy and moderate scenarios
(never hard, which is reserved for held-out evaluation). Each environment
is one simulator child process with one bridge connection; with n_envs > 1
the loop steps the environments in rotation so the replay buffer mixes
conditions within a training pass.

Exploration samples the stochastic policy; the first start_random_steps
actions are uniform in [-1, 1] to seed the buffer. Progress goes to a
training-curve CSV (one row per finished episode) and periodic checkpoints
carrying everything needed to resume: networks, optimizers, replay buffer,
and step counters. A bridge disconnect checkpoints immediately and raises
TrainingAborted with the checkpoint path, so an interrupted run restarts
with resume_from rather than from scratch.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .adapter import EnvAdapter, NormBounds, OBSERVATION_DIM
from .protocol import BridgeDisconnect, SimulatorProcess
from .reward import RewardSpec
from .sac import ReplayBuffer, SacAgent, SacConfig

CURVE_COLUMNS = ("episode", "scenario", "seed", "end_step", "steps",
                 "return", "mean_reward", "mean_target_mbps", "alpha",
                 "wall_s")


class TrainingAborted(RuntimeError):
    """Raised when the bridge drops mid-run; carries the checkpoint path."""

    def __init__(self, message: str, checkpoint_path: Path):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class TrainConfig:
    scenarios: tuple[str, ...] = ("easy", "moderate")
    total_steps: int = 15_000
    episode_duration_s: float = 60.0
    decision_interval_s: float = 1.0
    seed: int = 0
    n_envs: int = 1
    start_random_steps: int = 1_000
    batch_size: int = 256
    buffer_capacity: int = 100_000
    updates_per_step: int = 1
    checkpoint_every_steps: int = 2_000
    sac: SacConfig = field(default_factory=SacConfig)

    def __post_init__(self):
        if "hard" in self.scenarios:
            raise ValueError("hard is held out for evaluation; "
                             "train on other scenarios")
        steps = self.episode_duration_s / self.decision_interval_s
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("episode_duration_s must be a multiple of "
                             "decision_interval_s")


def episode_seed(base_seed: int, episode_index: int) -> int:
    """Deterministic per-episode seed (resume-safe, no RNG state needed)."""
    return (base_seed * 1_000_003 + episode_index * 7_919 + 1) % (2 ** 31)


class _Env:
    """One simulator process, one connection, one adapter."""

    def __init__(self, adapter: EnvAdapter, close_fn):
        self.adapter = adapter
        self._close = close_fn
        self.obs_vec: np.ndarray | None = None
        self.episode_index = -1
        self.episode_return = 0.0
        self.episode_rewards: list[float] = []
        self.episode_targets: list[float] = []
        self.episode_start_wall = 0.0

    def close(self) -> None:
        self._close()


def _default_env_factory(cfg: TrainConfig, reward: RewardSpec,
                         bounds: NormBounds):
    def make(_env_index: int) -> _Env:
        proc = SimulatorProcess().start()
        client = proc.client()
        try:
            client.connect()
        except Exception:
            proc.stop()
            raise
        adapter = EnvAdapter(
            client, scenario="", duration_s=cfg.episode_duration_s,
            decision_interval_s=cfg.decision_interval_s,
            reward=reward, bounds=bounds)

        def close():
            client.close()
            proc.stop()

        return _Env(adapter, close)

    return make


class Trainer:
    """Owns the agent, the buffer, the environments, and the artifacts.

    run() writes into out_dir:
      policy.pt             final agent (also usable as a resume source)
      checkpoint.pt         periodic resumable state
      training_curve.csv    one row per finished episode
      training_summary.json config, SAC hyperparameters, wall time
    """

    def __init__(self, cfg: TrainConfig, out_dir, *,
                 reward: RewardSpec | None = None,
                 bounds: NormBounds | None = None,
                 env_factory=None, resume_from=None):
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.reward = reward if reward is not None else RewardSpec()
        self.bounds = bounds if bounds is not None else NormBounds()
        self.agent = SacAgent(cfg.sac, seed=cfg.seed)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, OBSERVATION_DIM,
                                   cfg.sac.action_dim)
        self.rng = np.random.default_rng(cfg.seed)
        self.global_step = 0
        self.next_episode_index = 0
        self.curve_rows: list[dict] = []
        self._env_factory = env_factory if env_factory is not None \
            else _default_env_factory(cfg, self.reward, self.bounds)
        if resume_from is not None:
            self._load_checkpoint(Path(resume_from))

    # ------------------------------------------------------------------ run

    def run(self) -> dict:
        started = time.monotonic()
        envs: list[_Env] = []
        try:
            for i in range(self.cfg.n_envs):
                envs.append(self._env_factory(i))
            for env in envs:
                self._begin_episode(env)
            while self.global_step < self.cfg.total_steps:
                for env in envs:
                    if self.global_step >= self.cfg.total_steps:
                        break
                    self._step_env(env)
                    if self.global_step % self.cfg.checkpoint_every_steps \
                            == 0:
                        self.save_checkpoint()
        except BridgeDisconnect as exc:
            path = self.save_checkpoint()
            self._write_curve()
            raise TrainingAborted(
                f"bridge disconnected at step {self.global_step}: {exc}; "
                f"resume from {path}", path) from exc
        finally:
            for env in envs:
                env.close()
        wall_s = time.monotonic() - started
        self.save_checkpoint()
        self.agent.save(self.out_dir / "policy.pt")
        self._write_curve()
        summary = {
            "total_steps": self.global_step,
            "episodes_finished": len(self.curve_rows),
            "wall_time_s": round(wall_s, 3),
            "config": self._config_dict(),
            "reward": self.reward.as_dict(),
            "sac_hyperparameters": asdict(self.cfg.sac),
            "policy_path": str(self.out_dir / "policy.pt"),
        }
        with open(self.out_dir / "training_summary.json", "w",
                  encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return summary

    # ------------------------------------------------------------- episodes

    def _begin_episode(self, env: _Env) -> None:
        idx = self.next_episode_index
        self.next_episode_index += 1
        env.episode_index = idx
        env.adapter.scenario = self.cfg.scenarios[
            idx % len(self.cfg.scenarios)]
        env.obs_vec = env.adapter.reset(episode_seed(self.cfg.seed, idx))
        env.episode_return = 0.0
        env.episode_rewards = []
        env.episode_targets = []
        env.episode_start_wall = time.monotonic()

    def _step_env(self, env: _Env) -> None:
        if self.global_step < self.cfg.start_random_steps:
            action = float(self.rng.uniform(-1.0, 1.0))
        else:
            action = self.agent.act(env.obs_vec, deterministic=False)
        next_vec, reward, done, info = env.adapter.step(action)
        self.buffer.add(env.obs_vec, [action], reward, next_vec, done)
        env.obs_vec = next_vec
        env.episode_return += reward
        env.episode_rewards.append(reward)
        if not done:
            env.episode_targets.append(
                info["obs"]["current_target_bps"] / 1e6)
        self.global_step += 1
        if len(self.buffer) >= self.cfg.batch_size \
                and self.global_step >= self.cfg.start_random_steps:
            for _ in range(self.cfg.updates_per_step):
                self._last_losses = self.agent.update(
                    self.buffer.sample(self.cfg.batch_size, self.rng))
        if done:
            self._finish_episode(env)
            self._begin_episode(env)

    def _finish_episode(self, env: _Env) -> None:
        rewards = env.episode_rewards
        targets = env.episode_targets
        self.curve_rows.append({
            "episode": env.episode_index,
            "scenario": env.adapter.scenario,
            "seed": episode_seed(self.cfg.seed, env.episode_index),
            "end_step": self.global_step,
            "steps": len(rewards),
            "return": round(env.episode_return, 6),
            "mean_reward": round(
                sum(rewards) / len(rewards) if rewards else 0.0, 6),
            "mean_target_mbps": round(
                sum(targets) / len(targets) if targets else 0.0, 6),
            "alpha": round(self.agent.alpha, 6),
            "wall_s": round(time.monotonic() - env.episode_start_wall, 3),
        })

    # ------------------------------------------------------------ artifacts

    def _write_curve(self) -> None:
        with open(self.out_dir / "training_curve.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
            writer.writeheader()
            writer.writerows(self.curve_rows)

    def _config_dict(self) -> dict:
        cfg = asdict(self.cfg)
        cfg["scenarios"] = list(self.cfg.scenarios)
        return cfg

    def save_checkpoint(self) -> Path:
        import torch

        self._write_curve()
        path = self.out_dir / "checkpoint.pt"
        torch.save({
            "agent": self.agent.state_dict(),
            "buffer": self.buffer.state_dict(),
            "rng": self.rng.bit_generator.state,
            "torch_rng": torch.get_rng_state(),
            "global_step": self.global_step,
            "next_episode_index": self.next_episode_index,
            "curve_rows": self.curve_rows,
            "config": self._config_dict(),
        }, path)
        return path

    def _load_checkpoint(self, path: Path) -> None:
        import torch

        state = torch.load(path, map_location="cpu", weights_only=False)
        self.agent.load_state_dict(state["agent"])
        self.buffer.load_state_dict(state["buffer"])
        self.rng.bit_generator.state = state["rng"]
        torch.set_rng_state(state["torch_rng"])
        self.global_step = int(state["global_step"])
        self.next_episode_index = int(state["next_episode_index"])
        self.curve_rows = list(state["curve_rows"])
