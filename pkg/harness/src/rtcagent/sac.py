"""Soft actor-critic for a one-dimensional bitrate action.

Standard SAC with a tanh-squashed Gaussian policy, twin Q critics with
Polyak-averaged targets, and automatic entropy-temperature tuning. The
simulator's author did not publish agent hyperparameters, so the values
here are the algorithm's stock defaults (3e-4 Adam, gamma 0.99, tau 0.005,
two 256-unit hidden layers, target entropy -1 for the scalar action); the
trainer logs them next to every run so results stay reproducible.

Actions live in [-1, 1]; mapping to bitrates is the adapter's job.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class SacConfig:
    obs_dim: int = 8
    action_dim: int = 1
    hidden: int = 256
    lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    target_entropy: float = -1.0
    init_alpha: float = 0.2


def _mlp(in_dim: int, hidden: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden), nn.ReLU(),
        nn.Linear(hidden, hidden), nn.ReLU(),
        nn.Linear(hidden, out_dim),
    )


class Actor(nn.Module):
    """Tanh-squashed Gaussian policy head."""

    def __init__(self, cfg: SacConfig):
        super().__init__()
        self.body = _mlp(cfg.obs_dim, cfg.hidden, 2 * cfg.action_dim)
        self.action_dim = cfg.action_dim

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mean, log_std = self.body(obs).chunk(2, dim=-1)
        return mean, log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)

    def sample(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Reparameterized action in [-1, 1] and its log-probability."""
        mean, log_std = self(obs)
        dist = torch.distributions.Normal(mean, log_std.exp())
        pre = dist.rsample()
        action = torch.tanh(pre)
        log_prob = dist.log_prob(pre) - torch.log1p(-action.pow(2) + 1e-6)
        return action, log_prob.sum(dim=-1, keepdim=True)

    def mean_action(self, obs: torch.Tensor) -> torch.Tensor:
        mean, _ = self(obs)
        return torch.tanh(mean)


class Critic(nn.Module):
    def __init__(self, cfg: SacConfig):
        super().__init__()
        self.q = _mlp(cfg.obs_dim + cfg.action_dim, cfg.hidden, 1)

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.q(torch.cat([obs, action], dim=-1))


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions, sampled uniformly."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int = 1):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.action = np.zeros((capacity, action_dim), dtype=np.float32)
        self.reward = np.zeros((capacity, 1), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros((capacity, 1), dtype=np.float32)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self._next
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int,
               rng: np.random.Generator) -> dict[str, torch.Tensor]:
        idx = rng.integers(0, self._size, size=batch_size)
        return {
            "obs": torch.from_numpy(self.obs[idx]),
            "action": torch.from_numpy(self.action[idx]),
            "reward": torch.from_numpy(self.reward[idx]),
            "next_obs": torch.from_numpy(self.next_obs[idx]),
            "done": torch.from_numpy(self.done[idx]),
        }

    def state_dict(self) -> dict:
        return {"obs": self.obs, "action": self.action, "reward": self.reward,
                "next_obs": self.next_obs, "done": self.done,
                "next": self._next, "size": self._size}

    def load_state_dict(self, state: dict) -> None:
        self.obs[:] = state["obs"]
        self.action[:] = state["action"]
        self.reward[:] = state["reward"]
        self.next_obs[:] = state["next_obs"]
        self.done[:] = state["done"]
        self._next = int(state["next"])
        self._size = int(state["size"])


class SacAgent:
    """Policy plus critics plus their optimizers, with save/load."""

    def __init__(self, cfg: SacConfig | None = None, seed: int = 0):
        self.cfg = cfg if cfg is not None else SacConfig()
        torch.manual_seed(seed)
        self.actor = Actor(self.cfg)
        self.q1 = Critic(self.cfg)
        self.q2 = Critic(self.cfg)
        self.q1_target = Critic(self.cfg)
        self.q2_target = Critic(self.cfg)
        self.q1_target.load_state_dict(self.q1.state_dict())
        self.q2_target.load_state_dict(self.q2.state_dict())
        self.log_alpha = torch.tensor(
            float(np.log(self.cfg.init_alpha)), requires_grad=True)
        lr = self.cfg.lr
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=lr)
        self.q1_opt = torch.optim.Adam(self.q1.parameters(), lr=lr)
        self.q2_opt = torch.optim.Adam(self.q2.parameters(), lr=lr)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=lr)
        self.updates_done = 0

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    def act(self, obs_vec: np.ndarray, *, deterministic: bool) -> float:
        """One action in [-1, 1]; deterministic uses the squashed mean."""
        obs = torch.from_numpy(np.asarray(obs_vec, dtype=np.float32)) \
            .unsqueeze(0)
        with torch.no_grad():
            if deterministic:
                action = self.actor.mean_action(obs)
            else:
                action, _ = self.actor.sample(obs)
        return float(action.squeeze())

    def update(self, batch: dict[str, torch.Tensor]) -> dict[str, float]:
        """One gradient step on critics, actor, and temperature."""
        cfg = self.cfg
        with torch.no_grad():
            next_action, next_logp = self.actor.sample(batch["next_obs"])
            target_q = torch.min(
                self.q1_target(batch["next_obs"], next_action),
                self.q2_target(batch["next_obs"], next_action))
            alpha = self.log_alpha.exp()
            backup = batch["reward"] + cfg.gamma * (1.0 - batch["done"]) \
                * (target_q - alpha * next_logp)

        q1_loss = nn.functional.mse_loss(
            self.q1(batch["obs"], batch["action"]), backup)
        q2_loss = nn.functional.mse_loss(
            self.q2(batch["obs"], batch["action"]), backup)
        self.q1_opt.zero_grad()
        q1_loss.backward()
        self.q1_opt.step()
        self.q2_opt.zero_grad()
        q2_loss.backward()
        self.q2_opt.step()

        action, logp = self.actor.sample(batch["obs"])
        q_min = torch.min(self.q1(batch["obs"], action),
                          self.q2(batch["obs"], action))
        actor_loss = (self.log_alpha.exp().detach() * logp - q_min).mean()
        self.actor_opt.zero_grad()
        actor_loss.backward()
        self.actor_opt.step()

        alpha_loss = -(self.log_alpha
                       * (logp + cfg.target_entropy).detach()).mean()
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()

        self._soft_update(self.q1, self.q1_target)
        self._soft_update(self.q2, self.q2_target)
        self.updates_done += 1
        return {"q1_loss": float(q1_loss.detach()),
                "q2_loss": float(q2_loss.detach()),
                "actor_loss": float(actor_loss.detach()),
                "alpha": self.alpha}

    def _soft_update(self, net: nn.Module, target: nn.Module) -> None:
        tau = self.cfg.tau
        with torch.no_grad():
            for p, tp in zip(net.parameters(), target.parameters()):
                tp.mul_(1.0 - tau).add_(p, alpha=tau)

    # ----------------------------------------------------------- persistence

    def state_dict(self) -> dict:
        return {
            "config": asdict(self.cfg),
            "actor": self.actor.state_dict(),
            "q1": self.q1.state_dict(),
            "q2": self.q2.state_dict(),
            "q1_target": self.q1_target.state_dict(),
            "q2_target": self.q2_target.state_dict(),
            "log_alpha": self.log_alpha.detach().clone(),
            "actor_opt": self.actor_opt.state_dict(),
            "q1_opt": self.q1_opt.state_dict(),
            "q2_opt": self.q2_opt.state_dict(),
            "alpha_opt": self.alpha_opt.state_dict(),
            "updates_done": self.updates_done,
        }

    def load_state_dict(self, state: dict) -> None:
        self.actor.load_state_dict(state["actor"])
        self.q1.load_state_dict(state["q1"])
        self.q2.load_state_dict(state["q2"])
        self.q1_target.load_state_dict(state["q1_target"])
        self.q2_target.load_state_dict(state["q2_target"])
        with torch.no_grad():
            self.log_alpha.copy_(state["log_alpha"])
        self.actor_opt.load_state_dict(state["actor_opt"])
        self.q1_opt.load_state_dict(state["q1_opt"])
        self.q2_opt.load_state_dict(state["q2_opt"])
        self.alpha_opt.load_state_dict(state["alpha_opt"])
        self.updates_done = int(state["updates_done"])

    def save(self, path) -> None:
        torch.save(self.state_dict(), path)

    @classmethod
    def load(cls, path) -> "SacAgent":
        state = torch.load(path, map_location="cpu", weights_only=False)
        agent = cls(SacConfig(**state["config"]))
        agent.load_state_dict(state)
        return agent
