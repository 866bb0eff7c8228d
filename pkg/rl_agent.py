"""
Contextual-bandit MCS agent trained with a clipped-surrogate policy gradient.

One network (two tanh layers) is shared by all UEs: it maps a UE's feature
block to 29 MCS logits and a scalar baseline. With discount 0 the return of
every transition is its immediate reward, so the advantage is simply the
UE's reward minus the baseline.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
from torch.distributions import Categorical

from exceptions import DomainError, TrainingDivergedError
from la_env import LinkAdaptationEnv, run_episode
from metrics import summarize
from schemas import NUM_MCS, MetricsSummary, TrainConfig

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DTYPE = torch.float64

EnvFactory = Callable[[int, np.random.Generator], Tuple[LinkAdaptationEnv, np.ndarray]]


class PolicyNetwork(nn.Module):
    """Shared per-UE trunk with a 29-way policy head and a value head"""

    def __init__(self, per_ue_dim: int, hidden_units: int = 64, num_actions: int = NUM_MCS):
        super().__init__()
        self.per_ue_dim = per_ue_dim
        self.hidden_units = hidden_units
        self.trunk = nn.Sequential(
            nn.Linear(per_ue_dim, hidden_units),
            nn.Tanh(),
            nn.Linear(hidden_units, hidden_units),
            nn.Tanh(),
        )
        self.policy_head = nn.Linear(hidden_units, num_actions)
        self.value_head = nn.Linear(hidden_units, 1)

        for layer in self.trunk:
            if isinstance(layer, nn.Linear):
                nn.init.orthogonal_(layer.weight, gain=np.sqrt(2))
                nn.init.zeros_(layer.bias)
        # near-uniform initial policy
        nn.init.orthogonal_(self.policy_head.weight, gain=0.01)
        nn.init.zeros_(self.policy_head.bias)
        nn.init.orthogonal_(self.value_head.weight, gain=1.0)
        nn.init.zeros_(self.value_head.bias)
        self.to(DTYPE)

    def forward(self, features: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        hidden = self.trunk(features)
        return self.policy_head(hidden), self.value_head(hidden).squeeze(-1)

    def distribution(self, features: torch.Tensor) -> Categorical:
        logits, _ = self(features)
        return Categorical(logits=logits)


def split_state(state: np.ndarray, per_ue_dim: int) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.ndim != 1 or state.size % per_ue_dim:
        raise DomainError(f"state length {state.size} is not a multiple of {per_ue_dim}")
    return state.reshape(-1, per_ue_dim)


def _sample(net: PolicyNetwork, features: np.ndarray, rng: np.random.Generator,
            deterministic: bool = False):
    with torch.no_grad():
        logits, values = net(torch.as_tensor(features, dtype=DTYPE))
        log_probs = torch.log_softmax(logits, dim=-1).numpy()
    if deterministic:
        actions = log_probs.argmax(axis=1)
    else:
        cdf = np.cumsum(np.exp(log_probs), axis=1)
        draws = rng.random(len(features))[:, None] * cdf[:, -1:]
        actions = np.minimum((cdf <= draws).sum(axis=1), NUM_MCS - 1)
    chosen = log_probs[np.arange(len(actions)), actions]
    return actions.astype(int), chosen, values.numpy()


def act(params: PolicyNetwork, state: np.ndarray, rng: np.random.Generator,
        deterministic: bool = False) -> np.ndarray:
    """One MCS per UE from the shared policy"""
    features = split_state(state, params.per_ue_dim)
    actions, _, _ = _sample(params, features, rng, deterministic)
    return actions


@dataclass
class RolloutBuffer:
    """Per-(slot, UE) transitions collected under the current policy"""
    features: List[np.ndarray] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    log_probs: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    def add(self, features: np.ndarray, action: int, log_prob: float, reward: float, value: float) -> None:
        self.features.append(np.asarray(features, dtype=float))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))

    def clear(self) -> None:
        for items in (self.features, self.actions, self.log_probs, self.rewards, self.values):
            items.clear()

    def returns(self) -> np.ndarray:
        # discount 0: the return is the immediate reward
        return np.asarray(self.rewards, dtype=float)

    def advantages(self) -> np.ndarray:
        return self.returns() - np.asarray(self.values, dtype=float)

    def tensors(self) -> Dict[str, torch.Tensor]:
        return {
            "features": torch.as_tensor(np.stack(self.features), dtype=DTYPE),
            "actions": torch.as_tensor(self.actions, dtype=torch.long),
            "log_probs": torch.as_tensor(self.log_probs, dtype=DTYPE),
            "returns": torch.as_tensor(self.returns(), dtype=DTYPE),
            "advantages": torch.as_tensor(self.advantages(), dtype=DTYPE),
        }


def normalize_advantages(advantages: torch.Tensor) -> torch.Tensor:
    if advantages.numel() < 2:
        return advantages
    return (advantages - advantages.mean()) / (advantages.std(unbiased=False) + 1e-8)


def surrogate_loss(net: PolicyNetwork, features: torch.Tensor, actions: torch.Tensor,
                   old_log_probs: torch.Tensor, advantages: torch.Tensor, returns: torch.Tensor,
                   cfg: TrainConfig) -> Tuple[torch.Tensor, Dict[str, float]]:
    """
    Negative clipped-surrogate objective

    loss = -(E[min(r A, clip(r, 1-eps, 1+eps) A)] + c_H * H) + c_V * E[(V - R)^2]
    """
    logits, values = net(features)
    dist = Categorical(logits=logits)
    ratio = torch.exp(dist.log_prob(actions) - old_log_probs)
    clipped = torch.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surrogate = torch.min(ratio * advantages, clipped * advantages).mean()
    entropy = dist.entropy().mean()
    value_loss = (values - returns).pow(2).mean()
    loss = -(surrogate + cfg.entropy_coef * entropy) + cfg.value_coef * value_loss
    info = {
        "surrogate": float(surrogate.detach()),
        "entropy": float(entropy.detach()),
        "value_loss": float(value_loss.detach()),
    }
    return loss, info


def update(net: PolicyNetwork, optimizer: torch.optim.Optimizer, buffer: RolloutBuffer,
           cfg: TrainConfig, rng: np.random.Generator) -> Dict[str, float]:
    batch = buffer.tensors()
    advantages = batch["advantages"]
    if cfg.normalize_advantages:
        advantages = normalize_advantages(advantages)

    size, info = len(buffer), {}
    for _ in range(cfg.epochs):
        order = torch.as_tensor(rng.permutation(size))
        for start in range(0, size, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            loss, info = surrogate_loss(
                net, batch["features"][idx], batch["actions"][idx], batch["log_probs"][idx],
                advantages[idx], batch["returns"][idx], cfg,
            )
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {float(loss)} during policy update")
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), cfg.max_grad_norm)
            optimizer.step()
    logger.debug("Policy update on %d transitions: %s", size, info)
    return info


def train(env_factory: EnvFactory, cfg: TrainConfig,
          net: Optional[PolicyNetwork] = None) -> Tuple[PolicyNetwork, List[float]]:
    """
    Train on freshly drawn episodes

    ``env_factory(episode, rng)`` returns a reset environment and its initial
    state; the realization should change with ``episode``. Returns the final
    network and the per-episode mean step reward.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    buffer = RolloutBuffer()
    optimizer = None
    curve: List[float] = []
    steps = 0

    for episode in range(cfg.total_episodes):
        env, state = env_factory(episode, rng)
        if net is None:
            net = PolicyNetwork(env.per_ue_dim, cfg.hidden_units)
        if optimizer is None:
            optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

        rewards = []
        while not env.done:
            features = split_state(state, env.per_ue_dim)
            actions, log_probs, values = _sample(net, features, rng)
            state, reward, result = env.step(actions, rng)
            ue_rewards = result.ue_rewards if cfg.per_ue_reward else np.full(env.num_ues, reward)
            for ue in np.flatnonzero(result.scheduled):
                buffer.add(features[ue], actions[ue], log_probs[ue], ue_rewards[ue], values[ue])
            rewards.append(reward)
            steps += 1

            if len(buffer) >= cfg.rollout_len:
                update(net, optimizer, buffer, cfg, rng)
                buffer.clear()
            if cfg.total_steps is not None and steps >= cfg.total_steps:
                break

        curve.append(float(np.mean(rewards)) if rewards else 0.0)
        if (episode + 1) % 10 == 0:
            logger.info("Episode %d/%d: mean reward %.4f", episode + 1, cfg.total_episodes, curve[-1])
        if cfg.total_steps is not None and steps >= cfg.total_steps:
            break

    return net, curve


def evaluate(params: PolicyNetwork, env_factory: EnvFactory, episodes: int, seed: int = 0,
             label: str = "rl", **summary_kwargs) -> MetricsSummary:
    """Deterministic-policy rollouts over fresh realizations"""
    summary, _ = evaluate_records(params, env_factory, episodes, seed, label, **summary_kwargs)
    return summary


def evaluate_records(params: PolicyNetwork, env_factory: EnvFactory, episodes: int, seed: int = 0,
                     label: str = "rl", **summary_kwargs):
    rng = np.random.default_rng(seed)
    logs, num_ues, state_dim = [], 0, None
    for episode in range(episodes):
        env, state = env_factory(episode, rng)
        run_episode(env, state, lambda e, s, r: act(params, s, r, deterministic=True), rng)
        logs.append(env.records)
        num_ues, state_dim = env.num_ues, env.state_dim
    summary = summarize(logs, label=label, method="rl", num_ues=num_ues, state_dim=state_dim, **summary_kwargs)
    return summary, logs


def config_hash(cfg: TrainConfig) -> str:
    payload = json.dumps(cfg.model_dump(), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def save_checkpoint(net: PolicyNetwork, path: Union[str, Path], cfg: Optional[TrainConfig] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "per_ue_dim": net.per_ue_dim,
        "hidden_units": net.hidden_units,
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "state_dict": net.state_dict(),
    }, path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[PolicyNetwork, dict]:
    payload = torch.load(path, map_location="cpu")
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise DomainError(f"{path}: unsupported checkpoint version {payload.get('format_version')}")
    net = PolicyNetwork(payload["per_ue_dim"], payload["hidden_units"])
    net.load_state_dict(payload["state_dict"])
    meta = {k: v for k, v in payload.items() if k != "state_dict"}
    return net, meta


def write_training_curve(curve: List[float], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"episode": np.arange(len(curve)), "mean_reward": curve})
    frame.to_csv(path, index=False, float_format="%.10g")
    return path
