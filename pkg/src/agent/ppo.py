import logging
from dataclasses import dataclass

import numpy as np

from agent.network import NetworkParams, actor_spec, critic_spec, orthogonal_init
from agent.optim import AdamState, adam_step, clip_gradients_global
from agent.policy import (
    ActorBatch,
    clip_action,
    critic_loss,
    critic_values,
    policy_output,
    ppo_actor_loss,
    sample_action,
)
from data.models import NetworkConfig, PpoConfig, UpdateMetrics
from rollout.buffer import OnPolicyViolationError, RolloutBuffer
from rollout.normalizer import NormalizerStats, RunningNormalizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ActionChoice:
    observation: np.ndarray  # normalized
    raw_action: np.ndarray
    action: np.ndarray  # clipped, sent to the environment
    log_prob: float
    value: float


@dataclass(frozen=True)
class PolicySnapshot:
    """Immutable copy of everything a worker needs to act for one policy version."""

    actor: NetworkParams
    critic: NetworkParams
    normalizer: NormalizerStats
    version: int
    std_floor: float = 1e-4

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return self.normalizer.normalize(obs)

    def act(self, raw_obs: np.ndarray, rng: np.random.Generator) -> ActionChoice:
        obs = self.normalize(raw_obs)
        output, _, _ = policy_output(self.actor, obs, self.std_floor)
        raw_action, lp = sample_action(output, rng)
        return ActionChoice(
            observation=obs,
            raw_action=raw_action,
            action=clip_action(raw_action),
            log_prob=lp,
            value=self.value(obs, normalized=True),
        )

    def deterministic_action(self, raw_obs: np.ndarray) -> np.ndarray:
        output, _, _ = policy_output(self.actor, self.normalize(raw_obs), self.std_floor)
        return clip_action(output.mean)

    def value(self, obs: np.ndarray, normalized: bool = False) -> float:
        x = obs if normalized else self.normalize(obs)
        return float(critic_values(self.critic, x))


class PPOAgent:
    """Actor, critic, their Adam states, the observation normalizer and the policy version."""

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        ppo: PpoConfig,
        network: NetworkConfig,
        rng: np.random.Generator,
    ):
        self.ppo = ppo
        self.network = network
        self.rng = rng
        self.actor = orthogonal_init(actor_spec(obs_dim, act_dim, network), rng)
        self.critic = orthogonal_init(critic_spec(obs_dim, network), rng)
        self.actor_opt = AdamState.for_params(
            self.actor, ppo.actor_lr, ppo.adam_beta1, ppo.adam_beta2, ppo.adam_eps
        )
        self.critic_opt = AdamState.for_params(
            self.critic, ppo.critic_lr, ppo.adam_beta1, ppo.adam_beta2, ppo.adam_eps
        )
        self.normalizer = RunningNormalizer(obs_dim)
        self.version = 0

    @property
    def obs_dim(self) -> int:
        return self.actor.spec.input_dim

    @property
    def act_dim(self) -> int:
        return self.actor.spec.branches[0].out_dim

    def snapshot(self) -> PolicySnapshot:
        return PolicySnapshot(
            actor=self.actor.copy(),
            critic=self.critic.copy(),
            normalizer=self.normalizer.stats(),
            version=self.version,
            std_floor=self.network.std_floor,
        )

    def update(self, buffer: RolloutBuffer, allow_offpolicy: bool = False) -> UpdateMetrics:
        """Run the PPO epochs on an assembled buffer and bump the policy version.

        Raises:
            OnPolicyViolationError: If the buffer holds other policy versions and
                off-policy updates are not allowed
            ValueError: If the buffer is empty or not assembled
        """
        if len(buffer) == 0:
            raise ValueError("Cannot update on an empty buffer")
        if buffer.advantages is None or buffer.targets is None:
            raise ValueError("Buffer must be assembled before the update")
        versions = buffer.versions()
        stale = int(np.count_nonzero(versions != self.version))
        if stale and not allow_offpolicy:
            raise OnPolicyViolationError(
                f"{stale} of {versions.size} transitions were not collected by "
                f"policy version {self.version}"
            )

        obs = buffer.observations()
        actions = buffer.actions()
        old_log_probs = buffer.log_probs()
        advantages = buffer.advantages
        targets = buffer.targets
        n = obs.shape[0]
        batch_size = min(self.ppo.minibatch_size, n)

        totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip": 0.0, "kl": 0.0}
        n_steps = 0
        for _ in range(self.ppo.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                batch = ActorBatch(
                    observations=obs[idx],
                    actions=actions[idx],
                    old_log_probs=old_log_probs[idx],
                    advantages=advantages[idx],
                )
                stats, actor_grads = ppo_actor_loss(
                    batch, self.actor, self.ppo, self.network.std_floor
                )
                actor_grads = clip_gradients_global(actor_grads, self.ppo.max_grad_norm)
                self.actor, self.actor_opt = adam_step(self.actor, actor_grads, self.actor_opt)

                v_loss, critic_grads = critic_loss(obs[idx], targets[idx], self.critic)
                critic_grads = clip_gradients_global(critic_grads, self.ppo.max_grad_norm)
                self.critic, self.critic_opt = adam_step(self.critic, critic_grads, self.critic_opt)

                totals["policy_loss"] += stats.loss
                totals["value_loss"] += v_loss
                totals["entropy"] += stats.entropy
                totals["clip"] += stats.clip_fraction
                totals["kl"] += stats.approx_kl
                n_steps += 1

        self.version += 1
        metrics = UpdateMetrics(
            policy_loss=totals["policy_loss"] / n_steps,
            value_loss=totals["value_loss"] / n_steps,
            entropy=totals["entropy"] / n_steps,
            mean_value_estimate=float(buffer.values().mean()),
            clip_fraction=totals["clip"] / n_steps,
            approx_kl=totals["kl"] / n_steps,
        )
        logger.debug("Policy version %d: %s", self.version, metrics)
        return metrics
