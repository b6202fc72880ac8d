"""Diagonal Gaussian policy head, PPO-clip actor loss and critic regression."""

import math
from dataclasses import dataclass

import numpy as np

from agent.network import NetworkParams, backward, forward
from data.models import PpoConfig

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
ENTROPY_CONST = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class PolicyOutput:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class ActorBatch:
    observations: np.ndarray
    actions: np.ndarray  # pre-clip samples
    old_log_probs: np.ndarray
    advantages: np.ndarray


@dataclass(frozen=True)
class ActorLossStats:
    loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float


def policy_output(actor: NetworkParams, obs: np.ndarray, std_floor: float = 1e-4):
    """Evaluate the actor; returns (PolicyOutput, tape, raw sigmoid output)."""
    (mean, sigma), tape = forward(actor, obs)
    return PolicyOutput(mean=mean, std=np.maximum(sigma, std_floor)), tape, sigma


def clip_action(raw_action: np.ndarray) -> np.ndarray:
    return np.clip(raw_action, -1.0, 1.0)


def sample_action(output: PolicyOutput, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw a pre-clip action and its log-density. The env receives clip_action(raw)."""
    raw = output.mean + output.std * rng.standard_normal(output.mean.shape)
    return raw, float(log_prob(output, raw))


def log_prob(output: PolicyOutput, action: np.ndarray) -> np.ndarray:
    """Log-density summed over the last axis (scalar for a single action)."""
    z = (np.asarray(action) - output.mean) / output.std
    per_dim = -0.5 * z * z - np.log(output.std) - LOG_SQRT_2PI
    return per_dim.sum(axis=-1)


def entropy(output: PolicyOutput) -> np.ndarray:
    return (ENTROPY_CONST + np.log(output.std)).sum(axis=-1)


def log_prob_grads(output: PolicyOutput, action: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d log_prob / d mean and d log_prob / d std."""
    diff = np.asarray(action) - output.mean
    var = output.std * output.std
    return diff / var, diff * diff / (var * output.std) - 1.0 / output.std


def ppo_actor_loss(
    batch: ActorBatch,
    actor: NetworkParams,
    config: PpoConfig,
    std_floor: float = 1e-4,
) -> tuple[ActorLossStats, NetworkParams]:
    """Clipped surrogate loss minus the entropy bonus, with its actor gradients.

    Raises:
        FloatingPointError: If a probability ratio is not finite
    """
    out, tape, sigma = policy_output(actor, batch.observations, std_floor)
    n = batch.advantages.shape[0]
    eps = config.clip_eps
    adv = batch.advantages

    lp = log_prob(out, batch.actions)
    with np.errstate(over="ignore"):
        ratio = np.exp(lp - batch.old_log_probs)
    bad = np.flatnonzero(~np.isfinite(ratio))
    if bad.size:
        raise FloatingPointError(f"Non-finite probability ratio at sample {int(bad[0])}")

    unclipped = ratio * adv
    clipped = np.where(adv >= 0.0, (1.0 + eps) * adv, (1.0 - eps) * adv)
    surrogate = np.minimum(unclipped, clipped)
    ent = entropy(out)
    loss = -surrogate.mean() - config.entropy_coef * ent.mean()

    # gradient flows through the ratio only where the unclipped branch is the minimum
    active = unclipped < clipped
    d_lp = np.where(active, -ratio * adv / n, 0.0)
    d_mean_lp, d_std_lp = log_prob_grads(out, batch.actions)
    d_mean = d_lp[:, None] * d_mean_lp
    d_std = d_lp[:, None] * d_std_lp - config.entropy_coef / n / out.std
    d_sigma = np.where(sigma > std_floor, d_std, 0.0)
    grads = backward(actor, tape, [d_mean, d_sigma])

    log_ratio = lp - batch.old_log_probs
    stats = ActorLossStats(
        loss=float(loss),
        entropy=float(ent.mean()),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
        approx_kl=float(np.mean((ratio - 1.0) - log_ratio)),
    )
    return stats, grads


def critic_values(critic: NetworkParams, obs: np.ndarray) -> np.ndarray:
    (values,), _ = forward(critic, obs)
    return values[..., 0]


def critic_loss(
    observations: np.ndarray, targets: np.ndarray, critic: NetworkParams
) -> tuple[float, NetworkParams]:
    """Mean squared error between critic(s) and y, with its gradients."""
    (values,), tape = forward(critic, observations)
    residual = values[:, 0] - targets
    loss = float(np.mean(residual * residual))
    d_values = (2.0 / residual.size) * residual[:, None]
    return loss, backward(critic, tape, [d_values])
