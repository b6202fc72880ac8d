"""Binary agent checkpoints.

Layout (little-endian): magic ``PPOB``, uint32 format version, uint32 length
and UTF-8 JSON of the network specs and configs, then length-prefixed float64
arrays for actor params, critic params, both Adam states, normalizer
statistics, and finally the uint64 policy version.
"""

import io
import json
import struct
from pathlib import Path

import numpy as np

from agent.network import NetworkParams, NetworkSpec
from agent.optim import AdamState
from agent.ppo import PPOAgent
from data.models import NetworkConfig, PpoConfig
from rollout.normalizer import RunningNormalizer

CHECKPOINT_MAGIC = b"PPOB"
CHECKPOINT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def _write_array(out: io.BytesIO, values: np.ndarray) -> None:
    flat = np.ascontiguousarray(values, dtype="<f8").ravel()
    out.write(struct.pack("<Q", flat.size))
    out.write(flat.tobytes())


def _write_adam(out: io.BytesIO, state: AdamState) -> None:
    out.write(struct.pack("<Q4d", state.t, state.lr, state.beta1, state.beta2, state.eps))
    _write_array(out, np.concatenate([m.ravel() for m in state.m]))
    _write_array(out, np.concatenate([v.ravel() for v in state.v]))


def checkpoint_bytes(agent: PPOAgent) -> bytes:
    header = json.dumps(
        {
            "actor": agent.actor.spec.model_dump(mode="json"),
            "critic": agent.critic.spec.model_dump(mode="json"),
            "ppo": agent.ppo.model_dump(mode="json"),
            "network": agent.network.model_dump(mode="json"),
        },
        sort_keys=True,
    ).encode("utf-8")

    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    out.write(header)
    _write_array(out, agent.actor.flatten())
    _write_array(out, agent.critic.flatten())
    _write_adam(out, agent.actor_opt)
    _write_adam(out, agent.critic_opt)
    out.write(struct.pack("<d", agent.normalizer.count))
    _write_array(out, agent.normalizer.mean)
    _write_array(out, agent.normalizer.var)
    out.write(struct.pack("<Q", agent.version))
    return out.getvalue()


def save_checkpoint(agent: PPOAgent, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(agent))
    return path


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(f"{self.name}: truncated checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self) -> np.ndarray:
        (size,) = self.unpack("<Q")
        return np.frombuffer(self.take(8 * size), dtype="<f8").astype(np.float64)


def _split_like(template: NetworkParams, flat: np.ndarray) -> list[np.ndarray]:
    return list(NetworkParams.from_flat(template.spec, flat).arrays())


def _read_adam(reader: _Reader, params: NetworkParams) -> AdamState:
    t, lr, beta1, beta2, eps = reader.unpack("<Q4d")
    m = _split_like(params, reader.array())
    v = _split_like(params, reader.array())
    return AdamState(m=m, v=v, t=t, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def load_checkpoint(path: str | Path, rng: np.random.Generator | None = None) -> PPOAgent:
    """Rebuild an agent from a checkpoint file.

    Raises:
        CheckpointFormatError: On bad magic, unknown version or truncated data
    """
    path = Path(path)
    reader = _Reader(path.read_bytes(), str(path))
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a PPOB checkpoint")
    version, header_len = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
        actor_spec = NetworkSpec.model_validate(header["actor"])
        critic_spec = NetworkSpec.model_validate(header["critic"])
        ppo = PpoConfig.model_validate(header["ppo"])
        network = NetworkConfig.model_validate(header["network"])
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(f"{path}: malformed header ({e!s})") from e

    agent = PPOAgent(
        actor_spec.input_dim,
        actor_spec.branches[0].out_dim,
        ppo,
        network,
        rng if rng is not None else np.random.default_rng(0),
    )
    try:
        agent.actor = NetworkParams.from_flat(actor_spec, reader.array())
        agent.critic = NetworkParams.from_flat(critic_spec, reader.array())
        agent.actor_opt = _read_adam(reader, agent.actor)
        agent.critic_opt = _read_adam(reader, agent.critic)
        (count,) = reader.unpack("<d")
        normalizer = RunningNormalizer(actor_spec.input_dim)
        normalizer.mean = reader.array()
        normalizer.var = reader.array()
        normalizer.count = count
        if normalizer.mean.size != actor_spec.input_dim:
            raise CheckpointFormatError(f"{path}: normalizer dimension mismatch")
        agent.normalizer = normalizer
        (agent.version,) = reader.unpack("<Q")
    except ValueError as e:
        if isinstance(e, CheckpointFormatError):
            raise
        raise CheckpointFormatError(f"{path}: {e!s}") from e
    if reader.pos != len(reader.data):
        raise CheckpointFormatError(f"{path}: trailing bytes after checkpoint")
    return agent
