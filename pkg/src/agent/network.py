"""Dense trunk-and-branches networks with reverse-mode gradients.

Weights are stored as (out, in) matrices and applied as ``y = x @ W.T + b`` on
row-batched inputs. Everything is float64.
"""

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from data.models import Activation, NetworkConfig


# === Specs ===
class BranchSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden: tuple[int, ...] = ()
    out_dim: int = Field(ge=1)
    head_activation: Activation = Activation.LINEAR
    head_gain: float = Field(default=1.0, gt=0)


class NetworkSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    input_dim: int = Field(ge=1)
    trunk: tuple[int, ...] = ()
    hidden_activation: Activation = Activation.RELU
    branches: tuple[BranchSpec, ...] = Field(min_length=1)

    def layers(self) -> list["LayerSpec"]:
        """Flat layer list: trunk layers first, then each branch in order."""
        out: list[LayerSpec] = []
        width = self.input_dim
        for h in self.trunk:
            out.append(LayerSpec(width, h, self.hidden_activation, 1.0, branch=None))
            width = h
        trunk_width = width
        for b, branch in enumerate(self.branches):
            width = trunk_width
            for h in branch.hidden:
                out.append(LayerSpec(width, h, self.hidden_activation, 1.0, branch=b))
                width = h
            out.append(
                LayerSpec(width, branch.out_dim, branch.head_activation, branch.head_gain, branch=b)
            )
        return out


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation
    gain: float
    branch: int | None


def actor_spec(obs_dim: int, act_dim: int, config: NetworkConfig) -> NetworkSpec:
    """Trunk [h] then a tanh mean branch and a sigmoid std branch, each [h]."""
    return NetworkSpec(
        input_dim=obs_dim,
        trunk=(config.hidden,),
        branches=(
            BranchSpec(
                hidden=(config.hidden,),
                out_dim=act_dim,
                head_activation=Activation.TANH,
                head_gain=config.mean_head_gain,
            ),
            BranchSpec(
                hidden=(config.hidden,), out_dim=act_dim, head_activation=Activation.SIGMOID
            ),
        ),
    )


def critic_spec(obs_dim: int, config: NetworkConfig) -> NetworkSpec:
    return NetworkSpec(
        input_dim=obs_dim,
        trunk=(config.hidden, config.hidden),
        branches=(BranchSpec(out_dim=1, head_activation=Activation.LINEAR),),
    )


# === Parameters ===
@dataclass
class NetworkParams:
    """Per-layer weights and biases; also used to carry gradients."""

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> Iterator[np.ndarray]:
        for w, b in zip(self.weights, self.biases, strict=True):
            yield w
            yield b

    def with_arrays(self, arrays: list[np.ndarray]) -> "NetworkParams":
        return NetworkParams(spec=self.spec, weights=list(arrays[0::2]), biases=list(arrays[1::2]))

    def zeros_like(self) -> "NetworkParams":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def copy(self) -> "NetworkParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, spec: NetworkSpec, flat: np.ndarray) -> "NetworkParams":
        expected = parameter_count(spec)
        if flat.size != expected:
            raise ValueError(f"Expected {expected} parameters, got {flat.size}")
        weights, biases, offset = [], [], 0
        for layer in spec.layers():
            n_w = layer.out_dim * layer.in_dim
            weights.append(flat[offset : offset + n_w].reshape(layer.out_dim, layer.in_dim).copy())
            offset += n_w
            biases.append(flat[offset : offset + layer.out_dim].copy())
            offset += layer.out_dim
        return cls(spec=spec, weights=weights, biases=biases)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def parameter_count(spec: NetworkSpec) -> int:
    return sum(layer.out_dim * (layer.in_dim + 1) for layer in spec.layers())


def orthogonal_matrix(rows: int, cols: int, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Rows orthonormal when rows <= cols, columns orthonormal otherwise."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    w = q.T if rows < cols else q
    return gain * w


def orthogonal_init(spec: NetworkSpec, rng: np.random.Generator) -> NetworkParams:
    weights, biases = [], []
    for layer in spec.layers():
        weights.append(orthogonal_matrix(layer.out_dim, layer.in_dim, rng, layer.gain))
        biases.append(np.zeros(layer.out_dim))
    return NetworkParams(spec=spec, weights=weights, biases=biases)


# === Forward / backward ===
def activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    if activation is Activation.TANH:
        return np.tanh(z)
    if activation is Activation.SIGMOID:
        # split by sign to avoid overflow in exp
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def activation_grad(z: np.ndarray, y: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    if activation is Activation.TANH:
        return 1.0 - y * y
    if activation is Activation.SIGMOID:
        return y * (1.0 - y)
    return np.ones_like(z)


@dataclass
class Tape:
    params: NetworkParams
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    batched: bool


def forward(params: NetworkParams, x: np.ndarray) -> tuple[list[np.ndarray], Tape]:
    """Evaluate every branch head on x of shape (in,) or (batch, in)."""
    spec = params.spec
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    xb = x if batched else x[None, :]
    if xb.ndim != 2 or xb.shape[1] != spec.input_dim:
        raise ValueError(f"Expected input dimension {spec.input_dim}, got shape {x.shape}")

    inputs, pre, post = [], [], []
    outputs: list[np.ndarray] = []
    layers = spec.layers()
    trunk_out = xb
    current = xb
    for i, layer in enumerate(layers):
        if layer.branch is not None and (i == 0 or layers[i - 1].branch != layer.branch):
            current = trunk_out
        z = current @ params.weights[i].T + params.biases[i]
        y = activate(z, layer.activation)
        inputs.append(current)
        pre.append(z)
        post.append(y)
        current = y
        if layer.branch is None:
            trunk_out = y
        elif _is_head(layers, i):
            outputs.append(y if batched else y[0])

    return outputs, Tape(params=params, inputs=inputs, pre=pre, post=post, batched=batched)


def _is_head(layers: list[LayerSpec], i: int) -> bool:
    return layers[i].branch is not None and (
        i == len(layers) - 1 or layers[i + 1].branch != layers[i].branch
    )


def backward(params: NetworkParams, tape: Tape, head_grads: list[np.ndarray]) -> NetworkParams:
    """Gradients of a scalar loss given dLoss/dHead for every branch head."""
    if tape.params is not params:
        raise ValueError("Tape was recorded with different parameters (stale tape)")
    spec = params.spec
    layers = spec.layers()
    if len(head_grads) != len(spec.branches):
        raise ValueError(f"Expected {len(spec.branches)} head gradients, got {len(head_grads)}")

    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    trunk_grad = np.zeros_like(tape.inputs[_first_branch_layer(layers)])

    head_indices = [i for i in range(len(layers)) if _is_head(layers, i)]
    for branch_idx, head_i in enumerate(head_indices):
        g = np.asarray(head_grads[branch_idx], dtype=np.float64)
        g = g if tape.batched else g[None, :]
        if g.shape != tape.post[head_i].shape:
            raise ValueError(
                f"Head gradient {branch_idx} has shape {g.shape}, expected {tape.post[head_i].shape}"
            )
        i = head_i
        while True:
            g = _layer_backward(params, tape, layers, i, g, grad_w, grad_b)
            if i == 0 or layers[i - 1].branch != branch_idx:
                break
            i -= 1
        trunk_grad = trunk_grad + g

    g = trunk_grad
    for i in range(_first_branch_layer(layers) - 1, -1, -1):
        g = _layer_backward(params, tape, layers, i, g, grad_w, grad_b)

    return NetworkParams(spec=spec, weights=grad_w, biases=grad_b)


def _first_branch_layer(layers: list[LayerSpec]) -> int:
    return next(i for i, layer in enumerate(layers) if layer.branch is not None)


def _layer_backward(params, tape, layers, i, g_out, grad_w, grad_b) -> np.ndarray:
    dz = g_out * activation_grad(tape.pre[i], tape.post[i], layers[i].activation)
    grad_w[i] += dz.T @ tape.inputs[i]
    grad_b[i] += dz.sum(axis=0)
    return dz @ params.weights[i]
