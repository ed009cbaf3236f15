"""Neural network layers built on the autodiff engine."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
import logging
import math

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    exp,
    gaussian_sample,
    group_norm,
    matmul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softplus,
    stack,
    tanh,
    tensor_sum,
)
from .const import GN_EPSILON
from .exceptions import ConfigError, ShapeError

_LOGGER = logging.getLogger(__name__)


class Initializer:
    """Creates parameters in call order from one seeded generator."""

    def __init__(self, rng: np.random.Generator, dtype: str = "float64") -> None:
        """Initialize with a generator and parameter dtype."""
        self.rng = rng
        self.dtype = np.dtype(dtype)

    def uniform(self, shape: tuple[int, ...], fan_in: int) -> Tensor:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights."""
        bound = 1.0 / math.sqrt(fan_in)
        values = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        return Tensor(values, requires_grad=True)

    def zeros(self, shape: tuple[int, ...]) -> Tensor:
        """Zero parameters."""
        return Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)

    def ones(self, shape: tuple[int, ...]) -> Tensor:
        """Unit parameters."""
        return Tensor(np.ones(shape, dtype=self.dtype), requires_grad=True)


class Module:
    """Layer holding parameter tensors and sub-layers as attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        """Yield (dotted name, tensor) in attribute definition order."""
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, list | tuple):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{index}.")

    def parameters(self) -> list[Tensor]:
        """Parameter tensors in definition order."""
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_count(self) -> int:
        """Total number of trainable scalars."""
        return sum(tensor.size for tensor in self.parameters())


class Linear(Module):
    """Affine map x W + b on the last axis."""

    def __init__(self, init: Initializer, in_dim: int, out_dim: int, bias: bool = True) -> None:
        """Initialize the weight [in_dim, out_dim] and bias [out_dim]."""
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = init.uniform((in_dim, out_dim), in_dim)
        self.bias = init.zeros((out_dim,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"linear: input width {x.shape[-1]}, expected {self.in_dim}")
        out = matmul(x, self.weight)
        return out if self.bias is None else out + self.bias


def _zeros_like_rows(x: Tensor, width: int) -> Tensor:
    return Tensor(np.zeros(x.shape[:-1] + (width,), dtype=x.values.dtype))


def _steps(inputs: Tensor) -> list[Tensor]:
    return [inputs[step] for step in range(inputs.shape[0])]


class LSTMLayer(Module):
    """One LSTM layer; gates ordered input, forget, cell, output."""

    def __init__(self, init: Initializer, input_dim: int, hidden_dim: int) -> None:
        """Initialize input and recurrent projections."""
        self.hidden_dim = hidden_dim
        self.input = Linear(init, input_dim, 4 * hidden_dim)
        self.recurrent = Linear(init, hidden_dim, 4 * hidden_dim, bias=False)

    def __call__(self, steps: list[Tensor]) -> list[Tensor]:
        size = self.hidden_dim
        hidden = _zeros_like_rows(steps[0], size)
        cell = hidden
        outputs = []
        for x in steps:
            gates = self.input(x) + self.recurrent(hidden)
            input_gate = sigmoid(gates[..., :size])
            forget_gate = sigmoid(gates[..., size : 2 * size])
            candidate = tanh(gates[..., 2 * size : 3 * size])
            output_gate = sigmoid(gates[..., 3 * size :])
            cell = forget_gate * cell + input_gate * candidate
            hidden = output_gate * tanh(cell)
            outputs.append(hidden)
        return outputs


class LSTMEncoder(Module):
    """Stacked LSTM over time-major input [T, ..., d_in] -> [T, ..., d_h].

    The same weights apply to every row (agent) of a step.
    """

    def __init__(self, init: Initializer, input_dim: int, hidden_dim: int, layers: int = 2) -> None:
        """Initialize the layer stack."""
        if layers < 1:
            raise ConfigError(f"LSTM needs at least one layer, got {layers}")
        self.layers = [
            LSTMLayer(init, input_dim if index == 0 else hidden_dim, hidden_dim)
            for index in range(layers)
        ]

    def __call__(self, inputs: Tensor) -> Tensor:
        if inputs.ndim < 2 or inputs.shape[0] < 1:
            raise ShapeError(f"lstm: expected [T, ..., d] input, got {inputs.shape}")
        steps = _steps(inputs)
        for layer in self.layers:
            steps = layer(steps)
        return stack(steps, axis=0)


class GRUCell(Module):
    """GRU cell: h' = (1 - u) h + u n."""

    def __init__(self, init: Initializer, input_dim: int, hidden_dim: int) -> None:
        """Initialize input and recurrent projections (update, reset, candidate)."""
        self.hidden_dim = hidden_dim
        self.input = Linear(init, input_dim, 3 * hidden_dim)
        self.recurrent = Linear(init, hidden_dim, 3 * hidden_dim)

    def __call__(self, x: Tensor, hidden: Tensor) -> Tensor:
        size = self.hidden_dim
        projected = self.input(x)
        recurrent = self.recurrent(hidden)
        update = sigmoid(projected[..., :size] + recurrent[..., :size])
        reset = sigmoid(projected[..., size : 2 * size] + recurrent[..., size : 2 * size])
        candidate = tanh(projected[..., 2 * size :] + reset * recurrent[..., 2 * size :])
        return (1.0 - update) * hidden + update * candidate


class GRUEncoder(Module):
    """Single-layer GRU over time-major input [T, ..., d_in] -> [T, ..., d_h]."""

    def __init__(self, init: Initializer, input_dim: int, hidden_dim: int) -> None:
        """Initialize the cell."""
        self.cell = GRUCell(init, input_dim, hidden_dim)

    def __call__(self, inputs: Tensor) -> Tensor:
        if inputs.ndim < 2 or inputs.shape[0] < 1:
            raise ShapeError(f"gru: expected [T, ..., d] input, got {inputs.shape}")
        steps = _steps(inputs)
        hidden = _zeros_like_rows(steps[0], self.cell.hidden_dim)
        outputs = []
        for x in steps:
            hidden = self.cell(x, hidden)
            outputs.append(hidden)
        return stack(outputs, axis=0)


def gaussian_kl(mu_q: Tensor, logvar_q: Tensor, mu_p: Tensor, logvar_p: Tensor) -> Tensor:
    """KL(q || p) of diagonal Gaussians, summed over the last axis."""
    ratio = (exp(logvar_q) + (mu_q - mu_p) * (mu_q - mu_p)) * exp(-logvar_p)
    return tensor_sum(logvar_p - logvar_q + ratio - 1.0, axis=-1) * 0.5


@dataclass
class VRNNStep:
    """Output of one VRNN step."""

    features: Tensor
    hidden: Tensor
    kl: Tensor


class GaussianHead(Module):
    """Hidden layer followed by mean and log-variance projections."""

    def __init__(self, init: Initializer, input_dim: int, hidden_dim: int, latent_dim: int) -> None:
        """Initialize the three projections."""
        self.hidden = Linear(init, input_dim, hidden_dim)
        self.mean = Linear(init, hidden_dim, latent_dim)
        self.logvar = Linear(init, hidden_dim, latent_dim)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        hidden = relu(self.hidden(x))
        return self.mean(hidden), self.logvar(hidden)


class VRNNCell(Module):
    """Variational recurrent cell with a Gaussian latent per step."""

    def __init__(self, init: Initializer, input_dim: int, hidden_dim: int, latent_dim: int) -> None:
        """Initialize feature extractors, prior, posterior, decoder and recurrence."""
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.phi_x = Linear(init, input_dim, hidden_dim)
        self.prior = GaussianHead(init, hidden_dim, hidden_dim, latent_dim)
        self.posterior = GaussianHead(init, 2 * hidden_dim, hidden_dim, latent_dim)
        self.phi_z = Linear(init, latent_dim, hidden_dim)
        self.decoder = Linear(init, 2 * hidden_dim, hidden_dim)
        self.recurrence = GRUCell(init, 2 * hidden_dim, hidden_dim)

    def initial_hidden(self, rows: int, dtype=np.float64) -> Tensor:
        """Zero recurrent state for ``rows`` agents."""
        return Tensor(np.zeros((rows, self.hidden_dim), dtype=dtype))

    def step(self, x: Tensor, hidden: Tensor, noise: np.ndarray) -> VRNNStep:
        """Advance one frame; ``noise`` has the latent shape (zeros in eval mode)."""
        if noise.shape != hidden.shape[:-1] + (self.latent_dim,):
            raise ShapeError(
                f"vrnn: noise shape {noise.shape} for hidden {hidden.shape}"
            )
        x_features = relu(self.phi_x(x))
        mu_p, logvar_p = self.prior(hidden)
        mu_q, logvar_q = self.posterior(concat([x_features, hidden], axis=-1))
        latent = gaussian_sample(mu_q, logvar_q, Tensor(noise))
        z_features = relu(self.phi_z(latent))
        features = relu(self.decoder(concat([z_features, hidden], axis=-1)))
        hidden = self.recurrence(concat([x_features, z_features], axis=-1), hidden)
        return VRNNStep(features, hidden, gaussian_kl(mu_q, logvar_q, mu_p, logvar_p))


class AdaptiveGCNLayer(Module):
    """Gated residual graph convolution over all agent pairs.

    z_i' = z_i + sum_j mask_ij * sigmoid(r_ij W_g + b_g) * softplus(r_ij W_h + b_h)
    with r_ij = [z_i, z_j, p_ij].
    """

    def __init__(self, init: Initializer, dim: int, edge_dim: int) -> None:
        """Initialize gate and filter projections."""
        self.dim = dim
        self.edge_dim = edge_dim
        self.gate = Linear(init, 2 * dim + edge_dim, dim)
        self.filter = Linear(init, 2 * dim + edge_dim, dim)

    def __call__(self, z: Tensor, edges: Tensor, mask: np.ndarray) -> Tensor:
        rows = z.shape[0]
        if edges.shape != (rows, rows, self.edge_dim) or mask.shape != (rows, rows):
            raise ShapeError(
                f"gcn: node features {z.shape}, edges {edges.shape}, mask {mask.shape}"
            )
        grid = Tensor(np.zeros((rows, rows, self.dim), dtype=z.values.dtype))
        source = reshape(z, (rows, 1, self.dim)) + grid
        neighbor = reshape(z, (1, rows, self.dim)) + grid
        relation = concat([source, neighbor, edges], axis=-1)
        message = sigmoid(self.gate(relation)) * softplus(self.filter(relation))
        weights = np.asarray(mask, dtype=z.values.dtype)[:, :, None]
        return z + tensor_sum(message * weights, axis=1)


class PlainGCNLayer(Module):
    """Residual ReLU(A_hat Z W + b) on the row-normalized binary adjacency with self loops."""

    def __init__(self, init: Initializer, dim: int) -> None:
        """Initialize the projection."""
        self.dim = dim
        self.linear = Linear(init, dim, dim)

    def __call__(self, z: Tensor, edges: Tensor, mask: np.ndarray) -> Tensor:
        rows = z.shape[0]
        if mask.shape != (rows, rows):
            raise ShapeError(f"plain gcn: node features {z.shape}, mask {mask.shape}")
        adjacency = np.asarray(mask, dtype=z.values.dtype) + np.eye(rows, dtype=z.values.dtype)
        adjacency /= adjacency.sum(axis=1, keepdims=True)
        return z + relu(self.linear(matmul(Tensor(adjacency), z)))


class LinearAttention(Module):
    """Multi-head attention with keys and values projected along the agent axis."""

    def __init__(
        self, init: Initializer, dim: int, heads: int, proj_dim: int, max_agents: int
    ) -> None:
        """Initialize Q/K/V/output projections and the E/F length projections."""
        if proj_dim < 1:
            raise ConfigError(f"proj_dim must be at least 1, got {proj_dim}")
        if heads < 1 or dim % heads:
            raise ConfigError(f"{heads} heads do not divide width {dim}")
        self.dim = dim
        self.heads = heads
        self.max_agents = max_agents
        self.query = Linear(init, dim, dim)
        self.key = Linear(init, dim, dim)
        self.value = Linear(init, dim, dim)
        self.key_projection = init.uniform((proj_dim, max_agents), max_agents)
        self.value_projection = init.uniform((proj_dim, max_agents), max_agents)
        self.output = Linear(init, dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        rows = x.shape[0]
        if rows < 1 or rows > self.max_agents:
            raise ConfigError(
                f"attention: {rows} agents outside 1..{self.max_agents}"
            )
        head_dim = self.dim // self.heads
        scale = 1.0 / math.sqrt(head_dim)
        key_projection = self.key_projection[:, :rows]
        value_projection = self.value_projection[:, :rows]
        queries, keys, values = self.query(x), self.key(x), self.value(x)
        heads = []
        for head in range(self.heads):
            columns = slice(head * head_dim, (head + 1) * head_dim)
            projected_keys = matmul(key_projection, keys[:, columns])
            projected_values = matmul(value_projection, values[:, columns])
            weights = softmax(matmul(queries[:, columns], projected_keys.T) * scale, axis=-1)
            heads.append(matmul(weights, projected_values))
        return self.output(concat(heads, axis=-1))


class ResidualBlock(Module):
    """ReLU(GroupNorm(Linear(x)))."""

    def __init__(self, init: Initializer, in_dim: int, out_dim: int, groups: int) -> None:
        """Initialize the projection and group-norm affine parameters."""
        if groups < 1 or out_dim % groups:
            raise ConfigError(f"{groups} groups do not divide width {out_dim}")
        self.groups = groups
        self.linear = Linear(init, in_dim, out_dim)
        self.gamma = init.ones((out_dim,))
        self.beta = init.zeros((out_dim,))

    def __call__(self, x: Tensor) -> Tensor:
        return relu(group_norm(self.linear(x), self.groups, self.gamma, self.beta, GN_EPSILON))


class ResidualDecoder(Module):
    """Two residual blocks then a projection to a [t_f, 2] trajectory."""

    def __init__(
        self, init: Initializer, in_dim: int, hidden_dim: int, horizon: int, groups: int
    ) -> None:
        """Initialize both blocks and the output projection."""
        self.horizon = horizon
        self.blocks = [
            ResidualBlock(init, in_dim, hidden_dim, groups),
            ResidualBlock(init, hidden_dim, hidden_dim, groups),
        ]
        self.output = Linear(init, hidden_dim, 2 * horizon)

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return reshape(self.output(x), (self.horizon, 2))
