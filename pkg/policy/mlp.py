import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh",)
OUTPUT_SQUASHES = ("tanh", "none")


class DimensionError(ValueError):
    """Raised when a vector does not have the length the policy expects."""


@dataclass(frozen=True)
class MlpSpec:
    """
    Architecture of a small feedforward policy.

    Parameters are stored flat, layer-major. For every layer, in order from
    input to output, the weight matrix of shape (fan_out, fan_in) is packed
    row-major, followed by the bias vector of length fan_out.
    """

    input_dim: int
    hidden_dims: Tuple[int, ...] = (16,)
    output_dim: int = 1
    activation: str = "tanh"
    output_squash: str = "tanh"

    def __post_init__(self):
        # Accept lists from config files.
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"input_dim and output_dim must be >= 1, got {self.input_dim}, {self.output_dim}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden_dims must be positive, got {self.hidden_dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unsupported activation: {self.activation}")
        if self.output_squash not in OUTPUT_SQUASHES:
            raise ValueError(f"Unsupported output_squash: {self.output_squash}")

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) for every layer."""
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def total_param_count(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_shapes)


def total_param_count(spec: MlpSpec) -> int:
    return spec.total_param_count


def param_groups(spec: MlpSpec) -> List[Tuple[int, int]]:
    """Half-open index ranges, one per layer, partitioning [0, n)."""
    groups = []
    start = 0
    for fan_in, fan_out in spec.layer_shapes:
        stop = start + (fan_in + 1) * fan_out
        groups.append((start, stop))
        start = stop
    return groups


def unpack(spec: MlpSpec, params: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) into the flat vector, one pair per layer."""
    params = np.asarray(params, dtype=float)
    if params.ndim != 1 or params.shape[0] != spec.total_param_count:
        raise DimensionError(
            f"Expected {spec.total_param_count} parameters, got shape {params.shape}")
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes:
        w = params[offset:offset + fan_in * fan_out].reshape(fan_out, fan_in)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def init_params(spec: MlpSpec, seed: int) -> np.ndarray:
    """Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    # Map any 64-bit (possibly negative) seed onto the unsigned range.
    rng = np.random.default_rng(int(seed) % 2 ** 64)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes:
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def _check_obs(spec: MlpSpec, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (spec.input_dim,):
        raise DimensionError(f"Expected observation of length {spec.input_dim}, got shape {obs.shape}")
    return obs


def _forward(layers, spec: MlpSpec, obs: np.ndarray):
    """Returns the output and the list of layer inputs (activations) for the backward pass."""
    inputs = []
    h = obs
    last = len(layers) - 1
    for idx, (w, b) in enumerate(layers):
        inputs.append(h)
        z = w @ h + b
        if idx < last:
            h = np.tanh(z)
        else:
            h = np.tanh(z) if spec.output_squash == "tanh" else z
    return h, inputs


def mlp_forward(spec: MlpSpec, params: np.ndarray, obs) -> np.ndarray:
    layers = unpack(spec, params)
    out, _ = _forward(layers, spec, _check_obs(spec, obs))
    return out


def mlp_forward_backward(spec: MlpSpec, params: np.ndarray, obs,
                         out_adjoint) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Forward pass plus the reverse-mode derivatives of out_adjoint . output.

    :return: (output, param_grad, obs_grad); param_grad uses the same packing as params
    """
    layers = unpack(spec, params)
    obs = _check_obs(spec, obs)
    out_adjoint = np.asarray(out_adjoint, dtype=float)
    if out_adjoint.shape != (spec.output_dim,):
        raise DimensionError(
            f"Expected output adjoint of length {spec.output_dim}, got shape {out_adjoint.shape}")

    out, inputs = _forward(layers, spec, obs)

    grads: List[np.ndarray] = []
    last = len(layers) - 1
    # Adjoint of the layer output, moving backwards.
    delta = out_adjoint
    for idx in range(last, -1, -1):
        w, _ = layers[idx]
        # Post-activation of layer idx is the input of layer idx+1, or the output.
        post = out if idx == last else inputs[idx + 1]
        if idx < last or spec.output_squash == "tanh":
            dz = delta * (1.0 - post * post)
        else:
            dz = delta
        grads.append(dz)                          # bias
        grads.append(np.outer(dz, inputs[idx]).ravel())  # weights, row-major
        delta = w.T @ dz

    param_grad = np.concatenate(grads[::-1])
    return out, param_grad, delta
