"""
The three fully connected networks of the model.

NN_u maps scaled (x1, x2, t) to scaled density, NN_D and NN_G map scaled
density to scaled diffusivity and per-capita growth. Each has three hidden
SiLU layers of equal width and a single output neuron; softplus keeps the
density and diffusivity outputs positive while growth is left linear.

Checkpoint layout (JSON, UTF-8)::

    {
      "format": "rd-binn-mlp/1",
      "role": "u" | "D" | "G",
      "layers": [{"in": int, "out": int, "activation": str}, ...],
      "weights": [[[float, ...], ...], ...],   # one (in, out) matrix per layer
      "biases": [[float, ...], ...]            # one (out,) vector per layer
    }

Floats are written with their shortest round-trip repr, so a save/load
cycle is lossless.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import config
from .autodiff import ACTIVATIONS
from .io import atomic_write_text

logger = logging.getLogger(__name__)

ROLES = ("u", "D", "G")

CHECKPOINT_FORMAT = "rd-binn-mlp/1"

_INPUT_WIDTH = {"u": 3, "D": 1, "G": 1}
_OUTPUT_ACTIVATION = {"u": "softplus", "D": "softplus", "G": "linear"}


@dataclass(frozen=True)
class LayerSpec:
    in_width: int
    out_width: int
    activation: str

    def __post_init__(self):
        if self.in_width < 1 or self.out_width < 1:
            raise ValueError(f"layer widths must be >= 1, got {self.in_width}->{self.out_width}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")


@dataclass(eq=False)
class NetworkParams:
    """Weights and biases of one network, tagged with its role."""

    role: str
    specs: Tuple[LayerSpec, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        self.specs = tuple(self.specs)
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if self.specs[0].in_width != _INPUT_WIDTH[self.role]:
            raise ValueError(f"role {self.role} needs input width {_INPUT_WIDTH[self.role]}")
        if self.specs[-1].out_width != 1 or self.specs[-1].activation != _OUTPUT_ACTIVATION[self.role]:
            raise ValueError(f"role {self.role} needs a single {_OUTPUT_ACTIVATION[self.role]} output")
        for spec, W, b in zip(self.specs, self.weights, self.biases):
            if W.shape != (spec.in_width, spec.out_width) or b.shape != (spec.out_width,):
                raise ValueError(f"parameter shapes {W.shape}, {b.shape} do not match {spec}")

    @property
    def layers(self) -> List[Tuple[np.ndarray, np.ndarray, str]]:
        return [(W, b, s.activation) for W, b, s in zip(self.weights, self.biases, self.specs)]

    @property
    def n_parameters(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def arrays(self) -> List[np.ndarray]:
        """Parameters in W0, b0, W1, b1, ... order."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "NetworkParams":
        arrays = list(arrays)
        return NetworkParams(self.role, self.specs, arrays[0::2], arrays[1::2])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_vector(self, vector: np.ndarray) -> "NetworkParams":
        arrays, offset = [], 0
        for a in self.arrays():
            arrays.append(np.asarray(vector[offset:offset + a.size], dtype=float).reshape(a.shape))
            offset += a.size
        return self.with_arrays(arrays)

    def copy(self) -> "NetworkParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "role": self.role,
            "layers": [{"in": s.in_width, "out": s.out_width, "activation": s.activation}
                       for s in self.specs],
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkParams":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unknown checkpoint format {data.get('format')!r}")
        specs = [LayerSpec(d["in"], d["out"], d["activation"]) for d in data["layers"]]
        return cls(data["role"], tuple(specs), data["weights"], data["biases"])

    def save(self, path: Union[str, Path]) -> None:
        atomic_write_text(path, json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NetworkParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def layer_specs(role: str, hidden_widths: Optional[Sequence[int]] = None) -> Tuple[LayerSpec, ...]:
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")
    if hidden_widths is None:
        hidden_widths = config.hidden_widths_u if role == "u" else config.hidden_widths_rate
    widths = [_INPUT_WIDTH[role], *hidden_widths, 1]
    acts = [config.hidden_activation] * len(hidden_widths) + [_OUTPUT_ACTIVATION[role]]
    return tuple(LayerSpec(a, b, act) for a, b, act in zip(widths[:-1], widths[1:], acts))


def init(role: str, seed: int, hidden_widths: Optional[Sequence[int]] = None,
         initializer: str = config.initializer) -> NetworkParams:
    """
    Fresh network parameters: Glorot-uniform weights, zero biases.

    Args:
        role: 'u', 'D' or 'G'
        seed: RNG seed; equal seeds give identical parameters
        hidden_widths: override of the default (64,64,64) / (4,4,4)
    """
    if initializer != "glorot_uniform":
        raise ValueError(f"unsupported initializer {initializer!r}")
    specs = layer_specs(role, hidden_widths)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for s in specs:
        limit = np.sqrt(6.0 / (s.in_width + s.out_width))
        weights.append(rng.uniform(-limit, limit, size=(s.in_width, s.out_width)))
        biases.append(np.zeros(s.out_width))
    return NetworkParams(role, specs, weights, biases)


def forward(params: NetworkParams, x) -> Union[float, np.ndarray]:
    """
    Evaluate a network.

    Args:
        params: network parameters
        x: one input of the role's width, or an (N, width) batch; rate networks
           also accept a flat vector of N densities

    Returns:
        scalar for a single input, otherwise an (N,) array
    """
    x = np.asarray(x, dtype=float)
    width = params.specs[0].in_width
    single = x.ndim == 0 or (x.ndim == 1 and x.size == width and width > 1)
    h = x.reshape(-1, width)
    for W, b, act in params.layers:
        h = ACTIVATIONS[act](h @ W + b)[0]
    out = h[:, 0]
    return float(out[0]) if single else out
