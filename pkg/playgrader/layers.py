"""Parameters, the layers built on the tape, gradient clipping, Adam and checkpoints."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from playgrader.const import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, FORGET_BIAS
from playgrader.exceptions import (
    PlayGraderConfigurationException,
    PlayGraderIOException,
    PlayGraderNumericException,
    PlayGraderParamException,
)
from playgrader.tensor import Embedding, Linear as LinearFn, Tensor, backward, slice_last

_LOGGER = logging.getLogger(__name__)

HEADER_KEY = "__header__"


class Gradients(Dict[str, np.ndarray]):
    """Gradient arrays keyed like the ParameterSet they were computed for."""

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in self.values())))


class ParameterSet:
    """Named leaf tensors of one network plus their Adam moments."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.tensors: Dict[str, Tensor] = {}
        self.first_moments: Dict[str, np.ndarray] = {}
        self.second_moments: Dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise PlayGraderConfigurationException("Parameter %s registered twice.", name)
        tensor = Tensor(np.array(values, dtype=self.dtype), requires_grad=True)
        self.tensors[name] = tensor
        self.first_moments[name] = np.zeros_like(tensor.data)
        self.second_moments[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy_from(self, other: "ParameterSet"):
        """Overwrite values in place with a bit-exact copy of ``other``."""
        for name, tensor in self.tensors.items():
            np.copyto(tensor.data, other.tensors[name].data)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        missing = set(self.tensors) - set(arrays)
        if missing:
            raise PlayGraderConfigurationException("Checkpoint lacks parameters %s.", sorted(missing))
        for name, tensor in self.tensors.items():
            if arrays[name].shape != tensor.shape:
                raise PlayGraderConfigurationException(
                    "Parameter %s has shape %s in checkpoint, expected %s.", name, arrays[name].shape, tensor.shape)
            np.copyto(tensor.data, arrays[name].astype(self.dtype))


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ----- layers -----

def linear_forward(weight: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    return LinearFn.apply(x, weight, bias)


def embed_lookup(table: Tensor, index) -> Tensor:
    indices = np.asarray(index)
    rows = table.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= rows):
        raise PlayGraderParamException("Embedding index %s outside [0, %s).", index, rows)
    return Embedding.apply(table, indices=indices)


class LstmState:
    def __init__(self, hidden: Tensor, cell: Tensor):
        self.hidden = hidden
        self.cell = cell

    @classmethod
    def zeros(cls, size: int, batch: Optional[int] = None, dtype=np.float64) -> "LstmState":
        shape = (size,) if batch is None else (batch, size)
        return cls(Tensor(np.zeros(shape, dtype=dtype)), Tensor(np.zeros(shape, dtype=dtype)))


def lstm_step(weight_ih: Tensor, weight_hh: Tensor, bias: Tensor, x: Tensor,
              state: LstmState) -> Tuple[Tensor, LstmState]:
    """Standard LSTM cell. Gate rows are ordered input, forget, candidate, output."""
    size = weight_hh.shape[1]
    gates = linear_forward(weight_ih, bias, x) + linear_forward(weight_hh, Tensor(np.zeros(4 * size, dtype=bias.dtype)), state.hidden)
    input_gate = slice_last(gates, 0, size).sigmoid()
    forget_gate = slice_last(gates, size, 2 * size).sigmoid()
    candidate = slice_last(gates, 2 * size, 3 * size).tanh()
    output_gate = slice_last(gates, 3 * size, 4 * size).sigmoid()
    cell = forget_gate * state.cell + input_gate * candidate
    hidden = output_gate * cell.tanh()
    if not (np.all(np.isfinite(hidden.data)) and np.all(np.isfinite(cell.data))):
        raise PlayGraderNumericException(
            "LSTM state became non-finite.",
            diagnostics={"max_abs_cell": float(np.nanmax(np.abs(cell.data))),
                         "max_abs_input": float(np.nanmax(np.abs(x.data)))})
    return hidden, LstmState(hidden, cell)


def softmax_cross_entropy(logits: Tensor, target) -> Tuple[Tensor, np.ndarray]:
    """Mean negative log-likelihood of ``target`` class(es) and the softmax probabilities."""
    targets = np.asarray(target)
    classes = logits.shape[-1]
    if np.any(targets >= classes) or np.any(targets < 0):
        raise PlayGraderConfigurationException("Target %s outside %s classes.", target, classes)
    log_probs = logits.log_softmax()
    if logits.ndim == 1:
        picked = log_probs[int(targets)]
    else:
        picked = log_probs[(np.arange(logits.shape[0]), targets)]
    loss = -picked.mean()
    return loss, np.exp(log_probs.data)


class Linear:
    def __init__(self, params: ParameterSet, name: str, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = params.add(f"{name}.weight", _uniform(rng, in_dim, (out_dim, in_dim)))
        self.bias = params.add(f"{name}.bias", np.zeros(out_dim))
        self.in_dim = in_dim

    def __call__(self, x: Tensor) -> Tensor:
        return linear_forward(self.weight, self.bias, x)


class EmbeddingTable:
    def __init__(self, params: ParameterSet, name: str, rows: int, dim: int, rng: np.random.Generator):
        self.table = params.add(f"{name}.table", rng.normal(0.0, 1.0, size=(rows, dim)) / np.sqrt(dim))

    def __call__(self, index) -> Tensor:
        return embed_lookup(self.table, index)


class LSTMCell:
    def __init__(self, params: ParameterSet, name: str, in_dim: int, size: int, rng: np.random.Generator,
                 forget_bias: float = FORGET_BIAS):
        self.size = size
        self.in_dim = in_dim
        self.weight_ih = params.add(f"{name}.weight_ih", _uniform(rng, in_dim, (4 * size, in_dim)))
        self.weight_hh = params.add(f"{name}.weight_hh", _uniform(rng, size, (4 * size, size)))
        bias = np.zeros(4 * size)
        bias[size:2 * size] = forget_bias
        self.bias = params.add(f"{name}.bias", bias)
        self.dtype = params.dtype

    def initial_state(self, batch: Optional[int] = None) -> LstmState:
        return LstmState.zeros(self.size, batch, self.dtype)

    def __call__(self, x: Tensor, state: LstmState) -> Tuple[Tensor, LstmState]:
        if x.shape[-1] != self.in_dim:
            raise PlayGraderConfigurationException("LSTM input has %s features, expected %s.", x.shape[-1], self.in_dim)
        return lstm_step(self.weight_ih, self.weight_hh, self.bias, x, state)


# ----- gradients and optimisation -----

def backprop(loss: Tensor, params: ParameterSet) -> Gradients:
    leaves = backward(loss)
    return Gradients({
        name: leaves.get(id(tensor), np.zeros_like(tensor.data))
        for name, tensor in params.items()
    })


def clip_grad_norm(grads: Gradients, max_norm: float) -> Gradients:
    if max_norm <= 0:
        raise PlayGraderConfigurationException("max_norm must be positive, got %s.", max_norm)
    norm = grads.global_norm()
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return Gradients({name: g * scale for name, g in grads.items()})


def adam_step(params: ParameterSet, grads: Gradients, lr: float):
    """Bias-corrected Adam; with ``lr == 0`` the values are left bit-identical."""
    params.step += 1
    correction1 = 1 - ADAM_BETA1 ** params.step
    correction2 = 1 - ADAM_BETA2 ** params.step
    for name, tensor in params.items():
        grad = grads[name]
        if grad.shape != tensor.shape:
            raise PlayGraderConfigurationException("Gradient %s has shape %s, expected %s.", name, grad.shape, tensor.shape)
        m = params.first_moments[name]
        v = params.second_moments[name]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * grad * grad
        if lr == 0:
            continue
        tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPSILON)


def check_finite(loss: Tensor, what: str):
    if not np.all(np.isfinite(loss.data)):
        raise PlayGraderNumericException("%s loss is not finite.", what, diagnostics={"loss": float(loss.item())})


# ----- checkpoints -----

def save_checkpoint(path, params: ParameterSet, header: dict):
    """One .npz container: little-endian raw values per parameter plus a JSON header."""
    endian = params.dtype.newbyteorder("<")
    header = dict(header, precision=params.dtype.name, adam_step=params.step)
    arrays = {name: array.astype(endian) for name, array in params.arrays().items()}
    arrays[HEADER_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
    except OSError as e:
        raise PlayGraderIOException("Cannot write checkpoint %s: %s", path, e) from e
    _LOGGER.debug("Wrote checkpoint %s with %s parameters", path, len(params))


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    try:
        with np.load(path) as container:
            arrays = {name: container[name] for name in container.files}
    except OSError as e:
        raise PlayGraderIOException("Cannot read checkpoint %s: %s", path, e) from e
    header = json.loads(arrays.pop(HEADER_KEY).tobytes().decode()) if HEADER_KEY in arrays else {}
    return arrays, header
