"""Reverse-mode differentiation over numpy arrays.

Each op returns a new `Tensor` that remembers its parents and a closure mapping
the output gradient to the parents' gradients. `Tensor.backward` walks that
tape in reverse topological order. Leaves that require grad (trainable
`Parameter`s, or inputs marked by the caller) accumulate into `.grad`; frozen
parameters are not recorded at all, but gradients still flow through them to
their inputs.
"""

from __future__ import annotations

import json
import logging
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from core.errors import ConfigurationError, DimensionError, ParseError, TrainingError, UsageError

logger = logging.getLogger(__name__)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
SNAPSHOT_FORMAT = "diffcore-snapshot/1"

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording the tape (per thread)."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor:
    """A float64 array that may take part in a recorded computation."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: tuple = (),
        _backward: Optional[Callable] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    def __repr__(self) -> str:
        flag = " requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf that requires grad."""
        if self.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topological_order(self)
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = grad if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return sub(as_tensor(other), self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise UsageError("division by a tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)


class Parameter(Tensor):
    """A named trainable leaf."""

    __slots__ = ()

    def __init__(self, data, name: str):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)

    @property
    def frozen(self) -> bool:
        return not self.requires_grad

    def freeze(self) -> None:
        self.requires_grad = False
        self.grad = None

    def unfreeze(self) -> None:
        self.requires_grad = True


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor) -> list:
    order: list = []
    visited: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _record(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------
# Elementwise ops
# ----------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _record(out, (x,), lambda g: (g * (1.0 - out * out),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _record(out, (x,), lambda g: (g * out,))


def square(x: Tensor) -> Tensor:
    return _record(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def absolute(x: Tensor) -> Tensor:
    # np.sign(0) == 0: the subgradient at the kink is 0
    return _record(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return _record(np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


def softplus(x: Tensor) -> Tensor:
    return _record(np.logaddexp(0.0, x.data), (x,), lambda g: (g * _sigmoid(x.data),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


# ----------------------------
# Linear algebra and reductions
# ----------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} are incompatible")
    return _record(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight.T + bias, for a single vector or a batch of row vectors."""
    if x.shape[-1] != weight.shape[1]:
        raise ConfigurationError(
            f"input dimension {x.shape[-1]} does not match layer input dimension {weight.shape[1]}"
        )

    def backward(g):
        g2 = g.reshape(-1, weight.shape[0])
        x2 = x.data.reshape(-1, weight.shape[1])
        return ((g2 @ weight.data).reshape(x.shape), g2.T @ x2, g2.sum(axis=0))

    return _record(x.data @ weight.data.T + bias.data, (x, weight, bias), backward)


def tensor_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _record(np.sum(x.data, axis=axis), (x,), backward)


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]
    return tensor_sum(x, axis) * (1.0 / count)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, bounds, axis=axis)),
    )


def columns(x: Tensor, start: int, stop: int) -> Tensor:
    """The last-axis slice [start, stop)."""

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        return (full,)

    return _record(x.data[..., start:stop], (x,), backward)


def l1_rows(x: Tensor) -> Tensor:
    """Per-row 1-norm (sum of absolute values over the last axis)."""
    return tensor_sum(absolute(x), axis=-1)


# ----------------------------
# Gaussian heads and losses
# ----------------------------
class DiagGaussian(NamedTuple):
    """Diagonal Gaussian; log_std already clamped to [LOG_STD_MIN, LOG_STD_MAX]."""

    mean: Tensor
    log_std: Tensor

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def std(self) -> np.ndarray:
        return np.exp(self.log_std.data)


def gaussian_kl(p: DiagGaussian, q: DiagGaussian) -> Tensor:
    """Closed-form KL(p || q) summed over the last axis."""
    if p.mean.shape != q.mean.shape or p.log_std.shape != q.log_std.shape:
        raise UsageError(f"KL between Gaussians of shapes {p.mean.shape} and {q.mean.shape}")
    log_ratio = q.log_std - p.log_std
    variance_ratio = exp(mul(p.log_std - q.log_std, 2.0))
    scaled_gap = square(p.mean - q.mean) * exp(mul(q.log_std, -2.0))
    per_dim = log_ratio + mul(variance_ratio + scaled_gap, 0.5) - 0.5
    return tensor_sum(per_dim, axis=-1)


def reparam_sample(g: DiagGaussian, noise) -> Tensor:
    """mean + noise * exp(log_std); entries with zero noise return the mean bit-exactly."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != g.mean.shape:
        raise UsageError(f"noise shape {noise.shape} does not match mean shape {g.mean.shape}")
    std = np.exp(g.log_std.data)
    data = np.where(noise == 0.0, g.mean.data, g.mean.data + noise * std)
    return _record(data, (g.mean, g.log_std), lambda grad: (grad, grad * noise * std))


def bce_logits(logits: Tensor, label: float) -> Tensor:
    """Mean binary cross-entropy of logits against a constant 0/1 label."""
    z = logits.data
    losses = np.logaddexp(0.0, z) - label * z
    count = z.size
    return _record(
        np.asarray(losses.mean()),
        (logits,),
        lambda g: (g * (_sigmoid(z) - label) / count,),
    )


# ----------------------------
# Networks
# ----------------------------
class Mlp:
    """Fully connected network: tanh on hidden layers, linear output."""

    def __init__(
        self,
        sizes: Sequence[int],
        rng: Optional[np.random.Generator] = None,
        name: str = "mlp",
        zero_init: bool = False,
    ):
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ConfigurationError(f"invalid layer sizes {list(sizes)}")
        if rng is None and not zero_init:
            raise ConfigurationError("a seeded generator is required unless zero_init is set")
        self.name = name
        self.sizes = [int(s) for s in sizes]
        self.layers: list = []
        for index, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if zero_init:
                weight = np.zeros((fan_out, fan_in))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            self.layers.append(
                (
                    Parameter(weight, f"{name}.{index}.weight"),
                    Parameter(np.zeros(fan_out), f"{name}.{index}.bias"),
                )
            )

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def __call__(self, x: Tensor) -> Tensor:
        return mlp_forward(self, x)

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer]

    @property
    def frozen(self) -> bool:
        return all(p.frozen for p in self.parameters())

    def freeze(self) -> None:
        for p in self.parameters():
            p.freeze()

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.unfreeze()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def named_arrays(self) -> list:
        arrays = []
        for index, (weight, bias) in enumerate(self.layers):
            arrays.append((f"{index}.weight", weight.data))
            arrays.append((f"{index}.bias", bias.data))
        return arrays

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, current in self.named_arrays():
            if name not in arrays:
                raise ParseError(f"snapshot of {self.name} lacks array {name}")
            if arrays[name].shape != current.shape:
                raise DimensionError(
                    f"{self.name}.{name}: snapshot shape {arrays[name].shape} != {current.shape}"
                )
            current[...] = arrays[name]

    def state_bytes(self) -> bytes:
        return b"".join(array.tobytes() for _, array in self.named_arrays())


def mlp_forward(params: Mlp, input: Tensor) -> Tensor:
    x = as_tensor(input)
    if x.shape[-1] != params.in_dim:
        raise ConfigurationError(
            f"{params.name}: input dimension {x.shape[-1]} != expected {params.in_dim}"
        )
    last = len(params.layers) - 1
    for index, (weight, bias) in enumerate(params.layers):
        x = linear(x, weight, bias)
        if index < last:
            x = tanh(x)
    return x


class GaussianHead:
    """An `Mlp` whose output splits into a mean and a clamped log-std."""

    def __init__(self, network: Mlp):
        if network.out_dim % 2:
            raise ConfigurationError(f"{network.name}: Gaussian head needs an even output size")
        self.network = network
        self.dim = network.out_dim // 2

    def __call__(self, x: Tensor) -> DiagGaussian:
        out = self.network(x)
        return DiagGaussian(
            mean=columns(out, 0, self.dim),
            log_std=clip(columns(out, self.dim, 2 * self.dim), LOG_STD_MIN, LOG_STD_MAX),
        )


class Standardizer:
    """Fixed affine input normalisation (x - mean) / std."""

    def __init__(self, mean, std, name: str = "norm"):
        self.name = name
        self.mean = np.array(mean, dtype=np.float64)
        self.std = np.array(std, dtype=np.float64)
        if self.mean.shape != self.std.shape or np.any(self.std <= 0):
            raise ConfigurationError(f"{name}: invalid standardizer statistics")

    @classmethod
    def identity(cls, dim: int, name: str = "norm") -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim), name=name)

    @classmethod
    def fit(cls, data: np.ndarray, name: str = "norm", floor: float = 1e-6) -> "Standardizer":
        """Column mean/std of `data`; columns whose std is below `floor` keep unit scale."""
        data = np.asarray(data, dtype=np.float64)
        std = data.std(axis=0)
        return cls(data.mean(axis=0), np.where(std < floor, 1.0, std), name=name)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return (x - self.mean) * (1.0 / self.std)

    def inverse(self, z: Tensor) -> Tensor:
        return z * self.std + self.mean

    def named_arrays(self) -> list:
        return [("mean", self.mean), ("std", self.std)]

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, current in self.named_arrays():
            if name not in arrays or arrays[name].shape != current.shape:
                raise DimensionError(f"{self.name}: snapshot array {name} missing or misshapen")
            current[...] = arrays[name]


# ----------------------------
# Optimisation
# ----------------------------
class AdamState:
    """Moment accumulators keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.first_moment: dict = {}
        self.second_moment: dict = {}


def adam_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    if len(params) != len(grads):
        raise UsageError("adam_step needs one gradient per parameter")
    for param, grad in zip(params, grads):
        if grad.shape != param.shape:
            raise DimensionError(f"{param.name}: gradient shape {grad.shape} != {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise TrainingError(
                f"non-finite gradient for parameter {param.name}",
                diagnostics={"parameter": param.name, "step": state.step},
            )
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for param, grad in zip(params, grads):
        m = state.first_moment.setdefault(param.name, np.zeros_like(param.data))
        v = state.second_moment.setdefault(param.name, np.zeros_like(param.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        param.data -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


class Adam:
    """Adam over a fixed parameter list; frozen or unreached parameters are skipped."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigurationError("optimizer parameters must have unique names")
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        live = [p for p in self.params if not p.frozen and p.grad is not None]
        if live:
            adam_step(live, [p.grad for p in live], self.state)


# ----------------------------
# Gradient checking
# ----------------------------
class GradientCheck(NamedTuple):
    max_relative_error: float
    gradients: dict


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-5,
    floor: float = 1e-8,
) -> GradientCheck:
    """Compare analytic gradients of `fn()` with central differences.

    Frozen parameters are not perturbed; their reported gradient is zero.
    """
    for p in params:
        p.zero_grad()
    fn().backward()
    gradients = {
        p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for p in params
    }
    worst = 0.0
    with no_grad():
        for p in params:
            if p.frozen:
                continue
            flat = p.data.reshape(-1)
            analytic = gradients[p.name].reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                upper = fn().item()
                flat[i] = original - h
                lower = fn().item()
                flat[i] = original
                numeric = (upper - lower) / (2.0 * h)
                scale = max(abs(analytic[i]), abs(numeric), floor)
                worst = max(worst, abs(analytic[i] - numeric) / scale)
    for p in params:
        p.zero_grad()
    return GradientCheck(worst, gradients)


# ----------------------------
# Snapshots
# ----------------------------
def save_snapshot(path, modules: Mapping[str, object]) -> None:
    """Write a JSON header line, then every array as little-endian float64, row-major."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, blobs = [], []
    for module_name in sorted(modules):
        for array_name, array in modules[module_name].named_arrays():
            entries.append({"module": module_name, "array": array_name, "shape": list(array.shape)})
            blobs.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    header = json.dumps({"format": SNAPSHOT_FORMAT, "entries": entries}, sort_keys=True)
    with path.open("wb") as handle:
        handle.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            handle.write(blob)
    logger.debug(f"Wrote snapshot {path} ({len(entries)} arrays)")


def read_snapshot(path) -> dict:
    """module name -> {array name -> ndarray}."""
    path = Path(path)
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ParseError(f"{path}: missing snapshot header", line_number=1)
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: unreadable snapshot header: {e}", line_number=1)
    if header.get("format") != SNAPSHOT_FORMAT:
        raise ParseError(f"{path}: unknown snapshot format {header.get('format')!r}", line_number=1)
    offset = newline + 1
    modules: dict = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise ParseError(f"{path}: truncated data for {entry['module']}.{entry['array']}")
        array = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        modules.setdefault(entry["module"], {})[entry["array"]] = array
        offset = end
    if offset != len(raw):
        raise ParseError(f"{path}: {len(raw) - offset} trailing bytes after the last array")
    return modules


def load_snapshot(path, modules: Mapping[str, object]) -> None:
    """Restore `modules` in place from a snapshot file."""
    stored = read_snapshot(path)
    missing = sorted(set(modules) - set(stored))
    if missing:
        raise ParseError(f"{path}: snapshot lacks modules {missing}")
    for name, module in modules.items():
        module.load_arrays(stored[name])
