# src/autodiff.py

"""
Dense float64 tensors with a reverse-mode differentiation tape.

Operations record themselves on the tape that is active in the current
context (``with Tape() as tape:``). Outside of a tape nothing is recorded,
which is how inference and finite-difference evaluations run.
"""

import contextvars
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from src.errors import DimensionError, DomainError, GoldIndexError, NonFiniteError, StateError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
FD_EPSILON = 1e-5

_ACTIVE_TAPE = contextvars.ContextVar("chunkforge_active_tape", default=None)


class Tensor:
    """A dense float64 array that may take part in a differentiation tape."""

    __slots__ = ("values", "requires_grad", "grad", "name")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self):
        if self.values.size != 1:
            raise DomainError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self):
        return self.values

    def __repr__(self):
        label = f" '{self.name}'" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class TapeEntry:
    output: Tensor
    inputs: tuple
    backward: Callable


class IndexedGrad:
    """Gradient that touches only ``index`` of its target (embedding rows, slices)."""

    __slots__ = ("index", "grad")

    def __init__(self, index, grad):
        self.index = index
        self.grad = grad

    def add_to(self, target):
        if isinstance(self.index, slice):
            target[self.index] += self.grad
        else:
            np.add.at(target, self.index, self.grad)


class Tape:
    """Ordered record of primitive applications, replayed backwards by ``backward``."""

    def __init__(self):
        self.entries = []
        self._produced = {}
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.entries)

    def record(self, output, inputs, backward_fn):
        self._produced[id(output)] = len(self.entries)
        self.entries.append(TapeEntry(output, tuple(inputs), backward_fn))

    def produced(self, tensor):
        return id(tensor) in self._produced

    def position(self, tensor):
        return self._produced.get(id(tensor))


class no_tape:
    """Context manager that suspends recording (inference, finite differences)."""

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(None)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        return False


def active_tape():
    return _ACTIVE_TAPE.get()


class ParamStore:
    """Named learnable parameters plus the global SGD step counter."""

    def __init__(self):
        self._params = {}
        self.step = 0

    def add(self, name, values, requires_grad=True):
        if name in self._params:
            raise StateError(f"parameter '{name}' already exists")
        tensor = Tensor(np.array(values, dtype=np.float64), requires_grad=requires_grad, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def num_parameters(self):
        return int(sum(p.size for p in self._params.values()))

    def all_finite(self):
        return all(np.all(np.isfinite(p.values)) for p in self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            if p.requires_grad:
                p.grad = np.zeros_like(p.values)

    def snapshot(self):
        """Copies of every parameter's values, keyed by name."""
        return {name: p.values.copy() for name, p in self._params.items()}

    def restore(self, snapshot):
        for name, values in snapshot.items():
            param = self._params[name]
            if param.values.shape != values.shape:
                raise DimensionError(
                    f"cannot restore '{name}': shape {values.shape} != {param.values.shape}"
                )
            param.values[...] = values


# --- Recording helpers ---

def _tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _apply(values, inputs, backward_fn):
    tape = _ACTIVE_TAPE.get()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=needs_grad)
    if needs_grad:
        tape.record(out, inputs, backward_fn)
    return out


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _stable_sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --- Primitive operations ---

def op_matmul(a, b):
    """Matrix product ``a @ b``; ``b`` may be a vector (matrix-vector product)."""
    a, b = _tensor(a), _tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return _apply(av @ bv, (a, b), backward)


def op_elementwise(kind, *args):
    """Element-wise ``sigmoid``/``tanh`` (one operand) or ``add``/``mul`` (two operands)."""
    args = tuple(_tensor(x) for x in args)
    if kind in ("sigmoid", "tanh"):
        if len(args) != 1:
            raise DomainError(f"{kind} takes one operand, got {len(args)}")
        (x,) = args
        if kind == "sigmoid":
            out = _stable_sigmoid(x.values)
            return _apply(out, args, lambda g: (g * out * (1.0 - out),))
        out = np.tanh(x.values)
        return _apply(out, args, lambda g: (g * (1.0 - out * out),))

    if kind in ("add", "mul"):
        if len(args) != 2:
            raise DomainError(f"{kind} takes two operands, got {len(args)}")
        a, b = args
        _check_same_shape(a, b, kind)
        if kind == "add":
            return _apply(a.values + b.values, args, lambda g: (g, g))
        av, bv = a.values, b.values
        return _apply(av * bv, args, lambda g: (g * bv, g * av))

    raise DomainError(f"unknown element-wise kind '{kind}'")


def sigmoid(x):
    return op_elementwise("sigmoid", x)


def tanh(x):
    return op_elementwise("tanh", x)


def add(a, b):
    return op_elementwise("add", a, b)


def mul(a, b):
    return op_elementwise("mul", a, b)


def op_add_n(terms):
    """Sum of equally shaped tensors."""
    terms = [_tensor(t) for t in terms]
    if not terms:
        raise DomainError("add_n needs at least one term")
    for t in terms[1:]:
        _check_same_shape(terms[0], t, "add_n")
    total = terms[0].values.copy()
    for t in terms[1:]:
        total = total + t.values
    return _apply(total, terms, lambda g: tuple(g for _ in terms))


def op_scale(x, factor):
    x = _tensor(x)
    factor = float(factor)
    return _apply(x.values * factor, (x,), lambda g: (g * factor,))


def op_sum(x):
    x = _tensor(x)
    shape = x.shape
    return _apply(np.sum(x.values), (x,), lambda g: (np.full(shape, float(g)),))


def op_mean(terms):
    """Mean of scalar tensors; an empty list gives a constant zero."""
    if not terms:
        return Tensor(0.0)
    return op_scale(op_add_n(terms), 1.0 / len(terms))


def op_softmax(logits):
    logits = _tensor(logits)
    if logits.ndim != 1:
        raise DimensionError(f"softmax expects a vector, got shape {logits.shape}")
    if logits.size == 0:
        raise DomainError("softmax of an empty vector")
    if not np.all(np.isfinite(logits.values)):
        raise NonFiniteError("softmax of non-finite logits")
    shifted = np.exp(logits.values - np.max(logits.values))
    probs = shifted / np.sum(shifted)

    def backward(g):
        return (probs * (g - np.dot(g, probs)),)

    return _apply(probs, (logits,), backward)


def op_cross_entropy(probs, gold):
    """``-log(probs[gold])`` with the probability clamped at 1e-12."""
    probs = _tensor(probs)
    n = probs.size
    if not 0 <= gold < n:
        raise GoldIndexError(f"gold index {gold} outside [0, {n})")
    p = float(probs.values[gold])
    clamped = max(p, PROB_FLOOR)

    def backward(g):
        grad = np.zeros(n)
        if p > PROB_FLOOR:
            grad[gold] = -float(g) / p
        return (grad,)

    return _apply(np.float64(-np.log(clamped)), (probs,), backward)


def op_average_rows(rows):
    rows = _tensor(rows)
    if rows.ndim != 2:
        raise DimensionError(f"average_rows expects a matrix, got shape {rows.shape}")
    length = rows.shape[0]
    if length == 0:
        raise DomainError("average of zero rows")
    shape = rows.shape
    return _apply(rows.values.mean(axis=0), (rows,), lambda g: (np.broadcast_to(g / length, shape).copy(),))


def op_max_over_time(features):
    """Column-wise max; the gradient routes to the first arg-max row of each column."""
    features = _tensor(features)
    if features.ndim != 2:
        raise DimensionError(f"max_over_time expects a matrix, got shape {features.shape}")
    steps, width = features.shape
    if steps == 0:
        raise DomainError("max over zero time steps")
    winners = np.argmax(features.values, axis=0)
    cols = np.arange(width)

    def backward(g):
        grad = np.zeros((steps, width))
        grad[winners, cols] = g
        return (grad,)

    return _apply(features.values[winners, cols], (features,), backward)


def op_concat(parts):
    parts = [_tensor(p) for p in parts]
    if not parts:
        raise DomainError("concat of zero parts")
    for p in parts:
        if p.ndim != 1:
            raise DimensionError(f"concat expects vectors, got shape {p.shape}")
    bounds = np.cumsum([0] + [p.size for p in parts])

    def backward(g):
        return tuple(g[bounds[k]:bounds[k + 1]] for k in range(len(parts)))

    return _apply(np.concatenate([p.values for p in parts]), parts, backward)


def op_stack(rows):
    """Stack equally sized vectors into a matrix, one row each."""
    rows = [_tensor(r) for r in rows]
    if not rows:
        raise DomainError("stack of zero rows")
    for r in rows:
        if r.ndim != 1 or r.size != rows[0].size:
            raise DimensionError(f"stack expects vectors of width {rows[0].size}, got shape {r.shape}")
    return _apply(np.stack([r.values for r in rows]), rows, lambda g: tuple(g[k] for k in range(len(rows))))


def op_transpose(a):
    a = _tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _apply(a.values.T.copy(), (a,), lambda g: (g.T,))


def op_add_bias(matrix, bias):
    """Add a bias vector to every row of a matrix."""
    matrix, bias = _tensor(matrix), _tensor(bias)
    if matrix.ndim != 2 or bias.ndim != 1 or matrix.shape[1] != bias.shape[0]:
        raise DimensionError(f"add_bias: shapes {matrix.shape} and {bias.shape} do not broadcast")
    return _apply(matrix.values + bias.values, (matrix, bias), lambda g: (g, g.sum(axis=0)))


def op_lookup(table, index):
    """Row ``index`` of a 2-D table."""
    table = _tensor(table)
    if table.ndim != 2 or not 0 <= index < table.shape[0]:
        raise DimensionError(f"lookup of row {index} in table of shape {table.shape}")
    return _apply(table.values[index].copy(), (table,), lambda g: (IndexedGrad(index, g),))


def op_slice_rows(table, start, stop):
    table = _tensor(table)
    if table.ndim != 2 or not 0 <= start < stop <= table.shape[0]:
        raise DimensionError(f"rows [{start}, {stop}) of table with shape {table.shape}")
    window = slice(start, stop)
    return _apply(table.values[window].copy(), (table,), lambda g: (IndexedGrad(window, g),))


def op_windows(rows, window):
    """Unfold a [L x d] matrix into its [(L-window+1) x window*d] sliding windows."""
    rows = _tensor(rows)
    if rows.ndim != 2:
        raise DimensionError(f"windows expects a matrix, got shape {rows.shape}")
    length, width = rows.shape
    if window < 1 or length < window:
        raise DomainError(f"cannot take windows of size {window} over {length} rows")
    count = length - window + 1
    unfolded = np.stack([rows.values[k:k + window].reshape(-1) for k in range(count)])

    def backward(g):
        grad = np.zeros((length, width))
        for k in range(count):
            grad[k:k + window] += g[k].reshape(window, width)
        return (grad,)

    return _apply(unfolded, (rows,), backward)


# --- Backward pass and optimiser ---

def _accumulate(target, grad):
    if isinstance(grad, IndexedGrad):
        grad.add_to(target)
    else:
        target += grad


def backward(loss, tape, store=None):
    """
    Propagate d(loss)/d(.) back through ``tape`` into the grads of leaf tensors.

    Leaf gradients accumulate additively (also across calls) until ``sgd_step``
    or ``ParamStore.zero_grad`` resets them. When ``store`` is given, trainable
    parameters the loss does not reach end up holding zeros.
    """
    if loss.size != 1:
        raise DomainError(f"backward needs a scalar loss, got shape {loss.shape}")
    start = tape.position(loss)
    if start is None:
        raise StateError("loss was not produced on this tape")

    pending = {id(loss): np.ones_like(loss.values)}
    for entry in reversed(tape.entries[:start + 1]):
        g = pending.pop(id(entry.output), None)
        if g is None:
            continue
        for inp, grad in zip(entry.inputs, entry.backward(g)):
            if grad is None or not inp.requires_grad:
                continue
            if tape.produced(inp):
                buf = pending.get(id(inp))
                if buf is None:
                    buf = np.zeros_like(inp.values)
                    pending[id(inp)] = buf
                _accumulate(buf, grad)
            else:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.values)
                _accumulate(inp.grad, grad)

    if store is not None:
        for _, param in store.items():
            if param.requires_grad and param.grad is None:
                param.grad = np.zeros_like(param.values)


def learning_rate(lr0, decay, step):
    return lr0 / (1.0 + decay * step)


def sgd_step(store, lr0, decay):
    """
    One plain SGD update with lr_t = lr0 / (1 + decay * step).

    Returns the learning rate used. Grads are zeroed afterwards and the
    step counter advances once per call.
    """
    if lr0 <= 0:
        raise DomainError(f"initial learning rate must be positive, got {lr0}")
    if decay < 0:
        raise DomainError(f"learning-rate decay must be non-negative, got {decay}")
    trainable = [(name, p) for name, p in store.items() if p.requires_grad]
    missing = [name for name, p in trainable if p.grad is None]
    if missing:
        raise StateError(f"no gradients for {', '.join(missing)}; run backward first")

    lr_t = learning_rate(lr0, decay, store.step)
    for _, param in trainable:
        param.values -= lr_t * param.grad
        param.grad[...] = 0.0
    store.step += 1
    return lr_t


# --- Finite-difference verification ---

def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def gradient_report(f, store, samples=None, seed=0, eps=FD_EPSILON, names=None):
    """
    Compare ``backward`` against central differences, block by block.

    ``f`` builds the scalar loss from the current parameter values and must be
    deterministic. Returns ``{name: max relative error}``; frozen blocks map
    to ``None``.
    """
    rng = np.random.default_rng(seed)
    store.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(loss, tape, store)
    analytic = {name: p.grad.copy() for name, p in store.items() if p.requires_grad}
    store.zero_grad()

    report = {}
    with no_tape():
        for name, param in store.items():
            if names is not None and name not in names:
                continue
            if not param.requires_grad:
                report[name] = None
                continue
            flat = param.values.reshape(-1)
            coords = np.arange(flat.size)
            if samples is not None and samples < flat.size:
                coords = rng.choice(flat.size, size=samples, replace=False)
            worst = 0.0
            for c in coords:
                original = flat[c]
                flat[c] = original + eps
                upper = f().item()
                flat[c] = original - eps
                lower = f().item()
                flat[c] = original
                numeric = (upper - lower) / (2.0 * eps)
                worst = max(worst, relative_error(analytic[name].reshape(-1)[c], numeric))
            report[name] = worst
            logger.debug("gradcheck %s: max relative error %.3e over %d coords", name, worst, len(coords))
    return report


def finite_diff_check(f, store, samples=None, seed=0, eps=FD_EPSILON):
    """Max relative error between analytic and central-difference gradients."""
    report = gradient_report(f, store, samples=samples, seed=seed, eps=eps)
    errors = [err for err in report.values() if err is not None]
    return max(errors, default=0.0)
