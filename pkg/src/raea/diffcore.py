"""A small tape-based reverse-mode autodiff layer over float64 numpy arrays.

Only the primitives needed by the alignment network are provided.  Operations
are recorded on the tape that is active in the current context (``with
Tape():``); outside a tape, the same functions evaluate forward values only.

Conventions at non-differentiable points: ``relu`` and ``abs`` take derivative
0 at exactly 0, ``leaky_relu`` takes ``slope``.  ``gradient_check`` skips
coordinates where one-sided differences disagree (a kink inside the step).
"""

import contextvars
from dataclasses import dataclass, field

import numpy as np

from . import kernels

_ACTIVE = contextvars.ContextVar("raea_active_tape", default=None)


class ContractError(ValueError):
    """Shape mismatch, non-finite value or tape misuse."""


class Tensor:
    __slots__ = ("value", "requires_grad", "_parents", "_vjp", "_slot", "_op")

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None
        self._slot = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self._op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return linear(self, other)


class Parameter(Tensor):
    __slots__ = ("name", "grad")

    def __init__(self, value, name=""):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        _check_finite(self.value, name or "parameter")
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class Tape:
    """Ordered record of operations; creation order is already topological."""

    def __init__(self):
        self.nodes = []
        self.params = {}
        self.consumed = False
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def _record(self, node):
        if self.consumed:
            raise ContractError("tape already consumed by backward(); open a new Tape")
        node._slot = len(self.nodes)
        self.nodes.append(node)
        for p in node._parents:
            if isinstance(p, Parameter):
                self.params.setdefault(id(p), p)

    def backward(self, loss):
        if self.consumed:
            raise ContractError("backward() called twice on one tape; re-run the forward pass")
        if loss.value.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        for p in self.params.values():
            p.zero_grad()
        if loss._slot is None or loss._slot >= len(self.nodes) or self.nodes[loss._slot] is not loss:
            if isinstance(loss, Parameter):
                loss.grad = np.ones_like(loss.value)
            self._clear()
            return
        grads = {loss._slot: np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.pop(node._slot, None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if isinstance(parent, Parameter):
                    parent.grad += pg
                elif parent._slot in grads:
                    grads[parent._slot] = grads[parent._slot] + pg
                else:
                    grads[parent._slot] = pg
        self._clear()

    def _clear(self):
        for node in self.nodes:
            node._vjp = None
            node._parents = ()
        self.nodes = []
        self.consumed = True


def active_tape():
    return _ACTIVE.get()


def backward(loss):
    """Populate ``.grad`` on every Parameter recorded on the active tape."""
    tape = _ACTIVE.get()
    if tape is None:
        raise ContractError("backward() outside of a Tape context")
    tape.backward(loss)


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise ContractError(f"non-finite values in {what}")


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    t = Tensor(x)
    _check_finite(t.value, "input array")
    return t


def _make(op, value, parents, vjp):
    _check_finite(value, f"output of {op}")
    out = Tensor(value)
    out._op = op
    tape = _ACTIVE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
        tape._record(out)
    return out


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ContractError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- linear algebra ---------------------------------------------------------

def linear(x, W):
    """``x @ W`` for x of shape (n, p) and W of shape (p, q); W may also be a (p,) vector."""
    x, W = as_tensor(x), as_tensor(W)
    if x.value.ndim != 2 or W.value.ndim not in (1, 2) or x.shape[1] != W.shape[0]:
        raise ContractError(f"linear: incompatible shapes {x.shape} @ {W.shape}")
    xv, wv = x.value, W.value

    def vjp(g):
        if wv.ndim == 1:
            return np.outer(g, wv), xv.T @ g
        return g @ wv.T, xv.T @ g

    return _make("linear", xv @ wv, (x, W), vjp)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _make("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _make("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def add_scalar(x, c):
    x = as_tensor(x)
    return _make("add_scalar", x.value + c, (x,), lambda g: (g,))


def scale(x, c):
    x = as_tensor(x)
    return _make("scale", x.value * c, (x,), lambda g: (g * c,))


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ContractError("concat of nothing")
    nd = xs[0].value.ndim
    ax = axis % nd
    for x in xs[1:]:
        if x.value.ndim != nd or any(x.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax):
            raise ContractError(f"concat: incompatible shapes {[t.shape for t in xs]}")
    sizes = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=ax))

    return _make("concat", np.concatenate([x.value for x in xs], axis=ax), tuple(xs), vjp)


def take(x, start, stop):
    """Slice ``x[start:stop]`` along the first axis."""
    x = as_tensor(x)
    n = x.shape[0]

    def vjp(g):
        full = np.zeros((n,) + g.shape[1:])
        full[start:stop] = g
        return (full,)

    return _make("take", x.value[start:stop], (x,), vjp)


def gather(x, index):
    """Rows ``x[index]``; the gradient scatter-adds back."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise ContractError(f"gather: index out of range for {n} rows")
    return _make("gather", x.value[index], (x,),
                 lambda g: (kernels.segment_sum(g, index, n),))


def row_sum(x):
    x = as_tensor(x)
    if x.value.ndim != 2:
        raise ContractError(f"row_sum expects a matrix, got {x.shape}")
    cols = x.shape[1]
    return _make("row_sum", x.value.sum(axis=1), (x,),
                 lambda g: (np.repeat(g[:, None], cols, axis=1),))


def total(x):
    x = as_tensor(x)
    shape = x.shape
    return _make("sum", np.asarray(x.value.sum()), (x,), lambda g: (np.full(shape, float(g)),))


# -- elementwise ------------------------------------------------------------

def relu(x):
    x = as_tensor(x)
    mask = x.value > 0
    return _make("relu", np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    mask = x.value > 0
    d = np.where(mask, 1.0, slope)
    return _make("leaky_relu", x.value * d, (x,), lambda g: (g * d,))


def elu(x, alpha=1.0):
    x = as_tensor(x)
    neg = np.expm1(np.minimum(x.value, 0.0)) * alpha
    mask = x.value > 0
    out = np.where(mask, x.value, neg)
    d = np.where(mask, 1.0, neg + alpha)
    return _make("elu", out, (x,), lambda g: (g * d,))


def absolute(x):
    x = as_tensor(x)
    s = np.sign(x.value)
    return _make("abs", np.abs(x.value), (x,), lambda g: (g * s,))


def square(x):
    x = as_tensor(x)
    v = x.value
    return _make("square", v * v, (x,), lambda g: (2.0 * v * g,))


def sqrt(x):
    x = as_tensor(x)
    if np.any(x.value <= 0):
        raise ContractError("sqrt of a non-positive value")
    out = np.sqrt(x.value)
    return _make("sqrt", out, (x,), lambda g: (0.5 * g / out,))


def l2_normalize_rows(x):
    """Divide each row by its L2 norm; all-zero rows pass through unchanged."""
    x = as_tensor(x)
    if x.value.ndim != 2:
        raise ContractError(f"l2_normalize_rows expects a matrix, got {x.shape}")
    norm = np.sqrt((x.value ** 2).sum(axis=1, keepdims=True))
    denom = np.where(norm > 0, norm, 1.0)
    y = x.value / denom
    nonzero = norm > 0

    def vjp(g):
        proj = np.where(nonzero, (g * y).sum(axis=1, keepdims=True), 0.0)
        return ((g - y * proj) / denom,)

    return _make("l2_normalize_rows", y, (x,), vjp)


# -- segment ops --------------------------------------------------------------

def segment_softmax(scores, segments, n_segments):
    """Softmax of a 1-D score vector within each segment (max-shifted)."""
    scores = as_tensor(scores)
    segments = np.asarray(segments, dtype=np.int64)
    if scores.value.ndim != 1 or segments.shape != scores.shape:
        raise ContractError(f"segment_softmax: scores {scores.shape} vs segments {segments.shape}")
    if segments.size == 0:
        return _make("segment_softmax", np.zeros(0), (scores,), lambda g: (np.zeros(0),))
    mx = kernels.segment_max(scores.value, segments, n_segments)
    e = np.exp(scores.value - mx[segments])
    z = kernels.segment_sum(e, segments, n_segments)
    y = e / z[segments]

    def vjp(g):
        gy = g * y
        return (gy - y * kernels.segment_sum(gy, segments, n_segments)[segments],)

    return _make("segment_softmax", y, (scores,), vjp)


def weighted_segment_sum(weights, values, segments, n_segments):
    """``out[s] = sum_{i: seg[i]=s} w[i] * values[i]``; empty segments give zeros."""
    weights, values = as_tensor(weights), as_tensor(values)
    segments = np.asarray(segments, dtype=np.int64)
    if values.value.ndim != 2 or weights.shape != (values.shape[0],) or segments.shape != weights.shape:
        raise ContractError(
            f"weighted_segment_sum: weights {weights.shape}, values {values.shape}, "
            f"segments {segments.shape}")
    w, v = weights.value, values.value
    out = kernels.segment_sum(w[:, None] * v, segments, n_segments)
    if segments.size == 0:
        out = np.zeros((n_segments, v.shape[1]))

    def vjp(g):
        G = g[segments]
        return (G * v).sum(axis=1), w[:, None] * G

    return _make("weighted_segment_sum", out, (weights, values), vjp)


# -- gradient checking ----------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    n_checked: int
    n_skipped: int
    worst: tuple = None
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.n_checked > 0 and self.max_rel_error <= self.tol


def gradient_check(f, params, eps=1e-5, tol=1e-4, abs_floor=1e-6, kink_tol=1e-3,
                   max_coords=None, rng=None):
    """Compare reverse-mode gradients with central finite differences.

    ``f()`` must build a scalar Tensor from the current parameter values.
    Relative error per coordinate is ``|a - n| / max(|a|, |n|, abs_floor)``.
    Coordinates whose forward and backward one-sided slopes disagree by more
    than ``kink_tol`` (relative) straddle a kink and are skipped.
    ``max_coords`` subsamples coordinates per parameter.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = {id(p): p.grad.copy() for p in params}

    def value():
        return float(f().value)

    base = value()
    worst_err, worst = 0.0, None
    checked = skipped = 0
    per_param = {}
    rng = np.random.default_rng(0) if rng is None else rng
    for p in params:
        flat = p.value.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        p_worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            up = value()
            flat[c] = orig - eps
            down = value()
            flat[c] = orig
            fwd, bwd = (up - base) / eps, (base - down) / eps
            if abs(fwd - bwd) > kink_tol * max(1.0, abs(fwd), abs(bwd)):
                skipped += 1
                continue
            num = (up - down) / (2 * eps)
            ana = analytic[id(p)].reshape(-1)[c]
            err = abs(ana - num) / max(abs(ana), abs(num), abs_floor)
            checked += 1
            p_worst = max(p_worst, err)
            if err > worst_err:
                worst_err, worst = err, (p.name, int(c), float(ana), float(num))
        per_param[p.name] = p_worst
    return GradCheckReport(worst_err, tol, checked, skipped, worst, per_param)
