"""
Differentiation engine: second-order forward mode nested inside reverse mode.

``Dual2`` carries a value together with first and pure second directional
derivatives along k tracked input axes. ``Tape`` records vectorised operations
whose primal values are either plain arrays or ``Dual2`` bundles and sweeps
them in reverse to obtain parameter gradients, so derivatives of input
derivatives (for the PDE residual) are exact.

Mixed partials are not tracked: the residual only needs u_x1x1 and u_x2x2.
All arithmetic is float64.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


# ---------------------------------------------------------------- activations

def _silu(x):
    s = expit(x)
    sp = s * (1.0 - s)
    a = 1.0 - 2.0 * s
    return (x * s,
            s + x * sp,
            sp * (2.0 + x * a),
            sp * (a * (3.0 + x * a) - 2.0 * x * sp))


def _softplus(x):
    s = expit(x)
    sp = s * (1.0 - s)
    return np.logaddexp(0.0, x), s, sp, sp * (1.0 - 2.0 * s)


def _linear(x):
    zeros = np.zeros_like(x)
    return x, np.ones_like(x), zeros, zeros


# Activation name -> function returning (f, f', f'', f''') evaluated elementwise
ACTIVATIONS: Dict[str, Callable[[np.ndarray], Tuple[np.ndarray, ...]]] = {
    "silu": _silu,
    "softplus": _softplus,
    "linear": _linear,
}


# ---------------------------------------------------------------- forward mode

class Dual2:
    """
    Value with first and pure second derivatives along k directions.

    ``value`` has shape S; ``d1`` and ``d2`` have shape (k,) + S.
    """

    __slots__ = ("value", "d1", "d2")

    def __init__(self, value: ArrayLike, d1: Optional[ArrayLike] = None,
                 d2: Optional[ArrayLike] = None, k: int = 0):
        self.value = np.asarray(value, dtype=float)
        if d1 is None:
            d1 = np.zeros((k,) + self.value.shape)
        if d2 is None:
            d2 = np.zeros_like(np.asarray(d1, dtype=float))
        self.d1 = np.asarray(d1, dtype=float)
        self.d2 = np.asarray(d2, dtype=float)

    @property
    def k(self) -> int:
        return self.d1.shape[0]

    @classmethod
    def variable(cls, value: ArrayLike) -> "Dual2":
        """Scalar or elementwise independent variable along one direction."""
        v = np.asarray(value, dtype=float)
        return cls(v, np.ones((1,) + v.shape), np.zeros((1,) + v.shape))

    @classmethod
    def seed(cls, x: np.ndarray, directions: Sequence[int]) -> "Dual2":
        """Seed an (N, m) input matrix with unit tangents on the given columns."""
        x = np.asarray(x, dtype=float)
        d1 = np.zeros((len(directions),) + x.shape)
        for a, col in enumerate(directions):
            d1[a, :, col] = 1.0
        return cls(x, d1, np.zeros_like(d1))

    def _coerce(self, other) -> "Dual2":
        if isinstance(other, Dual2):
            return other
        other = np.asarray(other, dtype=float)
        zeros = np.zeros((self.k,) + other.shape)
        return Dual2(other, zeros, zeros)

    def __repr__(self):
        return f"Dual2(value={self.value!r}, d1={self.d1!r}, d2={self.d2!r})"

    def __add__(self, other):
        o = self._coerce(other)
        return Dual2(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.value, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        return Dual2(
            self.value * o.value,
            self.d1 * o.value + self.value * o.d1,
            self.d2 * o.value + 2.0 * self.d1 * o.d1 + self.value * o.d2,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * self._coerce(other).reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, p: float):
        v = self.value
        return self.compose(v ** p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def compose(self, f0, f1, f2) -> "Dual2":
        """Chain rule for a univariate f given f, f', f'' at self.value."""
        return Dual2(f0, f1 * self.d1, f2 * self.d1 ** 2 + f1 * self.d2)

    def reciprocal(self):
        v = self.value
        return self.compose(1.0 / v, -1.0 / v ** 2, 2.0 / v ** 3)

    def exp(self):
        e = np.exp(self.value)
        return self.compose(e, e, e)

    def square(self):
        v = self.value
        return self.compose(v * v, 2.0 * v, 2.0 * np.ones_like(v))

    def sqrt(self):
        r = np.sqrt(self.value)
        return self.compose(r, 0.5 / r, -0.25 / (r * self.value))

    def activate(self, name: str) -> "Dual2":
        f0, f1, f2, _ = ACTIVATIONS[name](self.value)
        return self.compose(f0, f1, f2)

    def matmul(self, W: np.ndarray) -> "Dual2":
        return Dual2(self.value @ W, self.d1 @ W, self.d2 @ W)


# ---------------------------------------------------------------- reverse mode

Primal = Union[np.ndarray, Dual2]
Backward = Callable[[Primal], Tuple[Optional[Primal], ...]]


class Var:
    """Handle to a node on a Tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def primal(self) -> Primal:
        return self.tape.primals[self.index]

    @property
    def requires_grad(self) -> bool:
        return self.tape.requires[self.index]


def _zeros_like(p: Primal) -> Primal:
    if isinstance(p, Dual2):
        return Dual2(np.zeros_like(p.value), np.zeros_like(p.d1), np.zeros_like(p.d2))
    return np.zeros_like(p)


class Tape:
    """
    Linear record of operations for one loss evaluation.

    Nodes are appended in evaluation order, so the reverse sweep simply walks
    the list backwards. A tape belongs to one worker.
    """

    def __init__(self):
        self.primals: List[Primal] = []
        self.inputs: List[Tuple[int, ...]] = []
        self.backwards: List[Optional[Backward]] = []
        self.requires: List[bool] = []
        self.ops: List[str] = []

    def __len__(self):
        return len(self.primals)

    def _push(self, op: str, primal: Primal, inputs: Tuple[Var, ...] = (),
              backward: Optional[Backward] = None, requires: Optional[bool] = None) -> Var:
        if requires is None:
            requires = any(v.requires_grad for v in inputs)
        self.primals.append(primal)
        self.inputs.append(tuple(v.index for v in inputs))
        self.backwards.append(backward if requires else None)
        self.requires.append(requires)
        self.ops.append(op)
        return Var(self, len(self.primals) - 1)

    # leaves
    def parameter(self, array: np.ndarray) -> Var:
        return self._push("param", np.asarray(array, dtype=float), requires=True)

    def constant(self, value: Primal) -> Var:
        if not isinstance(value, Dual2):
            value = np.asarray(value, dtype=float)
        return self._push("const", value, requires=False)

    # network layers
    def affine(self, x: Var, W: Var, b: Var) -> Var:
        xv, Wv, bv = x.primal, W.primal, b.primal
        if not isinstance(xv, Dual2):
            xv = Dual2(xv)
        out = Dual2(xv.value @ Wv + bv, xv.d1 @ Wv, xv.d2 @ Wv)

        def backward(g: Dual2):
            gW = (xv.value.T @ g.value
                  + np.einsum("kni,knj->ij", xv.d1, g.d1)
                  + np.einsum("kni,knj->ij", xv.d2, g.d2))
            gb = g.value.sum(axis=0)
            gx = Dual2(g.value @ Wv.T, g.d1 @ Wv.T, g.d2 @ Wv.T) if x.requires_grad else None
            return gx, gW, gb

        return self._push("affine", out, (x, W, b), backward)

    def activation(self, x: Var, name: str) -> Var:
        xv: Dual2 = x.primal
        f0, f1, f2, f3 = ACTIVATIONS[name](xv.value)
        out = Dual2(f0, f1 * xv.d1, f2 * xv.d1 ** 2 + f1 * xv.d2)

        def backward(g: Dual2):
            gv = g.value * f1 + np.sum(
                g.d1 * f2 * xv.d1 + g.d2 * (f3 * xv.d1 ** 2 + f2 * xv.d2), axis=0)
            g1 = g.d1 * f1 + 2.0 * g.d2 * f2 * xv.d1
            g2 = g.d2 * f1
            return (Dual2(gv, g1, g2),)

        return self._push(name, out, (x,), backward)

    # bridges between plain arrays and Dual2 bundles
    def lift(self, x: Var, k: int = 1) -> Var:
        """Treat an array node as the independent variable of a new Dual2 (k is 0 or 1)."""
        v = x.primal
        d1 = np.ones((k,) + v.shape)
        out = Dual2(v, d1, np.zeros_like(d1))
        return self._push("lift", out, (x,), lambda g: (g.value,))

    def component(self, x: Var, part: str, axis: int = 0) -> Var:
        """Extract 'value', or the 'd1'/'d2' slice of one direction."""
        xv: Dual2 = x.primal
        if part == "value":
            out = xv.value
        elif part in ("d1", "d2"):
            out = getattr(xv, part)[axis]
        else:
            raise ValueError(f"unknown Dual2 part {part!r}")

        def backward(g: np.ndarray):
            adj = _zeros_like(xv)
            if part == "value":
                adj.value = g
            else:
                getattr(adj, part)[axis] = g
            return (adj,)

        return self._push(f"{part}[{axis}]", out, (x,), backward)

    # elementwise arithmetic on arrays
    def add(self, a: Var, b: Var) -> Var:
        return self._push("add", a.primal + b.primal, (a, b), lambda g: (g, g))

    def sub(self, a: Var, b: Var) -> Var:
        return self._push("sub", a.primal - b.primal, (a, b), lambda g: (g, -g))

    def mul(self, a: Var, b: Var) -> Var:
        av, bv = a.primal, b.primal
        return self._push("mul", av * bv, (a, b), lambda g: (g * bv, g * av))

    def square(self, a: Var) -> Var:
        av = a.primal
        return self._push("square", av * av, (a,), lambda g: (2.0 * av * g,))

    def mean(self, a: Var) -> Var:
        av = a.primal
        n = av.size
        return self._push("mean", np.asarray(av.mean()), (a,),
                          lambda g: (np.full_like(av, float(g) / n),))

    def combine(self, terms: Sequence[Tuple[float, Var]]) -> Var:
        """Weighted sum of scalar nodes."""
        coefs = [float(c) for c, _ in terms]
        total = np.asarray(sum(c * float(v.primal) for c, (_, v) in zip(coefs, terms)))
        return self._push("combine", total, tuple(v for _, v in terms),
                          lambda g: tuple(np.asarray(c * g) for c in coefs))

    # reverse sweep
    def gradient(self, loss: Var, wrt: Sequence[Var]) -> List[np.ndarray]:
        """
        d(loss)/d(param) for every requested node.

        Args:
            loss: scalar node of this tape
            wrt: parameter nodes; unreachable ones get a zero gradient

        Returns:
            list of arrays shaped like the parameters
        """
        if np.asarray(loss.primal).size != 1:
            raise ValueError("gradient requires a scalar loss node")
        adjoints: Dict[int, Primal] = {loss.index: np.ones_like(np.asarray(loss.primal))}
        for i in range(loss.index, -1, -1):
            g = adjoints.get(i)
            backward = self.backwards[i]
            if g is None or backward is None:
                continue
            for j, gj in zip(self.inputs[i], backward(g)):
                if gj is None or not self.requires[j]:
                    continue
                adjoints[j] = adjoints[j] + gj if j in adjoints else gj
        return [np.asarray(adjoints[v.index]) if v.index in adjoints
                else np.zeros_like(v.primal) for v in wrt]


# ---------------------------------------------------------------- networks on tapes

Layer = Tuple[np.ndarray, np.ndarray, str]


def trace_network(tape: Tape, layer_vars: Sequence[Tuple[Var, Var]],
                  activations: Sequence[str], x: Var) -> Var:
    """Record a fully connected network: affine then activation, per layer."""
    h = x
    for (W, b), act in zip(layer_vars, activations):
        h = tape.affine(h, W, b)
        if act != "linear":
            h = tape.activation(h, act)
    return h


def register(tape: Tape, layers: Sequence[Layer], trainable: bool = True) -> List[Tuple[Var, Var]]:
    make = tape.parameter if trainable else tape.constant
    return [(make(W), make(b)) for W, b, _ in layers]


def eval_dual2(net, x: np.ndarray, directions: Sequence[int]) -> Dual2:
    """
    Evaluate a network with exact first and pure second input derivatives.

    Args:
        net: object exposing ``layers`` as (W, b, activation) triples
        x: inputs of shape (N, in_width)
        directions: input columns to differentiate along

    Returns:
        Dual2 whose value has shape (N, 1) and whose d1/d2 have shape (k, N, 1)
    """
    tape = Tape()
    layers = net.layers
    out = trace_network(tape, register(tape, layers, trainable=False),
                        [act for _, _, act in layers],
                        tape.constant(Dual2.seed(x, directions)))
    return out.primal


def grad(tape: Tape, loss: Var, params: Sequence[Var]) -> List[np.ndarray]:
    """Gradient of a scalar tape node with respect to parameter nodes."""
    return tape.gradient(loss, params)
