"""Scalar reverse-mode autodiff with explicit gradient-node accounting.

Every operation appends one node to a :class:`Tape`.  A node requires a
gradient iff it is a parameter or one of its parents requires a gradient;
backward only ever visits such nodes.  That makes the graph size that matters
for backpropagation directly countable from the tape::

    tape = Tape()
    mu, sigma = tape.param(1.0), tape.param(2.0)
    w = mu + sigma * 0.5
    tape.backward(w)        # {0: 1.0, 1: 0.5}
    tape.stats()            # GraphStats(total_nodes=5, grad_nodes=4, ...)

Local derivatives are evaluated during the forward build, so backward is a
single reverse scan that multiplies adjoints by stored partials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, NonFiniteError

CONSTANT = "constant"
PARAMETER = "parameter"
ADD = "add"
SUB = "sub"
MUL = "mul"
NEG = "neg"
RECIPROCAL = "reciprocal"
POW = "integer-power"
LOG = "natural-log"
EXP = "exp"
ABS = "absolute-value"
SUM = "sum-reduce"
DOT = "dot-combine"
RELU = "relu"
SOFTPLUS = "softplus"


@dataclass(frozen=True)
class Node:
    id: int
    op: str
    parents: tuple[int, ...]
    value: float
    requires_grad: bool
    adjoint: float


@dataclass(frozen=True)
class GraphStats:
    total_nodes: int
    grad_nodes: int
    param_nodes: int
    interaction_nodes: int


class Var:
    """Handle to a node on a tape.  Supports the usual arithmetic operators."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", id: int):
        self.tape = tape
        self.id = id

    @property
    def value(self) -> float:
        return self.tape._values[self.id]

    @property
    def requires_grad(self) -> bool:
        return self.tape._rg[self.id]

    @property
    def grad(self) -> float:
        return self.tape.adjoint(self)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Var(id={self.id}, value={self.value!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        return self.tape.mul(self, self.tape.reciprocal(other))

    def __rtruediv__(self, other):
        return self.tape.mul(other, self.tape.reciprocal(self))

    def __neg__(self):
        return self.tape.neg(self)

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("only integer powers are supported on the tape")
        return self.tape.pow_int(self, int(k))


class Tape:
    """Append-only node store.  Single-threaded; use one tape per replication."""

    def __init__(self):
        self._values: list[float] = []
        self._ops: list[str] = []
        self._parents: list[tuple[int, ...]] = []
        self._partials: list[tuple[float, ...]] = []
        self._rg: list[bool] = []
        self._adjoints: list[float] | None = None
        self.param_ids: list[int] = []
        self.last_backward_visits = 0

    def __len__(self):
        return len(self._values)

    # -- construction ------------------------------------------------------

    def _push(self, op, value, parents=(), partials=(), rg=False) -> Var:
        # value - value is nan exactly when value is inf or nan
        if value - value != 0.0:
            raise NonFiniteError(f"non-finite value {value!r} produced by {op}")
        i = len(self._values)
        self._values.append(value)
        self._ops.append(op)
        self._parents.append(parents)
        self._partials.append(partials if rg else ())
        self._rg.append(rg)
        return Var(self, i)

    def _lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValueError("operand belongs to a different tape")
            return x
        return self.constant(x)

    def param(self, value: float) -> Var:
        v = self._push(PARAMETER, float(value), rg=True)
        self.param_ids.append(v.id)
        return v

    def params(self, values: Iterable[float]) -> list[Var]:
        return [self.param(v) for v in values]

    def constant(self, value: float) -> Var:
        return self._push(CONSTANT, float(value))

    def add(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        rg = self._rg[a.id] or self._rg[b.id]
        return self._push(ADD, a.value + b.value, (a.id, b.id), (1.0, 1.0), rg)

    def sub(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        rg = self._rg[a.id] or self._rg[b.id]
        return self._push(SUB, a.value - b.value, (a.id, b.id), (1.0, -1.0), rg)

    def mul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        rg = self._rg[a.id] or self._rg[b.id]
        return self._push(MUL, av * bv, (a.id, b.id), (bv, av), rg)

    def neg(self, a) -> Var:
        a = self._lift(a)
        return self._push(NEG, -a.value, (a.id,), (-1.0,), self._rg[a.id])

    def reciprocal(self, a) -> Var:
        a = self._lift(a)
        v = a.value
        if v == 0.0:
            raise DomainError("reciprocal of zero")
        return self._push(RECIPROCAL, 1.0 / v, (a.id,), (-1.0 / (v * v),), self._rg[a.id])

    def pow_int(self, a, k: int) -> Var:
        a = self._lift(a)
        v = a.value
        if k == 0:
            return self.constant(1.0)
        if k < 0 and v == 0.0:
            raise DomainError("negative power of zero")
        try:
            out = v**k
            d = k * v ** (k - 1)
        except OverflowError as exc:
            raise NonFiniteError(str(exc)) from None
        return self._push(POW, out, (a.id,), (d,), self._rg[a.id])

    def log(self, a) -> Var:
        a = self._lift(a)
        v = a.value
        if not v > 0.0:
            raise DomainError(f"ln of non-positive value {v!r}")
        return self._push(LOG, math.log(v), (a.id,), (1.0 / v,), self._rg[a.id])

    def exp(self, a) -> Var:
        a = self._lift(a)
        try:
            out = math.exp(a.value)
        except OverflowError:
            raise NonFiniteError("exp overflow") from None
        return self._push(EXP, out, (a.id,), (out,), self._rg[a.id])

    def abs(self, a) -> Var:
        a = self._lift(a)
        v = a.value
        s = (v > 0) - (v < 0)
        return self._push(ABS, abs(v), (a.id,), (float(s),), self._rg[a.id])

    def relu(self, a) -> Var:
        a = self._lift(a)
        v = a.value
        return self._push(RELU, v if v > 0 else 0.0, (a.id,), (1.0 if v > 0 else 0.0,), self._rg[a.id])

    def softplus(self, a) -> Var:
        """ln(1 + e^a), evaluated without overflow."""
        a = self._lift(a)
        v = a.value
        out = math.log1p(math.exp(-abs(v))) + max(v, 0.0)
        sig = 1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))
        return self._push(SOFTPLUS, out, (a.id,), (sig,), self._rg[a.id])

    def sum(self, items: Sequence) -> Var:
        """n-ary sum; plain floats are folded into one constant operand."""
        parents = []
        rest = []
        for x in items:
            if isinstance(x, Var):
                parents.append(x.id)
            else:
                rest.append(float(x))
        if rest:
            parents.append(self.constant(math.fsum(rest)).id)
        if not parents:
            return self.constant(0.0)
        values = [self._values[p] for p in parents]
        rg = any(self._rg[p] for p in parents)
        return self._push(SUM, math.fsum(values), tuple(parents), (1.0,) * len(parents), rg)

    def sum_const(self, values) -> Var:
        """Reduce a no-grad vector to a single constant node."""
        return self._push(SUM, float(np.sum(np.asarray(values, dtype=np.float64))))

    def dot(self, n, t: float) -> Var:
        """Interaction node n(theta) * t(xi); t is a sample-only constant."""
        if not isinstance(n, Var) or n.tape is not self:
            n = self._lift(n)
        t = float(t)
        # the constant operand and the product are appended inline (hot path)
        values, rgs = self._values, self._rg
        c = len(values)
        nid = n.id
        nv = values[nid]
        rg = rgs[nid]
        out = nv * t
        if t - t != 0.0 or out - out != 0.0:
            raise NonFiniteError(f"non-finite value produced by {DOT}")
        values.append(t)
        values.append(out)
        self._ops.append(CONSTANT)
        self._ops.append(DOT)
        self._parents.append(())
        self._parents.append((nid, c))
        self._partials.append(())
        self._partials.append((t, nv) if rg else ())
        rgs.append(False)
        rgs.append(rg)
        return Var(self, c + 1)

    # -- backward ----------------------------------------------------------

    def backward(self, root: Var) -> dict[int, float]:
        """Populate adjoints from ``root`` and return {parameter id: gradient}."""
        root = self._lift(root)
        n = len(self._values)
        adj = [0.0] * n
        visits = 0
        if self._rg[root.id]:
            rg = self._rg
            parents = self._parents
            partials = self._partials
            reach = bytearray(n)
            adj[root.id] = 1.0
            reach[root.id] = 1
            for i in range(root.id, -1, -1):
                if not reach[i]:
                    continue
                visits += 1
                a = adj[i]
                for p, d in zip(parents[i], partials[i]):
                    if rg[p]:
                        adj[p] += a * d
                        reach[p] = 1
        self._adjoints = adj
        self.last_backward_visits = visits
        return {pid: adj[pid] for pid in self.param_ids}

    def gradient(self, root: Var, wrt: Sequence[Var]) -> np.ndarray:
        grads = self.backward(root)
        return np.array([grads[v.id] for v in wrt])

    def adjoint(self, v: Var) -> float:
        if self._adjoints is None:
            return 0.0
        return self._adjoints[v.id]

    # -- inspection --------------------------------------------------------

    def node(self, i: int) -> Node:
        adj = self._adjoints[i] if self._adjoints is not None else 0.0
        return Node(i, self._ops[i], self._parents[i], self._values[i], self._rg[i], adj)

    @property
    def nodes(self) -> list[Node]:
        return [self.node(i) for i in range(len(self._values))]

    def stats(self) -> GraphStats:
        rg = self._rg
        ops = self._ops
        grad = inter = 0
        for i in range(len(rg)):
            if rg[i]:
                grad += 1
                if ops[i] == DOT:
                    inter += 1
        return GraphStats(len(rg), grad, len(self.param_ids), inter)

    def count_grad_nodes(self, start: int = 0) -> int:
        """Gradient-requiring nodes with id >= ``start``."""
        return sum(self._rg[start:])

    def dump(self) -> str:
        """Edge-list text, one node per line: ``node_id, op, parents, requires_grad``."""
        lines = []
        for i in range(len(self._values)):
            parents = " ".join(str(p) for p in self._parents[i])
            lines.append(f"{i}, {self._ops[i]}, {parents}, {'true' if self._rg[i] else 'false'}")
        return "\n".join(lines) + ("\n" if lines else "")


def graph_stats(tape: Tape) -> GraphStats:
    return tape.stats()


# Elementwise helpers usable on tape values and on plain floats / arrays, so
# the same formula can build a graph or evaluate an oracle.


def log(x):
    if isinstance(x, Var):
        return x.tape.log(x)
    return np.log(x)


def exp(x):
    if isinstance(x, Var):
        return x.tape.exp(x)
    return np.exp(x)


def absolute(x):
    if isinstance(x, Var):
        return x.tape.abs(x)
    return np.abs(x)


def pow_int(x, k: int):
    if isinstance(x, Var):
        return x.tape.pow_int(x, k)
    return np.power(np.asarray(x, dtype=np.float64), k)


def relu(x):
    if isinstance(x, Var):
        return x.tape.relu(x)
    return np.maximum(x, 0.0)


def softplus(x):
    if isinstance(x, Var):
        return x.tape.softplus(x)
    return np.logaddexp(0.0, x)


def finite_diff_check(
    f: Callable[[list[Var]], Var],
    theta: Sequence[float],
    h: float = 1e-5,
    relative: bool = False,
) -> float:
    """Max discrepancy between central differences and tape gradients of ``f``.

    ``f`` receives parameter handles on a fresh tape and returns a scalar
    handle (or a float when it does not depend on the parameters).
    """
    theta = [float(x) for x in theta]
    tape = Tape()
    xs = tape.params(theta)
    grads = tape.gradient(f(xs), xs)

    def value_at(point):
        t = Tape()
        out = f(t.params(point))
        return out.value if isinstance(out, Var) else float(out)

    worst = 0.0
    for i in range(len(theta)):
        up, down = list(theta), list(theta)
        up[i] += h
        down[i] -= h
        fd = (value_at(up) - value_at(down)) / (2.0 * h)
        err = abs(fd - grads[i])
        if relative:
            err /= max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
