"""Truncated bivariate Taylor ("jet") arithmetic.

A Jet of order K stores the Taylor coefficients c[i,j] = d^{i+j}f / du^i dv^j
/ (i! j!) of a scalar function at a base point, for all i+j <= K, in a dense
graded-lexicographic layout (degree ascending, then i ascending).  The
coefficient array may carry any leading shape, so a whole grid of jets is one
ndarray of shape (..., n_terms) and every operation below is vectorized over
the leading axes.

Arithmetic is exact through degree K for polynomial inputs; analytic
functions (sqrt, exp, log, sin, cos, rational powers, division) are applied
by truncated univariate series around the degree-0 value, which keeps the
result exact through degree K as well.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DomainError, OrderExceeded, OrderMismatch

DEFAULT_ORDER = 6

# Degree-0 magnitude below which division / sqrt / log refuse to proceed.
ANALYTIC_GUARD = 1e-12

# Any coefficient beyond this magnitude aborts evaluation.
COEFF_LIMIT = 1e300


def n_terms(order: int) -> int:
    return (order + 1) * (order + 2) // 2


def term_index(i: int, j: int) -> int:
    """Flat index of the (i,j) monomial in the graded layout."""
    d = i + j
    return d * (d + 1) // 2 + i


@lru_cache(maxsize=None)
def _tables(order: int):
    exps = [(i, d - i) for d in range(order + 1) for i in range(d + 1)]
    m = len(exps)
    index = {e: k for k, e in enumerate(exps)}

    # Multiplication gather tables: all coefficient pairs, grouped so the
    # products for one output monomial are contiguous (for add.reduceat).
    groups: list[list[tuple[int, int]]] = [[] for _ in range(m)]
    for k1, (i1, j1) in enumerate(exps):
        for k2, (i2, j2) in enumerate(exps):
            if i1 + j1 + i2 + j2 <= order:
                groups[index[(i1 + i2, j1 + j2)]].append((k1, k2))
    left, right, offsets = [], [], []
    for g in groups:
        offsets.append(len(left))
        left.extend(p for p, _ in g)
        right.extend(q for _, q in g)

    # d/du and d/dv: source index and factor for each target monomial.
    du_src = np.array([index[(i + 1, j)] for (i, j) in exps if i + j < order], dtype=np.intp)
    du_fac = np.array([i + 1 for (i, j) in exps if i + j < order], dtype=float)
    dv_src = np.array([index[(i, j + 1)] for (i, j) in exps if i + j < order], dtype=np.intp)
    dv_fac = np.array([j + 1 for (i, j) in exps if i + j < order], dtype=float)

    return {
        "exps": exps,
        "index": index,
        "mul_left": np.array(left, dtype=np.intp),
        "mul_right": np.array(right, dtype=np.intp),
        "mul_offsets": np.array(offsets, dtype=np.intp),
        "du": (du_src, du_fac),
        "dv": (dv_src, dv_fac),
    }


class Jet:
    """Truncated Taylor expansion; immutable by convention."""

    __slots__ = ("order", "coeffs")

    def __init__(self, order: int, coeffs: np.ndarray):
        self.order = order
        self.coeffs = coeffs

    # -- constructors --------------------------------------------------

    @staticmethod
    def constant(value, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros(value.shape + (n_terms(order),))
        coeffs[..., 0] = value
        return Jet(order, coeffs)

    @staticmethod
    def seed_u(u0, order: int) -> "Jet":
        j = Jet.constant(u0, order)
        if order >= 1:
            j.coeffs[..., term_index(1, 0)] = 1.0
        return j

    @staticmethod
    def seed_v(v0, order: int) -> "Jet":
        j = Jet.constant(v0, order)
        if order >= 1:
            j.coeffs[..., term_index(0, 1)] = 1.0
        return j

    # -- basic queries ---------------------------------------------------

    @property
    def value(self):
        return self.coeffs[..., 0]

    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    def partial(self, i: int, k: int):
        """d^{i+k} / du^i dv^k at the base point."""
        if i + k > self.order:
            raise OrderExceeded(f"partial of order {i + k} from a jet of order {self.order}")
        return self.coeffs[..., term_index(i, k)] * (math.factorial(i) * math.factorial(k))

    def coefficient(self, i: int, k: int):
        if i + k > self.order:
            raise OrderExceeded(f"coefficient ({i},{k}) from a jet of order {self.order}")
        return self.coeffs[..., term_index(i, k)]

    # -- differentiation ---------------------------------------------------

    def du(self) -> "Jet":
        if self.order == 0:
            raise OrderExceeded("cannot differentiate an order-0 jet")
        src, fac = _tables(self.order)["du"]
        return Jet(self.order - 1, self.coeffs[..., src] * fac)

    def dv(self) -> "Jet":
        if self.order == 0:
            raise OrderExceeded("cannot differentiate an order-0 jet")
        src, fac = _tables(self.order)["dv"]
        return Jet(self.order - 1, self.coeffs[..., src] * fac)

    def truncated(self, order: int) -> "Jet":
        """Copy truncated to a lower order."""
        if order > self.order:
            raise OrderMismatch(f"cannot raise order {self.order} -> {order}")
        if order == self.order:
            return self
        return Jet(order, self.coeffs[..., : n_terms(order)])

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.order != self.order:
                raise OrderMismatch(f"jet orders differ: {self.order} vs {other.order}")
            return other
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is not None:
            return Jet(self.order, self.coeffs + o.coeffs)
        out = np.array(np.broadcast_arrays(self.coeffs, _const_like(other, self))[0])
        out[..., 0] = out[..., 0] + np.asarray(other, dtype=float)
        return Jet(self.order, out)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.order, -self.coeffs)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            scale = np.asarray(other, dtype=float)[..., None]
            return Jet(self.order, self.coeffs * scale)
        t = _tables(self.order)
        prod = self.coeffs[..., t["mul_left"]] * o.coeffs[..., t["mul_right"]]
        out = np.add.reduceat(prod, t["mul_offsets"], axis=-1)
        return Jet(self.order, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) or (isinstance(p, float) and p == round(p)):
            return self._int_pow(int(round(p)))
        return self.powr(float(p))

    def _int_pow(self, n: int) -> "Jet":
        if n < 0:
            return self.reciprocal()._int_pow(-n)
        result = Jet.constant(np.ones(self.shape), self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    # -- analytic functions -------------------------------------------------

    def _series(self, gs) -> "Jet":
        """Sum_m gs[m] * (self - value)^m by Horner; gs[m] arrays broadcastable."""
        e = Jet(self.order, self.coeffs.copy())
        e.coeffs[..., 0] = 0.0
        acc = Jet.constant(np.broadcast_to(gs[-1], e.shape).copy(), self.order)
        for m in range(len(gs) - 2, -1, -1):
            acc = acc * e
            acc.coeffs[..., 0] += gs[m]
        return acc

    def reciprocal(self) -> "Jet":
        b0 = self.value
        _guard_nonzero(b0, "division by a jet with vanishing value")
        inv = 1.0 / b0
        gs = [inv * (-inv) ** m for m in range(self.order + 1)]
        return self._series(gs)

    def sqrt(self) -> "Jet":
        b0 = self.value
        _guard_positive(b0, "sqrt of a non-positive jet value")
        gs = [_binom(0.5, m) * b0 ** (0.5 - m) for m in range(self.order + 1)]
        return self._series(gs)

    def powr(self, r: float) -> "Jet":
        b0 = self.value
        _guard_positive(b0, f"non-integer power {r} of a non-positive jet value")
        gs = [_binom(r, m) * b0 ** (r - m) for m in range(self.order + 1)]
        return self._series(gs)

    def exp(self) -> "Jet":
        e0 = np.exp(self.value)
        if np.any(~np.isfinite(e0)) or np.any(np.abs(e0) > COEFF_LIMIT):
            raise OverflowError("exp overflow in jet evaluation")
        gs = [e0 / math.factorial(m) for m in range(self.order + 1)]
        return self._series(gs)

    def log(self) -> "Jet":
        b0 = self.value
        _guard_positive(b0, "log of a non-positive jet value")
        gs = [np.log(b0)]
        gs += [(-1.0) ** (m + 1) / (m * b0**m) for m in range(1, self.order + 1)]
        return self._series(gs)

    def sin(self) -> "Jet":
        b0 = self.value
        gs = [np.sin(b0 + m * math.pi / 2) / math.factorial(m) for m in range(self.order + 1)]
        return self._series(gs)

    def cos(self) -> "Jet":
        b0 = self.value
        gs = [np.cos(b0 + m * math.pi / 2) / math.factorial(m) for m in range(self.order + 1)]
        return self._series(gs)

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape}, value={self.value!r})"


def _const_like(value, jet: Jet) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    return np.zeros(value.shape + (n_terms(jet.order),))


def _binom(r: float, m: int) -> float:
    out = 1.0
    for k in range(m):
        out *= (r - k) / (k + 1)
    return out


def _guard_nonzero(b0, message):
    if np.any(np.abs(b0) <= ANALYTIC_GUARD):
        raise DomainError(message)


def _guard_positive(b0, message):
    if np.any(b0 <= ANALYTIC_GUARD):
        raise DomainError(message)


def check_overflow(jet: Jet) -> Jet:
    c = jet.coeffs
    if not np.all(np.isfinite(c)):
        raise OverflowError("non-finite jet coefficient")
    if np.any(np.abs(c) > COEFF_LIMIT):
        raise OverflowError("jet coefficient exceeds 1e300")
    return jet


def compose(outer: Jet, inner) -> Jet:
    """Taylor expansion of outer(inner_1, ...) through the common order.

    `inner` is a tuple of one or two jets sharing base point and order; the
    degree-0 values of the inner jets must sit at the base point the outer
    jet was expanded around.
    """
    inner = tuple(inner)
    order = inner[0].order
    for j in inner:
        if j.order != order:
            raise OrderMismatch("inner jets must share one truncation order")
    if outer.order != order:
        raise OrderMismatch(f"outer order {outer.order} != inner order {order}")

    t = _tables(order)
    # Powers of the centered inner jets.
    deltas = []
    for j in inner:
        e = Jet(order, j.coeffs.copy())
        e.coeffs[..., 0] = 0.0
        deltas.append(e)
    if len(deltas) == 1:
        deltas.append(Jet.constant(np.zeros(deltas[0].shape), order))

    xs = [Jet.constant(np.ones(deltas[0].shape), order)]
    ys = [Jet.constant(np.ones(deltas[1].shape), order)]
    for k in range(1, order + 1):
        xs.append(xs[-1] * deltas[0])
        ys.append(ys[-1] * deltas[1])

    out = None
    for k, (i, j) in enumerate(t["exps"]):
        c = outer.coeffs[..., k]
        if np.all(c == 0.0):
            continue
        term = (xs[i] * ys[j]) * c
        out = term if out is None else out + term
    if out is None:
        out = Jet.constant(np.zeros(deltas[0].shape), order)
    return out
