"""Minimal closed-form scalar expression engine.

Expression trees over d real variables with exact symbolic partial
derivatives, fast numeric evaluation, and deterministic sampled zero tests
on boxes.  There is deliberately no general simplifier: only constant
folding and 0/1 absorption happen at construction time.  Deciding whether
an expression vanishes is done numerically (`is_zero_on_box`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScalarExpr", "Const", "Var", "Sum", "Product", "Quotient", "IntPow",
    "Exp", "PosPow", "Box", "ZeroTestResult", "EvaluationError",
    "const", "var", "add", "sub", "mul", "div", "intpow", "exp", "pospow",
    "negate", "differentiate", "evaluate", "substitute", "compile_expr",
    "compile_vector", "max_depth", "sample_box", "is_zero_on_box",
    "kink_arguments",
]

class EvaluationError(ArithmeticError):
    """Raised when evaluation hits a vanishing quotient denominator.

    Carries the offending subtree so callers can report which part of a
    larger expression failed.
    """

    def __init__(self, message: str, subtree: "ScalarExpr"):
        super().__init__(message)
        self.subtree = subtree


class ScalarExpr:
    """Base class for immutable expression nodes."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, k):
        return intpow(self, k)

    def __neg__(self):
        return negate(self)

    def __repr__(self):
        return f"<expr {self}>"


def _coerce(value) -> ScalarExpr:
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot use {value!r} in an expression")


@dataclass(frozen=True, repr=False)
class Const(ScalarExpr):
    value: float

    def __str__(self):
        if self.value == int(self.value) and abs(self.value) < 1e15:
            return str(int(self.value))
        return repr(self.value)


@dataclass(frozen=True, repr=False)
class Var(ScalarExpr):
    index: int  # 1-based variable index

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("variable indices are 1-based")

    def __str__(self):
        return f"x{self.index}"


@dataclass(frozen=True, repr=False)
class Sum(ScalarExpr):
    terms: tuple

    def __str__(self):
        parts = [str(self.terms[0])]
        for t in self.terms[1:]:
            parts.append(f" + {t}")
        return "(" + "".join(parts) + ")"


@dataclass(frozen=True, repr=False)
class Product(ScalarExpr):
    factors: tuple

    def __str__(self):
        return "(" + " * ".join(str(f) for f in self.factors) + ")"


@dataclass(frozen=True, repr=False)
class Quotient(ScalarExpr):
    num: ScalarExpr
    den: ScalarExpr

    def __str__(self):
        return f"({self.num} / {self.den})"


@dataclass(frozen=True, repr=False)
class IntPow(ScalarExpr):
    base: ScalarExpr
    power: int

    def __str__(self):
        return f"({self.base})^{self.power}"


@dataclass(frozen=True, repr=False)
class Exp(ScalarExpr):
    arg: ScalarExpr

    def __str__(self):
        return f"exp({self.arg})"


@dataclass(frozen=True, repr=False)
class PosPow(ScalarExpr):
    """arg^k for arg >= 0, and 0 otherwise; of class C^(k-1) for k >= 1."""

    arg: ScalarExpr
    power: int

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("pospow exponent must be >= 0")

    def __str__(self):
        return f"pospow({self.arg}, {self.power})"


_ZERO = Const(0.0)
_ONE = Const(1.0)


def const(v: float) -> Const:
    return Const(float(v))


def var(i: int) -> Var:
    return Var(i)


def add(*terms) -> ScalarExpr:
    flat: list[ScalarExpr] = []
    c = 0.0
    for t in terms:
        t = _coerce(t)
        if isinstance(t, Const):
            c += t.value
        elif isinstance(t, Sum):
            flat.extend(t.terms)
        else:
            flat.append(t)
    if c != 0.0 or not flat:
        flat.append(Const(c))
    if len(flat) == 1:
        return flat[0]
    return Sum(tuple(flat))


def sub(a, b) -> ScalarExpr:
    return add(a, mul(Const(-1.0), b))


def negate(a) -> ScalarExpr:
    return mul(Const(-1.0), a)


def mul(*factors) -> ScalarExpr:
    flat: list[ScalarExpr] = []
    c = 1.0
    for f in factors:
        f = _coerce(f)
        if isinstance(f, Const):
            c *= f.value
        elif isinstance(f, Product):
            for g in f.factors:
                if isinstance(g, Const):
                    c *= g.value
                else:
                    flat.append(g)
        else:
            flat.append(f)
    if c == 0.0:
        return _ZERO
    if c != 1.0 or not flat:
        flat.insert(0, Const(c))
    if len(flat) == 1:
        return flat[0]
    return Product(tuple(flat))


def div(num, den) -> ScalarExpr:
    num = _coerce(num)
    den = _coerce(den)
    if isinstance(den, Const):
        if den.value == 0.0:
            raise ZeroDivisionError("constant zero denominator")
        if den.value == 1.0:
            return num
        if isinstance(num, Const):
            return Const(num.value / den.value)
    if isinstance(num, Const) and num.value == 0.0:
        return _ZERO
    return Quotient(num, den)


def intpow(base, k: int) -> ScalarExpr:
    base = _coerce(base)
    k = int(k)
    if k == 0:
        return _ONE
    if k == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value ** k)
    return IntPow(base, k)


def exp(arg) -> ScalarExpr:
    arg = _coerce(arg)
    if isinstance(arg, Const):
        return Const(math.exp(arg.value))
    return Exp(arg)


def pospow(arg, k: int) -> ScalarExpr:
    arg = _coerce(arg)
    k = int(k)
    if isinstance(arg, Const):
        return Const(arg.value ** k if arg.value >= 0.0 else 0.0)
    return PosPow(arg, k)


def differentiate(e: ScalarExpr, i: int) -> ScalarExpr:
    """Exact partial derivative of `e` with respect to x_i (1-based)."""
    if isinstance(e, Const):
        return _ZERO
    if isinstance(e, Var):
        return _ONE if e.index == i else _ZERO
    if isinstance(e, Sum):
        return add(*[differentiate(t, i) for t in e.terms])
    if isinstance(e, Product):
        terms = []
        fs = e.factors
        for k in range(len(fs)):
            dk = differentiate(fs[k], i)
            if isinstance(dk, Const) and dk.value == 0.0:
                continue
            terms.append(mul(dk, *fs[:k], *fs[k + 1:]))
        return add(*terms) if terms else _ZERO
    if isinstance(e, Quotient):
        du = differentiate(e.num, i)
        dv = differentiate(e.den, i)
        return div(sub(mul(du, e.den), mul(e.num, dv)), intpow(e.den, 2))
    if isinstance(e, IntPow):
        db = differentiate(e.base, i)
        return mul(Const(float(e.power)), intpow(e.base, e.power - 1), db)
    if isinstance(e, Exp):
        return mul(e, differentiate(e.arg, i))
    if isinstance(e, PosPow):
        # d/dt pospow(t, k) = k * pospow(t, k-1); C^(k-1) at the kink.
        da = differentiate(e.arg, i)
        return mul(Const(float(e.power)), pospow(e.arg, e.power - 1), da)
    raise TypeError(f"unknown node {e!r}")


def evaluate(e: ScalarExpr, point) -> float:
    """Evaluate `e` at a point (sequence of length >= max variable index)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(point[e.index - 1])
    if isinstance(e, Sum):
        return math.fsum(evaluate(t, point) for t in e.terms)
    if isinstance(e, Product):
        r = 1.0
        for f in e.factors:
            r *= evaluate(f, point)
        return r
    if isinstance(e, Quotient):
        den = evaluate(e.den, point)
        if den == 0.0:
            raise EvaluationError("zero denominator", e)
        return evaluate(e.num, point) / den
    if isinstance(e, IntPow):
        b = evaluate(e.base, point)
        if e.power < 0 and b == 0.0:
            raise EvaluationError("zero base with negative power", e)
        return b ** e.power
    if isinstance(e, Exp):
        return math.exp(evaluate(e.arg, point))
    if isinstance(e, PosPow):
        a = evaluate(e.arg, point)
        if a < 0.0:
            return 0.0
        return 1.0 if e.power == 0 else a ** e.power
    raise TypeError(f"unknown node {e!r}")


def substitute(e: ScalarExpr, mapping: dict[int, ScalarExpr]) -> ScalarExpr:
    """Replace variables by expressions (1-based index -> expression)."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.index, e)
    if isinstance(e, Sum):
        return add(*[substitute(t, mapping) for t in e.terms])
    if isinstance(e, Product):
        return mul(*[substitute(f, mapping) for f in e.factors])
    if isinstance(e, Quotient):
        return div(substitute(e.num, mapping), substitute(e.den, mapping))
    if isinstance(e, IntPow):
        return intpow(substitute(e.base, mapping), e.power)
    if isinstance(e, Exp):
        return exp(substitute(e.arg, mapping))
    if isinstance(e, PosPow):
        return pospow(substitute(e.arg, mapping), e.power)
    raise TypeError(f"unknown node {e!r}")


def max_depth(e: ScalarExpr) -> int:
    if isinstance(e, (Const, Var)):
        return 1
    if isinstance(e, Sum):
        return 1 + max(max_depth(t) for t in e.terms)
    if isinstance(e, Product):
        return 1 + max(max_depth(f) for f in e.factors)
    if isinstance(e, Quotient):
        return 1 + max(max_depth(e.num), max_depth(e.den))
    if isinstance(e, (IntPow, Exp, PosPow)):
        inner = e.base if isinstance(e, IntPow) else e.arg
        return 1 + max_depth(inner)
    raise TypeError(f"unknown node {e!r}")


def kink_arguments(e: ScalarExpr) -> list[ScalarExpr]:
    """Arguments of all pospow nodes; their zero sets are the kink loci."""
    out: list[ScalarExpr] = []

    def walk(node):
        if isinstance(node, PosPow):
            out.append(node.arg)
            walk(node.arg)
        elif isinstance(node, Sum):
            for t in node.terms:
                walk(t)
        elif isinstance(node, Product):
            for f in node.factors:
                walk(f)
        elif isinstance(node, Quotient):
            walk(node.num)
            walk(node.den)
        elif isinstance(node, (IntPow, Exp)):
            walk(node.base if isinstance(node, IntPow) else node.arg)

    walk(e)
    return out


# ---------------------------------------------------------------------------
# Compilation to plain Python callables (the hot-loop evaluation path).
# Errors degrade to ZeroDivisionError; callers wanting the offending subtree
# should fall back to `evaluate`.

def _pospow_rt(a: float, k: int) -> float:
    if a < 0.0:
        return 0.0
    return 1.0 if k == 0 else a ** k


def _emit(e: ScalarExpr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{e.index - 1}]"
    if isinstance(e, Sum):
        return "(" + "+".join(_emit(t) for t in e.terms) + ")"
    if isinstance(e, Product):
        return "(" + "*".join(_emit(f) for f in e.factors) + ")"
    if isinstance(e, Quotient):
        return f"({_emit(e.num)}/{_emit(e.den)})"
    if isinstance(e, IntPow):
        return f"({_emit(e.base)})**{e.power}"
    if isinstance(e, Exp):
        return f"_exp({_emit(e.arg)})"
    if isinstance(e, PosPow):
        return f"_pp({_emit(e.arg)},{e.power})"
    raise TypeError(f"unknown node {e!r}")


_NAMESPACE = {"_exp": math.exp, "_pp": _pospow_rt}


def compile_expr(e: ScalarExpr):
    """Compile to `f(x) -> float` with x an indexable point."""
    src = f"lambda x: {_emit(e)}"
    return eval(src, dict(_NAMESPACE))  # noqa: S307 - generated from our own AST


def compile_vector(exprs) -> "callable":
    """Compile a sequence of expressions to `f(x) -> list[float]`."""
    body = ",".join(_emit(e) for e in exprs)
    src = f"lambda x: [{body}]"
    return eval(src, dict(_NAMESPACE))  # noqa: S307


# ---------------------------------------------------------------------------
# Boxes and deterministic sampling.

@dataclass(frozen=True)
class Box:
    """Axis-aligned box, one closed interval per variable."""

    bounds: tuple  # tuple of (lo, hi)

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"degenerate interval [{lo}, {hi}]")

    @staticmethod
    def cube(dim: int, radius: float, center: float = 0.0) -> "Box":
        return Box(tuple((center - radius, center + radius) for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def center(self) -> np.ndarray:
        return np.array([(lo + hi) / 2.0 for lo, hi in self.bounds])

    @property
    def diameter(self) -> float:
        return max(hi - lo for lo, hi in self.bounds)

    def contains(self, p, margin: float = 0.0) -> bool:
        for (lo, hi), v in zip(self.bounds, p):
            half = (hi - lo) / 2.0
            mid = (lo + hi) / 2.0
            if abs(v - mid) > half * (1.0 + margin):
                return False
        return True

    def inflate(self, factor: float) -> "Box":
        out = []
        for lo, hi in self.bounds:
            mid = (lo + hi) / 2.0
            half = (hi - lo) / 2.0 * factor
            out.append((mid - half, mid + half))
        return Box(tuple(out))

    def scale(self, factor: float) -> "Box":
        return self.inflate(factor)

    def corners(self) -> np.ndarray:
        d = self.dim
        out = np.empty((2 ** d, d))
        for m in range(2 ** d):
            for i, (lo, hi) in enumerate(self.bounds):
                out[m, i] = hi if (m >> i) & 1 else lo
        return out


def sample_box(box: Box, samples: int, seed: int,
               include_corners: bool = True,
               include_center: bool = True) -> np.ndarray:
    """Deterministic sample set: fixed-seed uniforms plus corners and center."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box.bounds])
    hi = np.array([b[1] for b in box.bounds])
    pts = [rng.uniform(lo, hi, size=(samples, box.dim))]
    if include_center:
        pts.append(box.center[None, :])
    if include_corners and box.dim <= 10:
        pts.append(box.corners())
    return np.vstack(pts)


@dataclass(frozen=True)
class ZeroTestResult:
    passed: bool
    max_abs: float
    witness: tuple
    tol: float

    def __bool__(self):
        return self.passed


def is_zero_on_box(e: ScalarExpr, box: Box, samples: int = 100,
                   tol: float = 1e-9, seed: int = 2026,
                   kink_margin: float = 1e-4) -> ZeroTestResult:
    """Sampled zero test; reports the max |value| and its argmax point.

    Points within `kink_margin` of a pospow kink hyperplane are skipped,
    because one-sided derivatives of upstream expressions differ there.
    """
    pts = sample_box(box, samples, seed)
    kinks = [compile_expr(a) for a in kink_arguments(e)]
    f = compile_expr(e)
    worst = 0.0
    witness = tuple(box.center)
    for p in pts:
        if kinks and any(abs(k(p)) < kink_margin for k in kinks):
            continue
        try:
            v = abs(f(p))
        except ZeroDivisionError:
            evaluate(e, p)  # raises EvaluationError with the subtree
            raise
        if v > worst:
            worst = v
            witness = tuple(float(x) for x in p)
    return ZeroTestResult(worst <= tol, worst, witness, tol)
