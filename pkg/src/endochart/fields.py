"""Vector fields, endomorphism fields, Lie brackets, and torsion tensors.

All tensors are computed symbolically.  Tensoriality (checked numerically in
the test suite) means evaluating them on the d^2 coordinate-field pairs
determines them completely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import Box, ScalarExpr, is_zero_on_box

__all__ = [
    "VectorField", "EndoField", "coordinate_field", "zero_field",
    "apply_endo", "endo_power", "lie_bracket", "nijenhuis", "nprime",
    "torsion_S", "prop22_residual", "NonCommutingError", "Prop22Report",
]


class NonCommutingError(ValueError):
    def __init__(self, max_residual: float):
        super().__init__(
            f"endomorphism fields do not commute (max residual {max_residual:.3e})")
        self.max_residual = max_residual


@dataclass(frozen=True)
class VectorField:
    """d expression components; component i multiplies d/dx_(i+1)."""

    components: tuple

    def __post_init__(self):
        for c in self.components:
            if not isinstance(c, ScalarExpr):
                raise TypeError("components must be ScalarExpr")

    @property
    def dim(self) -> int:
        return len(self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(tuple(ex.add(a, b) for a, b in
                                 zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(tuple(ex.sub(a, b) for a, b in
                                 zip(self.components, other.components)))

    def scaled(self, f) -> "VectorField":
        return VectorField(tuple(ex.mul(f, c) for c in self.components))

    def evaluator(self):
        fn = ex.compile_vector(self.components)
        return lambda p: np.array(fn(p))

    def jacobian_exprs(self) -> list:
        d = self.dim
        return [[ex.differentiate(self.components[i], j + 1) for j in range(d)]
                for i in range(d)]

    def jacobian_evaluator(self):
        d = self.dim
        rows = self.jacobian_exprs()
        flat = ex.compile_vector([rows[i][j] for i in range(d) for j in range(d)])
        return lambda p: np.array(flat(p)).reshape(d, d)

    def __call__(self, p) -> np.ndarray:
        return np.array([ex.evaluate(c, p) for c in self.components])


def coordinate_field(d: int, i: int) -> VectorField:
    """The coordinate vector field d/dx_i (1-based) on R^d."""
    comps = [ex.const(0.0)] * d
    comps[i - 1] = ex.const(1.0)
    return VectorField(tuple(comps))


def zero_field(d: int) -> VectorField:
    return VectorField(tuple([ex.const(0.0)] * d))


@dataclass(frozen=True)
class EndoField:
    """d x d matrix of expressions; column j holds the components of A(d/dx_j)."""

    entries: tuple  # tuple of rows, each a tuple of ScalarExpr

    def __post_init__(self):
        d = len(self.entries)
        for row in self.entries:
            if len(row) != d:
                raise ValueError("endomorphism field must be square")

    @property
    def dim(self) -> int:
        return len(self.entries)

    @staticmethod
    def from_constant(M: np.ndarray) -> "EndoField":
        return EndoField(tuple(tuple(ex.const(v) for v in row) for row in M))

    @staticmethod
    def identity(d: int) -> "EndoField":
        return EndoField.from_constant(np.eye(d))

    @staticmethod
    def zero(d: int) -> "EndoField":
        return EndoField.from_constant(np.zeros((d, d)))

    def column(self, j: int) -> VectorField:
        """The image A(d/dx_j), 1-based j."""
        return VectorField(tuple(self.entries[i][j - 1] for i in range(self.dim)))

    def matmul(self, other: "EndoField") -> "EndoField":
        d = self.dim
        rows = []
        for i in range(d):
            row = []
            for j in range(d):
                row.append(ex.add(*[ex.mul(self.entries[i][k], other.entries[k][j])
                                    for k in range(d)]))
            rows.append(tuple(row))
        return EndoField(tuple(rows))

    def add(self, other: "EndoField") -> "EndoField":
        return EndoField(tuple(tuple(ex.add(a, b) for a, b in zip(r1, r2))
                               for r1, r2 in zip(self.entries, other.entries)))

    def scaled(self, c: float) -> "EndoField":
        return EndoField(tuple(tuple(ex.mul(c, e) for e in row)
                               for row in self.entries))

    def shifted(self, lam: float) -> "EndoField":
        """A - lam * Id."""
        rows = []
        for i, row in enumerate(self.entries):
            rows.append(tuple(ex.sub(e, lam) if i == j else e
                              for j, e in enumerate(row)))
        return EndoField(tuple(rows))

    def evaluator(self):
        d = self.dim
        flat = ex.compile_vector([self.entries[i][j]
                                  for i in range(d) for j in range(d)])
        return lambda p: np.array(flat(p)).reshape(d, d)

    def __call__(self, p) -> np.ndarray:
        return np.array([[ex.evaluate(e, p) for e in row] for row in self.entries])

    def entry_scale(self, box: Box, samples: int = 40, seed: int = 2026) -> float:
        """Max |entry| over a deterministic sample set; tolerance scaling."""
        pts = ex.sample_box(box, samples, seed)
        f = self.evaluator()
        return max(float(np.max(np.abs(f(p)))) for p in pts)


def apply_endo(A: EndoField, X: VectorField) -> VectorField:
    """Pointwise matrix-vector product A X."""
    if A.dim != X.dim:
        raise ValueError("dimension mismatch")
    comps = []
    for i in range(A.dim):
        comps.append(ex.add(*[ex.mul(A.entries[i][j], X.components[j])
                              for j in range(A.dim)]))
    return VectorField(tuple(comps))


def endo_power(A: EndoField, p: int) -> EndoField:
    """Pointwise p-th power; p = 0 gives the identity."""
    if p < 0:
        raise ValueError("power must be >= 0")
    out = EndoField.identity(A.dim)
    for _ in range(p):
        out = out.matmul(A)
    return out


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y]^i = sum_j (X^j dY^i/dx_j - Y^j dX^i/dx_j), exactly."""
    if X.dim != Y.dim:
        raise ValueError("dimension mismatch")
    d = X.dim
    comps = []
    for i in range(d):
        terms = []
        for j in range(d):
            terms.append(ex.mul(X.components[j],
                                ex.differentiate(Y.components[i], j + 1)))
            terms.append(ex.negate(ex.mul(Y.components[j],
                                          ex.differentiate(X.components[i], j + 1))))
        comps.append(ex.add(*terms))
    return VectorField(tuple(comps))


def nijenhuis(A: EndoField, X: VectorField, Y: VectorField) -> VectorField:
    """[AX, AY] - A[X, AY] - A[AX, Y] + A^2 [X, Y]."""
    AX = apply_endo(A, X)
    AY = apply_endo(A, Y)
    A2 = endo_power(A, 2)
    return (lie_bracket(AX, AY)
            - apply_endo(A, lie_bracket(X, AY))
            - apply_endo(A, lie_bracket(AX, Y))
            + apply_endo(A2, lie_bracket(X, Y)))


def _nprime_raw(A: EndoField, B: EndoField, X: VectorField,
                Y: VectorField) -> VectorField:
    """[AX, BY] - A[X, BY] - B[AX, Y] + AB[X, Y], no commutation check."""
    AX = apply_endo(A, X)
    BY = apply_endo(B, Y)
    AB = A.matmul(B)
    return (lie_bracket(AX, BY)
            - apply_endo(A, lie_bracket(X, BY))
            - apply_endo(B, lie_bracket(AX, Y))
            + apply_endo(AB, lie_bracket(X, Y)))


def commutator_residual(A: EndoField, B: EndoField, box: Box,
                        samples: int = 60, seed: int = 2026) -> float:
    AB = A.matmul(B)
    BA = B.matmul(A)
    worst = 0.0
    for i in range(A.dim):
        for j in range(A.dim):
            diff = ex.sub(AB.entries[i][j], BA.entries[i][j])
            r = is_zero_on_box(diff, box, samples=samples, tol=np.inf, seed=seed)
            worst = max(worst, r.max_abs)
    return worst


def nprime(A: EndoField, B: EndoField, X: VectorField, Y: VectorField,
           box: Box | None = None, samples: int = 60, seed: int = 2026,
           tol: float | None = None) -> VectorField:
    """The auxiliary torsion of a commuting pair (A, B).

    The pointwise commutation of A and B is a precondition; it is verified
    numerically on `box` when one is supplied.
    """
    if box is not None:
        scale = max(A.entry_scale(box, seed=seed), B.entry_scale(box, seed=seed))
        limit = tol if tol is not None else 1e-9 * (1.0 + scale * scale)
        worst = commutator_residual(A, B, box, samples=samples, seed=seed)
        if worst > limit:
            raise NonCommutingError(worst)
    return _nprime_raw(A, B, X, Y)


def torsion_S(A: EndoField, B: EndoField, X: VectorField,
              Y: VectorField) -> VectorField:
    """S_{A,B} = N'_{A,B} + N'_{B,A}, by direct expansion.

    Well-defined without any commutation assumption, so this bypasses
    nprime's precondition.
    """
    return _nprime_raw(A, B, X, Y) + _nprime_raw(B, A, X, Y)


@dataclass(frozen=True)
class Prop22Report:
    max_residual_i: float
    max_residual_ii: float
    witness_i: tuple
    witness_ii: tuple

    @property
    def max_residual(self) -> float:
        return max(self.max_residual_i, self.max_residual_ii)


def _max_abs_on_points(V: VectorField, pts: np.ndarray) -> tuple[float, tuple]:
    f = V.evaluator()
    worst, witness = 0.0, tuple(pts[0])
    for p in pts:
        v = float(np.max(np.abs(f(p))))
        if v > worst:
            worst, witness = v, tuple(p)
    return worst, witness


def prop22_residual(A: EndoField, p: int, q: int, box: Box,
                    samples: int = 100, seed: int = 2026) -> Prop22Report:
    """Residuals of the two reduction identities for iterated-power torsions.

    (i)  N'_{A, A^q}(X, Y)  = sum_{k=1}^q A^(q-k) N_A(X, A^(k-1) Y)
    (ii) N'_{A^p, A^q}(X, Y) = sum_{k=1}^p A^(p-k) N'_{A, A^q}(X, A^(k-1) Y)

    Both hold for any nilpotent A, vanishing torsion or not; the report is
    the max over coordinate-field pairs and sampled points.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be >= 1")
    d = A.dim
    pts = ex.sample_box(box, samples, seed, include_corners=False)
    powers = [endo_power(A, k) for k in range(max(p, q) + 1)]
    Aq = powers[q]
    Ap = powers[p]

    worst_i, wit_i = 0.0, tuple(box.center)
    worst_ii, wit_ii = 0.0, tuple(box.center)
    for i in range(1, d + 1):
        X = coordinate_field(d, i)
        for j in range(1, d + 1):
            Y = coordinate_field(d, j)
            # identity (i)
            lhs = _nprime_raw(A, Aq, X, Y)
            rhs = zero_field(d)
            for k in range(1, q + 1):
                term = nijenhuis(A, X, apply_endo(powers[k - 1], Y))
                rhs = rhs + apply_endo(powers[q - k], term)
            r, w = _max_abs_on_points(lhs - rhs, pts)
            if r > worst_i:
                worst_i, wit_i = r, w
            # identity (ii)
            lhs = _nprime_raw(Ap, Aq, X, Y)
            rhs = zero_field(d)
            for k in range(1, p + 1):
                term = _nprime_raw(A, Aq, X, apply_endo(powers[k - 1], Y))
                rhs = rhs + apply_endo(powers[p - k], term)
            r, w = _max_abs_on_points(lhs - rhs, pts)
            if r > worst_ii:
                worst_ii, wit_ii = r, w
    return Prop22Report(worst_i, worst_ii, wit_i, wit_ii)
