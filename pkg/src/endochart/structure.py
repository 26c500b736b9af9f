"""Pointwise and box-uniform linear-algebraic structure of endomorphism fields.

Rank profiles of powers, nilpotency index and invariant-factor
multiplicities, smooth kernel/image frames from symbolic elimination with a
frozen pivot pattern, involutivity residual tests, and the structured
condition reports for the nilpotent and general (user-supplied factors)
integrability checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import Box, sample_box
from .fields import (EndoField, VectorField, apply_endo, coordinate_field,
                     endo_power, lie_bracket, nijenhuis)

__all__ = [
    "StructureProfile", "Distribution", "RankResult", "rank_profile",
    "invariant_factors", "constancy_check", "kernel_frame", "image_frame",
    "nullspace_frame", "involutivity_residual", "sum_distribution",
    "theorem13_report", "corollary15_report", "Theorem13Report",
    "Corollary15Report", "InvolutivityResult", "ConstancyResult",
    "PivotDegenerationError", "NonNilpotentError", "InconsistentRanksError",
    "AnnihilationError", "poly_endo", "nijenhuis_residual",
]

SVD_RELATIVE_THRESHOLD = 1e-8
ABSOLUTE_FLOOR = 1e-12


class PivotDegenerationError(ValueError):
    """A frozen pivot degenerates somewhere on the box; shrink the box."""


class NonNilpotentError(ValueError):
    """Input is not nilpotent on the box; use the invariant-factor check."""


class InconsistentRanksError(ValueError):
    """Rank sequence yields a negative block count."""


class AnnihilationError(ValueError):
    """Supplied factor polynomials do not annihilate the field."""


# ---------------------------------------------------------------------------
# Rank profiles and invariant factors.

@dataclass(frozen=True)
class RankResult:
    ranks: tuple
    warnings: tuple = ()


def _numeric_rank(M: np.ndarray, tol: float) -> tuple[int, bool]:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] <= ABSOLUTE_FLOOR:
        return 0, False
    threshold = tol * s[0] * M.shape[0]
    rank = int(np.sum(s > threshold))
    shaky = bool(np.any((s > threshold / 10.0) & (s < threshold * 10.0)))
    return rank, shaky


def rank_profile(A: EndoField, p, tol: float = SVD_RELATIVE_THRESHOLD) -> RankResult:
    """Numeric ranks of A^0 .. A^d at the point `p` via SVD thresholding."""
    d = A.dim
    M = np.asarray(A(p), dtype=float)
    ranks = [d]
    warnings = []
    P = np.eye(d)
    for k in range(1, d + 1):
        P = P @ M
        r, shaky = _numeric_rank(P, tol)
        if shaky:
            warnings.append(f"singular value near rank threshold for power {k}")
        ranks.append(r)
        if r == 0:
            break
    return RankResult(tuple(ranks), tuple(warnings))


@dataclass(frozen=True)
class StructureProfile:
    """Rank sequence of powers, nilpotency index, block-size multiplicities."""

    ranks: tuple
    index: int              # nilpotency index n
    multiplicities: tuple   # (d_1, ..., d_n), d_a = number of Jordan blocks of size a

    @property
    def dim(self) -> int:
        return self.ranks[0]


def invariant_factors(ranks) -> StructureProfile:
    """Block-size multiplicities d_a = r_(a-1) - 2 r_a + r_(a+1).

    Requires a valid nilpotent rank sequence (strictly decreasing to 0).
    """
    ranks = tuple(int(r) for r in ranks)
    d = ranks[0]
    if ranks[-1] != 0:
        raise NonNilpotentError(f"rank sequence {ranks} does not reach 0")
    n = next(i for i, r in enumerate(ranks) if r == 0)
    seq = list(ranks[:n + 1]) + [0]  # pad r_(n+1) = 0
    for a in range(1, n + 1):
        if seq[a] >= seq[a - 1]:
            raise InconsistentRanksError(f"rank sequence {ranks} not strictly decreasing")
    mults = []
    for a in range(1, n + 1):
        da = seq[a - 1] - 2 * seq[a] + seq[a + 1]
        if da < 0:
            raise InconsistentRanksError(
                f"negative multiplicity d_{a} = {da} from ranks {ranks}")
        mults.append(da)
    if sum(a * da for a, da in enumerate(mults, start=1)) != d:
        raise InconsistentRanksError(f"multiplicities from {ranks} do not sum to {d}")
    return StructureProfile(tuple(seq[:n + 1]), n, tuple(mults))


@dataclass(frozen=True)
class ConstancyResult:
    constant: bool
    profile: StructureProfile | None
    ranks: tuple
    witness: tuple | None   # (point_a, ranks_a, point_b, ranks_b) on disagreement
    warnings: tuple = ()

    def __bool__(self):
        return self.constant


def constancy_check(A: EndoField, box: Box, samples: int = 100,
                    seed: int = 2026, tol: float = SVD_RELATIVE_THRESHOLD) -> ConstancyResult:
    """True iff the rank profile of powers is identical at all sampled points."""
    pts = sample_box(box, samples, seed)
    f = A.evaluator()
    first = None
    first_pt = None
    warnings: list[str] = []
    for p in pts:
        d = A.dim
        M = f(p)
        ranks = [d]
        P = np.eye(d)
        for k in range(1, d + 1):
            P = P @ M
            r, shaky = _numeric_rank(P, tol)
            if shaky:
                warnings.append(
                    f"singular value near threshold for power {k} at "
                    f"{tuple(round(float(v), 6) for v in p)}")
            ranks.append(r)
            if r == 0:
                break
        ranks = tuple(ranks)
        if first is None:
            first, first_pt = ranks, p
        elif ranks != first:
            return ConstancyResult(False, None, first,
                                   (tuple(float(v) for v in first_pt), first,
                                    tuple(float(v) for v in p), ranks),
                                   tuple(warnings[:5]))
    profile = None
    if first is not None and first[-1] == 0:
        try:
            profile = invariant_factors(first)
        except (NonNilpotentError, InconsistentRanksError):
            profile = None
    return ConstancyResult(True, profile, first, None, tuple(warnings[:5]))


# ---------------------------------------------------------------------------
# Smooth frames from symbolic elimination with frozen pivots.

@dataclass(frozen=True)
class Distribution:
    """A distribution given by a generating smooth frame on a box."""

    frame: tuple            # tuple of VectorField
    rank: int
    provenance: str
    box: Box

    def __post_init__(self):
        if len(self.frame) != self.rank:
            raise ValueError("frame length must equal nominal rank")

    @property
    def dim(self) -> int:
        return self.frame[0].dim if self.frame else self.box.dim

    def matrix_evaluator(self):
        """p -> d x k matrix whose columns are the frame vectors at p."""
        if not self.frame:
            dim = self.box.dim
            return lambda p: np.zeros((dim, 0))
        evs = [F.evaluator() for F in self.frame]
        return lambda p: np.column_stack([e(p) for e in evs])

    def scale_on(self, pts) -> float:
        if not self.frame:
            return 0.0
        m = self.matrix_evaluator()
        return max(float(np.max(np.abs(m(p)))) for p in pts)


def _check_pivot_expr(e: ex.ScalarExpr, box: Box, samples: int, seed: int,
                      floor: float, what: str):
    f = ex.compile_expr(e)
    vals = [f(p) for p in sample_box(box, samples, seed)]
    lo, hi = min(vals), max(vals)
    if min(abs(lo), abs(hi)) < floor or lo * hi <= 0.0:
        raise PivotDegenerationError(
            f"{what} degenerates on the box (range [{lo:.3e}, {hi:.3e}]); "
            "shrink the box")


def nullspace_frame(M: EndoField, box: Box, provenance: str = "user",
                    samples: int = 60, seed: int = 2026,
                    tol: float = SVD_RELATIVE_THRESHOLD,
                    pivot_floor: float = 1e-7) -> Distribution:
    """Smooth frame spanning ker M(x) on the box.

    Symbolic Gauss-Jordan elimination with the pivot pattern chosen at the
    box center; pivots must keep a fixed sign over the box.
    """
    d = M.dim
    center = box.center
    M0 = np.asarray(M(center), dtype=float)
    rank, _ = _numeric_rank(M0, tol)

    rows = [list(r) for r in M.entries]
    work = M0.copy()
    pivots: list[tuple[int, int]] = []  # (row, col)
    used_rows: set[int] = set()
    used_cols: set[int] = set()
    for _ in range(rank):
        best, br, bc = 0.0, -1, -1
        for i in range(d):
            if i in used_rows:
                continue
            for j in range(d):
                if j in used_cols:
                    continue
                if abs(work[i, j]) > best:
                    best, br, bc = abs(work[i, j]), i, j
        if br < 0 or best <= ABSOLUTE_FLOOR:
            break
        pivots.append((br, bc))
        used_rows.add(br)
        used_cols.add(bc)
        _check_pivot_expr(rows[br][bc], box, samples, seed, pivot_floor,
                          f"elimination pivot at row {br + 1}, column {bc + 1}")
        # eliminate column bc from every other row, numerically and symbolically
        for i in range(d):
            if i == br:
                continue
            factor_num = work[i, bc] / work[br, bc]
            factor_sym = ex.div(rows[i][bc], rows[br][bc])
            for j in range(d):
                work[i, j] -= factor_num * work[br, j]
                rows[i][j] = ex.sub(rows[i][j], ex.mul(factor_sym, rows[br][j]))
            work[i, bc] = 0.0
            rows[i][bc] = ex.const(0.0)

    free_cols = [j for j in range(d) if j not in used_cols]
    frame = []
    for fcol in free_cols:
        comps = [ex.const(0.0)] * d
        comps[fcol] = ex.const(1.0)
        for (pr, pc) in pivots:
            comps[pc] = ex.negate(ex.div(rows[pr][fcol], rows[pr][pc]))
        frame.append(VectorField(tuple(comps)))
    return Distribution(tuple(frame), len(frame), provenance, box)


def kernel_frame(A: EndoField, p: int, box: Box, samples: int = 60,
                 seed: int = 2026, tol: float = SVD_RELATIVE_THRESHOLD) -> Distribution:
    """Smooth frame spanning ker A^p on the box."""
    return nullspace_frame(endo_power(A, p), box, provenance=f"ker A^{p}",
                           samples=samples, seed=seed, tol=tol)


def _frame_full_rank_check(dist: Distribution, samples: int, seed: int,
                           tol: float):
    if not dist.frame:
        return
    m = dist.matrix_evaluator()
    for p in sample_box(dist.box, samples, seed):
        cols = m(p)
        s = np.linalg.svd(cols, compute_uv=False)
        if s[-1] <= tol * max(s[0], 1.0) * dist.dim:
            raise PivotDegenerationError(
                f"frame ({dist.provenance}) loses rank at "
            f"{tuple(round(float(v), 6) for v in p)}; "
                "shrink the box")


def image_frame(A: EndoField, p: int, box: Box, samples: int = 60,
                seed: int = 2026, tol: float = SVD_RELATIVE_THRESHOLD) -> Distribution:
    """Frame of rank(A^p) columns of A^p, selected by pivoting at the box center."""
    d = A.dim
    Ap = endo_power(A, p)
    M0 = np.asarray(Ap(box.center), dtype=float)
    rank, _ = _numeric_rank(M0, tol)
    # greedy column selection at the center (modified Gram-Schmidt)
    residual = M0.copy()
    chosen: list[int] = []
    for _ in range(rank):
        norms = np.linalg.norm(residual, axis=0)
        for c in chosen:
            norms[c] = -1.0
        j = int(np.argmax(norms))
        chosen.append(j)
        q = residual[:, j] / max(norms[j], ABSOLUTE_FLOOR)
        residual -= np.outer(q, q @ residual)
    chosen.sort()
    frame = tuple(Ap.column(j + 1) for j in chosen)
    dist = Distribution(frame, len(frame), f"Im A^{p}", box)
    _frame_full_rank_check(dist, samples, seed, tol)
    return dist


def sum_distribution(D1: Distribution, D2: Distribution,
                     samples: int = 60, seed: int = 2026,
                     tol: float = SVD_RELATIVE_THRESHOLD) -> Distribution:
    """Concatenated frame reduced to full rank by pivoting at the box center."""
    if D1.box != D2.box:
        raise ValueError("distributions must share a box")
    box = D1.box
    fields = list(D1.frame) + list(D2.frame)
    if not fields:
        return Distribution((), 0, f"{D1.provenance} + {D2.provenance}", box)
    cols = np.column_stack([F(box.center) for F in fields])
    rank, _ = _numeric_rank(cols, tol)
    residual = cols.copy()
    chosen: list[int] = []
    for _ in range(rank):
        norms = np.linalg.norm(residual, axis=0)
        for c in chosen:
            norms[c] = -1.0
        j = int(np.argmax(norms))
        chosen.append(j)
        q = residual[:, j] / max(norms[j], ABSOLUTE_FLOOR)
        residual -= np.outer(q, q @ residual)
    chosen.sort()
    dist = Distribution(tuple(fields[j] for j in chosen), rank,
                        f"{D1.provenance} + {D2.provenance}", box)
    _frame_full_rank_check(dist, samples, seed, tol)
    return dist


# ---------------------------------------------------------------------------
# Involutivity.

@dataclass(frozen=True)
class InvolutivityResult:
    involutive: bool
    max_residual: float
    threshold: float
    frame_scale: float
    witness_point: tuple | None
    witness_pair: tuple | None

    def __bool__(self):
        return self.involutive


def involutivity_residual(D: Distribution, box: Box, samples: int = 100,
                          seed: int = 2026, tol: float = 1e-8) -> InvolutivityResult:
    """Least-squares residual of frame brackets against the frame span.

    A distribution is involutive iff any generating frame is closed under
    brackets modulo the frame, which is what this measures.
    """
    k = len(D.frame)
    pts = sample_box(box, samples, seed)
    scale = D.scale_on(pts)
    if k <= 1:
        return InvolutivityResult(True, 0.0, tol * (1.0 + scale), scale, None, None)
    mat = D.matrix_evaluator()
    worst, w_pt, w_pair = 0.0, None, None
    for i in range(k):
        for j in range(i + 1, k):
            b = lie_bracket(D.frame[i], D.frame[j]).evaluator()
            for p in pts:
                Fr = mat(p)
                v = b(p)
                c, *_ = np.linalg.lstsq(Fr, v, rcond=None)
                r = float(np.linalg.norm(v - Fr @ c))
                if r > worst:
                    worst, w_pt, w_pair = r, tuple(float(v) for v in p), (i, j)
    threshold = tol * (1.0 + scale)
    return InvolutivityResult(worst <= threshold, worst, threshold, scale,
                              w_pt, w_pair)


# ---------------------------------------------------------------------------
# Torsion nullity residual (sampled, over coordinate pairs).

@dataclass(frozen=True)
class TensorResidual:
    passed: bool
    max_residual: float
    tol: float
    witness_point: tuple | None
    witness_pair: tuple | None

    def __bool__(self):
        return self.passed


def nijenhuis_residual(A: EndoField, box: Box, samples: int = 100,
                       seed: int = 2026, tol: float | None = None) -> TensorResidual:
    """Max sampled norm of the torsion tensor over coordinate-field pairs."""
    d = A.dim
    if tol is None:
        tol = 1e-9 * (1.0 + A.entry_scale(box, seed=seed))
    pts = sample_box(box, samples, seed)
    worst, w_pt, w_pair = 0.0, None, None
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            N = nijenhuis(A, coordinate_field(d, i), coordinate_field(d, j))
            kinks = [ex.compile_expr(a) for c in N.components
                     for a in ex.kink_arguments(c)]
            f = N.evaluator()
            for p in pts:
                if kinks and any(abs(k(p)) < 1e-4 for k in kinks):
                    continue
                v = float(np.max(np.abs(f(p))))
                if v > worst:
                    worst, w_pt, w_pair = v, tuple(float(v) for v in p), (i, j)
    return TensorResidual(worst <= tol, worst, tol, w_pt, w_pair)


# ---------------------------------------------------------------------------
# Condition reports.

@dataclass(frozen=True)
class Theorem13Report:
    profile: StructureProfile | None
    constancy: ConstancyResult
    torsion: TensorResidual
    kernel_involutivity: tuple   # tuples (p, InvolutivityResult)
    integrable: bool

    def condition_flags(self) -> tuple[bool, bool, bool]:
        return (self.constancy.constant and self.profile is not None,
                self.torsion.passed,
                all(bool(r) for _, r in self.kernel_involutivity))


def theorem13_report(A: EndoField, box: Box, samples: int = 100,
                     seed: int = 2026, tol: float | None = None,
                     involutivity_tol: float = 1e-8) -> Theorem13Report:
    """Verdicts for the three integrability conditions of a nilpotent field."""
    ranks = rank_profile(A, box.center)
    if ranks.ranks[-1] != 0:
        raise NonNilpotentError(
            "field is not nilpotent at the box center; supply its invariant "
            "factors and run the general check instead")
    constancy = constancy_check(A, box, samples=samples, seed=seed)
    profile = constancy.profile
    torsion = nijenhuis_residual(A, box, samples=samples, seed=seed, tol=tol)
    kernel_inv = []
    if profile is not None:
        for p in range(1, profile.index):
            D = kernel_frame(A, p, box, seed=seed)
            res = involutivity_residual(D, box, samples=samples, seed=seed,
                                        tol=involutivity_tol)
            kernel_inv.append((p, res))
    ok = (constancy.constant and profile is not None and torsion.passed
          and all(bool(r) for _, r in kernel_inv))
    return Theorem13Report(profile, constancy, torsion, tuple(kernel_inv), ok)


def poly_endo(A: EndoField, coeffs) -> EndoField:
    """P(A) for P given by ascending coefficients (c_0, c_1, ...)."""
    out = EndoField.zero(A.dim)
    for c in reversed(list(coeffs)):
        out = out.matmul(A).add(EndoField.identity(A.dim).scaled(float(c)))
    return out


@dataclass(frozen=True)
class Corollary15Report:
    factor_ranks: tuple          # tuples (coeffs, ranks, constant: bool)
    torsion: TensorResidual
    factor_involutivity: tuple   # tuples (coeffs, InvolutivityResult)
    integrable_conditions: bool


def corollary15_report(A: EndoField, factors, box: Box, samples: int = 100,
                       seed: int = 2026, tol: float | None = None,
                       involutivity_tol: float = 1e-8) -> Corollary15Report:
    """Condition verdicts for a general field with user-supplied invariant factors."""
    factors = [tuple(float(c) for c in f) for f in factors]
    if not factors:
        raise ValueError("at least one invariant factor is required")
    # product of all P(A) must annihilate A's tangent action
    prod = EndoField.identity(A.dim)
    for coeffs in factors:
        prod = prod.matmul(poly_endo(A, coeffs))
    scale = max(A.entry_scale(box, seed=seed), 1.0)
    worst = 0.0
    f = prod.evaluator()
    for p in sample_box(box, samples, seed):
        worst = max(worst, float(np.max(np.abs(f(p)))))
    if worst > 1e-8 * (1.0 + scale ** A.dim):
        raise AnnihilationError(
            f"product of supplied factors has residual {worst:.3e} on the box")

    factor_ranks = []
    factor_inv = []
    pts = sample_box(box, samples, seed)
    for coeffs in factors:
        PA = poly_endo(A, coeffs)
        ev = PA.evaluator()
        first = None
        constant = True
        for p in pts:
            r, _ = _numeric_rank(ev(p), SVD_RELATIVE_THRESHOLD)
            if first is None:
                first = r
            elif r != first:
                constant = False
                break
        factor_ranks.append((coeffs, first, constant))
        D = nullspace_frame(PA, box, provenance=f"ker P(A), P={list(coeffs)}",
                            seed=seed)
        factor_inv.append((coeffs, involutivity_residual(
            D, box, samples=samples, seed=seed, tol=involutivity_tol)))
    torsion = nijenhuis_residual(A, box, samples=samples, seed=seed, tol=tol)
    ok = (all(c for _, _, c in factor_ranks) and torsion.passed
          and all(bool(r) for _, r in factor_inv))
    return Corollary15Report(tuple(factor_ranks), torsion, tuple(factor_inv), ok)
