"""Constructive integral-chart pipeline for nilpotent endomorphism fields.

Given a field that passes the three integrability conditions in
flag-adapted coordinates, this module runs the frame induction: starting
from the adapted coordinate fields, each stage transports the section frame
by the flows of the current image fields, tightening the commutation depth
one power at a time.  The final stage yields a chart whose coordinate frame
conjugates the field to a constant Jordan matrix, which is then verified on
a grid.

Orderings are fixed once and for all: basis slots (a, i) — the a-th image
of the i-th section field — are sorted by descending power a, then
ascending field index i.  Flow times and section coordinates inherit this
order as chart coordinates.  The application order of the flows inside the
parametrisation is configurable (`flow_order`), and the results of two
orders can be compared with `compare_charts`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .expr import Box, sample_box
from .fields import (EndoField, VectorField, apply_endo, coordinate_field,
                     endo_power, lie_bracket)
from .flows import (CompiledField, ComputedVectorField, FlowSpec,
                    IntegratorSettings, integrate_flow,
                    integrate_with_transport, numeric_bracket)
from .structure import image_frame, kernel_frame

__all__ = [
    "AdaptedChart", "Section", "PipelineSettings", "FrameState", "ChartMap",
    "AdaptedChartError", "InductionError", "NewtonError",
    "validate_adapted_chart", "initial_frame", "induction_step",
    "hk_residuals", "build_chart", "jordan_matrix", "verify_integral_chart",
    "compare_charts", "jordanize", "basis_slots",
]


class AdaptedChartError(ValueError):
    """Chart grouping is not adapted to the field's flag of foliations."""


class InductionError(RuntimeError):
    """An induction-hypothesis residual exceeded its tolerance."""

    def __init__(self, message: str, report: "HKReport"):
        super().__init__(message)
        self.report = report


class NewtonError(RuntimeError):
    def __init__(self, point, residual: float):
        super().__init__(
            f"chart inversion did not converge at {tuple(np.round(point, 6))} "
            f"(last residual {residual:.3e})")
        self.point = tuple(point)
        self.residual = residual


# ---------------------------------------------------------------------------
# Configuration.

@dataclass(frozen=True)
class PipelineSettings:
    integrator: IntegratorSettings = IntegratorSettings(step=1e-2)
    seed: int = 2026
    box_margin: float = 1.5          # working-box inflation for flow monitoring
    newton_tol: float = 1e-10
    newton_maxiter: int = 50
    h_bracket: float = 2e-3          # FD step for numeric brackets
    h_transport: float = 1e-3        # FD step for transports along computed flows
    hk_samples: int = 5
    hk_tol_symbolic: float = 1e-8    # gate for stage-0 (exact symbolic) residuals
    hk_tol_numeric: float = 1e-5     # gate for transported-stage residuals
    grid_scale: float = 0.35         # chart-grid extent relative to the box
    bracket_samples: int = 4
    flow_order: str = "desc"         # composition order: "desc" | "asc"
    section_offsets: tuple | None = None   # ((axis, value), ...) for sigma


# ---------------------------------------------------------------------------
# Adapted charts and sections.

@dataclass(frozen=True)
class AdaptedChart:
    """Ambient coordinates partitioned into flag groups x^(i,j), n>=i>=j>=1.

    The axes of the groups with i <= p, j <= q are required to span
    Im A^(n-p) ∩ ker A^q at every point of the box (checked by
    `validate_adapted_chart`).
    """

    dim: int
    groups: dict      # (i, j) -> tuple of 0-based axes
    box: Box

    def __post_init__(self):
        seen = []
        for (i, j), axes in self.groups.items():
            if not (i >= j >= 1):
                raise AdaptedChartError(f"bad group index ({i}, {j})")
            seen.extend(axes)
        if sorted(seen) != list(range(self.dim)):
            raise AdaptedChartError("groups must partition the coordinate axes")

    @property
    def index(self) -> int:
        """Nilpotency index n implied by the grouping."""
        return max(i for i, _ in self.groups)

    @property
    def multiplicities(self) -> tuple:
        n = self.index
        d = [len(self.groups.get((n, j), ())) for j in range(1, n + 1)]
        for (i, j), axes in self.groups.items():
            a = n - i + j
            if not (1 <= a <= n) or len(axes) != d[a - 1]:
                raise AdaptedChartError(
                    f"group ({i},{j}) has size {len(axes)}, expected d_{a} = "
                    f"{d[a - 1] if 1 <= a <= n else 0}")
        return tuple(d)

    def section_axes(self) -> list:
        """Axes of the groups x^(n, j), ascending j then axis order."""
        n = self.index
        out = []
        for j in range(1, n + 1):
            out.extend(self.groups.get((n, j), ()))
        return out

    def kernel_orders(self) -> list:
        """Kernel order q(i) of the i-th section field."""
        n = self.index
        out = []
        for j in range(1, n + 1):
            out.extend([j] * len(self.groups.get((n, j), ())))
        return out

    @staticmethod
    def from_group_sizes(dim: int, sizes: dict, box: Box) -> "AdaptedChart":
        """Assign consecutive axes to groups in ascending (i, j) order."""
        groups = {}
        axis = 0
        for key in sorted(sizes):
            size = sizes[key]
            groups[key] = tuple(range(axis, axis + size))
            axis += size
        if axis != dim:
            raise AdaptedChartError(f"group sizes sum to {axis}, expected {dim}")
        return AdaptedChart(dim, groups, box)


@dataclass(frozen=True)
class Section:
    """A level set of the non-quotient adapted coordinates.

    Parametrised by the x^(n,*) coordinates; the remaining axes are pinned
    to constant offsets (the arbitrary choice of sigma).
    """

    dim: int
    axes: tuple            # parametrising axes, in field order
    offsets: tuple         # length-dim constants; entries on `axes` ignored

    @staticmethod
    def for_chart(chart: AdaptedChart, offsets=None) -> "Section":
        base = [0.0] * chart.dim
        if offsets is not None:
            for axis, value in offsets.items():
                base[axis] = float(value)
        return Section(chart.dim, tuple(chart.section_axes()), tuple(base))

    @property
    def rank(self) -> int:
        return len(self.axes)

    def embed(self, s) -> np.ndarray:
        x = np.array(self.offsets, dtype=float)
        for axis, v in zip(self.axes, s):
            x[axis] = v
        return x

    def project(self, q) -> np.ndarray:
        """Quotient coordinates of q (preserved by all image flows)."""
        q = np.asarray(q, dtype=float)
        return q[list(self.axes)]

    def basis_matrix(self) -> np.ndarray:
        E = np.zeros((self.dim, len(self.axes)))
        for col, axis in enumerate(self.axes):
            E[axis, col] = 1.0
        return E


def basis_slots(multiplicities) -> list:
    """Basis slots (a, i): descending power a, ascending field index i.

    Field i has kernel order q(i); slot (a, i) exists for 0 <= a < q(i).
    """
    orders = []
    for j, dj in enumerate(multiplicities, start=1):
        orders.extend([j] * dj)
    slots = []
    n = max(orders) if orders else 0
    for a in range(n - 1, -1, -1):
        for i, qi in enumerate(orders):
            if a < qi:
                slots.append((a, i))
    return slots


def jordan_matrix(multiplicities, eigenvalue: float = 0.0) -> np.ndarray:
    """Matrix of the field in the slot basis: slot (a,i) maps to (a+1,i) or 0."""
    orders = []
    for j, dj in enumerate(multiplicities, start=1):
        orders.extend([j] * dj)
    slots = basis_slots(multiplicities)
    pos = {slot: k for k, slot in enumerate(slots)}
    d = len(slots)
    M = np.zeros((d, d))
    for c, (a, i) in enumerate(slots):
        if a + 1 < orders[i]:
            M[pos[(a + 1, i)], c] = 1.0
    return M + eigenvalue * np.eye(d)


# ---------------------------------------------------------------------------
# Chart validation.

@dataclass(frozen=True)
class AdaptedChartReport:
    passed: bool
    max_kernel_residual: float
    max_image_residual: float
    witness: tuple | None    # (p, q, axis, point) of the worst residual

    def __bool__(self):
        return self.passed


def validate_adapted_chart(A: EndoField, chart: AdaptedChart,
                           samples: int = 40, seed: int = 2026,
                           tol: float = 1e-7) -> AdaptedChartReport:
    """Check that the designated coordinate subspaces realise the flag array."""
    n = chart.index
    mults = chart.multiplicities
    box = chart.box
    pts = sample_box(box, samples, seed, include_corners=False)
    Aev = A.evaluator()
    scale = max(1.0, A.entry_scale(box, seed=seed))

    def _pt0(pt):
        return tuple(float(v) for v in pt)

    def flag_dim(p, q):
        return sum(min(q, max(0, a - (n - p))) * da
                   for a, da in enumerate(mults, start=1))

    worst_k, worst_im, witness = 0.0, 0.0, None
    passed = True
    for p in range(1, n + 1):
        for q in range(1, p + 1):
            axes = sorted(ax for (i, j), g in chart.groups.items()
                          if i <= p and j <= q for ax in g)
            if len(axes) != flag_dim(p, q):
                return AdaptedChartReport(False, math.inf, math.inf,
                                          (p, q, -1, tuple(box.center)))
            if not axes:
                continue
            for pt in pts:
                M = Aev(pt)
                Mq = np.linalg.matrix_power(M, q)
                Mim = np.linalg.matrix_power(M, n - p)
                U, s, _ = np.linalg.svd(Mim)
                r = int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 0.0) * A.dim))
                Q = U[:, :r]
                for ax in axes:
                    e = np.zeros(A.dim)
                    e[ax] = 1.0
                    rk = float(np.linalg.norm(Mq @ e)) / scale ** q
                    rim = float(np.linalg.norm(e - Q @ (Q.T @ e)))
                    if rk > worst_k:
                        worst_k = rk
                        if rk > tol:
                            witness = (p, q, ax, _pt0(pt))
                    if rim > worst_im:
                        worst_im = rim
                        if rim > tol:
                            witness = (p, q, ax, _pt0(pt))
                    if rk > tol or rim > tol:
                        passed = False
    return AdaptedChartReport(passed, worst_k, worst_im, witness)


# ---------------------------------------------------------------------------
# Stage charts: flow compositions from the section.

class _StageChart:
    """Parametrisation (s, t) -> Phi(sigma(s), t) by the stage's flows."""

    def __init__(self, pipeline: "_Pipeline", stage: int):
        self.pipeline = pipeline
        self.stage = stage           # flows are images of the stage-k frame
        self.section = pipeline.section
        st = pipeline.settings
        slots = [(a, i) for (a, i) in pipeline.slots if a >= 1]
        self.flow_slots = slots      # canonical (desc a, asc i) order
        self.generators = [pipeline.generator(a, i, stage) for a, i in slots]
        order = list(range(len(slots)))
        if st.flow_order == "desc":
            order.reverse()          # lowest power applied first (innermost)
        self.application_order = order
        box = pipeline.working_box
        self.specs = [FlowSpec(g, st.integrator, box) for g in self.generators]
        self._recent: list[tuple[np.ndarray, np.ndarray]] = []

    @property
    def n_flows(self) -> int:
        return len(self.flow_slots)

    def forward(self, s, t) -> np.ndarray:
        x = self.section.embed(s)
        for alpha in self.application_order:
            x = integrate_flow(self.specs[alpha], x, float(t[alpha]))
        return x

    def forward_transport(self, s, t, W0: np.ndarray) -> tuple:
        """Transport the columns of W0 from sigma(s) through the composition."""
        x = self.section.embed(s)
        W = W0.copy()
        h = self.pipeline.settings.h_transport
        for alpha in self.application_order:
            spec = self.specs[alpha]
            ta = float(t[alpha])
            if spec.generator.symbolic:
                x, W = integrate_with_transport(spec, x, ta, W)
            else:
                x_new = integrate_flow(spec, x, ta)
                cols = []
                for j in range(W.shape[1]):
                    w = W[:, j]
                    nw = float(np.linalg.norm(w))
                    if nw == 0.0:
                        cols.append(np.zeros_like(w))
                        continue
                    u = w / nw
                    up = integrate_flow(spec, x + h * u, ta)
                    dn = integrate_flow(spec, x - h * u, ta)
                    cols.append(nw * (up - dn) / (2.0 * h))
                x = x_new
                W = np.column_stack(cols)
        return x, W

    def _guess(self, q: np.ndarray) -> np.ndarray | None:
        best, arg = None, None
        for prev_q, prev_t in self._recent:
            dist = float(np.max(np.abs(prev_q - q)))
            if best is None or dist < best:
                best, arg = dist, prev_t
        return None if arg is None else arg.copy()

    def _remember(self, q: np.ndarray, t: np.ndarray):
        self._recent.append((q.copy(), t.copy()))
        if len(self._recent) > 8:
            self._recent.pop(0)

    def inverse(self, q, t0=None) -> tuple[np.ndarray, np.ndarray]:
        """Solve Phi(sigma(s), t) = q for the flow times t.

        The quotient coordinates are preserved by every flow, so s is read
        off q directly and only t is solved for, by damped Gauss-Newton
        with generator values as approximate jacobian columns.
        """
        q = np.asarray(q, dtype=float)
        s = self.section.project(q)
        N = self.n_flows
        if N == 0:
            return s, np.zeros(0)
        st = self.pipeline.settings
        t = np.zeros(N) if t0 is None else np.asarray(t0, dtype=float).copy()
        if t0 is None:
            g = self._guess(q)
            if g is not None:
                t = g
        tmax = 4.0 * self.pipeline.chart_box.diameter
        x = self.forward(s, t)
        r = x - q
        rn = float(np.linalg.norm(r))
        tol = st.newton_tol * (1.0 + float(np.linalg.norm(q)))
        for _ in range(st.newton_maxiter):
            if rn <= tol:
                self._remember(q, t)
                return s, t
            J = np.column_stack([g.value(x) for g in self.generators])
            delta, *_ = np.linalg.lstsq(J, -r, rcond=None)
            lam = 1.0
            while lam > 1.0 / 64.0:
                t_new = np.clip(t + lam * delta, -tmax, tmax)
                x_new = self.forward(s, t_new)
                r_new = x_new - q
                rn_new = float(np.linalg.norm(r_new))
                if rn_new < rn:
                    t, x, r, rn = t_new, x_new, r_new, rn_new
                    break
                lam *= 0.5
            else:
                break
        if rn <= 1e3 * tol:  # accept marginal convergence
            self._remember(q, t)
            return s, t
        raise NewtonError(q, rn)


class _TransportedFrame:
    """The stage-(k+1) section fields: Z^(0) on the section, pushed by flows."""

    def __init__(self, chart: _StageChart):
        self.chart = chart
        self.dim = chart.section.dim
        self.E = chart.section.basis_matrix()
        self._cache: dict[tuple, tuple] = {}

    def eval_all(self, q) -> np.ndarray:
        key = tuple(round(float(v), 12) for v in q)
        hit = self._cache.get(key)
        if hit is None:
            s, t = self.chart.inverse(q)
            _, W = self.chart.forward_transport(s, t, self.E)
            hit = W
            self._cache[key] = hit
        return hit

    def field(self, i: int, label: str) -> ComputedVectorField:
        return ComputedVectorField(lambda q, i=i: self.eval_all(q)[:, i],
                                   self.dim, label=label)


# ---------------------------------------------------------------------------
# The pipeline.

class _Pipeline:
    def __init__(self, A: EndoField, chart: AdaptedChart,
                 settings: PipelineSettings, eigenvalue: float = 0.0):
        self.A_original = A
        self.eigenvalue = float(eigenvalue)
        self.A = A.shifted(eigenvalue) if eigenvalue != 0.0 else A
        self.chart = chart
        self.chart_box = chart.box
        self.working_box = chart.box.inflate(settings.box_margin)
        self.settings = settings
        offsets = dict(settings.section_offsets) if settings.section_offsets else None
        self.section = Section.for_chart(chart, offsets)
        self.orders = chart.kernel_orders()
        self.mults = chart.multiplicities
        self.n = chart.index
        self.slots = basis_slots(self.mults)
        self.d = chart.dim
        self._powers = [endo_power(self.A, p) for p in range(self.n + 1)]
        self._power_ev = [P.evaluator() for P in self._powers]
        # stage data
        self._z0 = [coordinate_field(self.d, ax + 1)
                    for ax in self.section.axes]
        self._stage_fields: dict[int, list] = {0: self._z0}
        self._stage_charts: dict[int, _StageChart] = {}
        self._gen_cache: dict[tuple, object] = {}

    # -- frame fields ------------------------------------------------------

    def rep_stage(self, p: int, k: int) -> int:
        """Cheapest stage whose p-th images equal the stage-k ones.

        A^p Z^(k) is unchanged from stage max(0, n-p-1) on, because the
        later flows move points only along leaves that A^p collapses.
        """
        return max(0, min(k, self.n - p - 1))

    def z_fields(self, k: int) -> list:
        if k not in self._stage_fields:
            chart = self.stage_chart(k - 1)
            frame = _TransportedFrame(chart)
            self._stage_fields[k] = [
                frame.field(i, f"Z[{i}]^({k})") for i in range(len(self._z0))]
        return self._stage_fields[k]

    def generator(self, p: int, i: int, k: int):
        """The field A^p Z_i^(k) as a flow generator (stage-reduced)."""
        if p == 0:
            z = self.z_fields(k)[i]
            return CompiledField(z) if isinstance(z, VectorField) else z
        rep = self.rep_stage(p, k)
        key = (p, i, rep)
        hit = self._gen_cache.get(key)
        if hit is not None:
            return hit
        if rep == 0:
            sym = apply_endo(self._powers[p], self._z0[i])
            gen = CompiledField(sym)
        else:
            z = self.z_fields(rep)[i]
            Ap = self._power_ev[p]
            gen = ComputedVectorField(
                lambda q, z=z, Ap=Ap: Ap(q) @ z.value(q),
                self.d, h_jac=self.settings.h_bracket,
                label=f"A^{p} Z[{i}]^({rep})")
        self._gen_cache[key] = gen
        return gen

    def stage_chart(self, k: int) -> _StageChart:
        if k not in self._stage_charts:
            self._stage_charts[k] = _StageChart(self, k)
        return self._stage_charts[k]

    def slot_field(self, a: int, i: int, k: int):
        return self.generator(a, i, k)


@dataclass
class FrameState:
    """Induction step k with the section fields and their image basis."""

    pipeline: _Pipeline
    k: int

    @property
    def fields(self) -> list:
        return self.pipeline.z_fields(self.k)

    @property
    def kernel_orders(self) -> list:
        return self.pipeline.orders

    @property
    def slots(self) -> list:
        return self.pipeline.slots


# ---------------------------------------------------------------------------
# Induction-hypothesis residuals.

@dataclass(frozen=True)
class ClauseResidual:
    clause: str
    max_residual: float
    tol: float
    witness: tuple | None   # (description, point)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


@dataclass(frozen=True)
class HKReport:
    k: int
    clauses: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def worst(self) -> ClauseResidual:
        return max(self.clauses, key=lambda c: c.max_residual / max(c.tol, 1e-300))

    def clause(self, name: str) -> ClauseResidual:
        for c in self.clauses:
            if c.clause == name:
                return c
        raise KeyError(name)


def _pt(p) -> tuple:
    return tuple(float(v) for v in p)


def _span_residual(frame_mat: np.ndarray, v: np.ndarray) -> float:
    if frame_mat.shape[1] == 0:
        return float(np.linalg.norm(v))
    c, *_ = np.linalg.lstsq(frame_mat, v, rcond=None)
    return float(np.linalg.norm(v - frame_mat @ c))


def hk_residuals(state: FrameState, box: Box | None = None,
                 samples: int | None = None, seed: int | None = None,
                 clauses: tuple = ("1", "2", "3", "4", "5")) -> HKReport:
    """Residuals of the five induction-hypothesis clauses at stage k.

    Clause 4 measures bracket membership of all basis-field pairs in the
    image of A^(k+1); clause 5 the same for image-image pairs one power
    deeper.  At the final stage the target images vanish, so the clause-4/5
    residuals are raw bracket norms.
    """
    pipe = state.pipeline
    st = pipe.settings
    k = state.k
    box = box or pipe.chart_box
    samples = samples if samples is not None else st.hk_samples
    seed = seed if seed is not None else st.seed
    d = pipe.d
    n = pipe.n
    A = pipe.A
    symbolic = k == 0
    tol_scale = st.hk_tol_symbolic if symbolic else st.hk_tol_numeric

    pts = sample_box(box.scale(0.7), samples, seed, include_corners=False,
                     include_center=True)
    fields = {}
    for (a, i) in pipe.slots:
        fields[(a, i)] = pipe.slot_field(a, i, k)
    scale = 1.0
    for g in fields.values():
        for p in pts[: min(3, len(pts))]:
            scale = max(scale, float(np.max(np.abs(g.value(p)))))
    out = []

    def bracket(fa, fb, p):
        if isinstance(fa, CompiledField) and isinstance(fb, CompiledField):
            return lie_bracket(fa.field, fb.field)(p)
        return numeric_bracket(fa, fb, p, h=st.h_bracket)

    # clause 1: section values reproduce the initial frame
    worst, wit = 0.0, None
    if k > 0:
        E = pipe.section.basis_matrix()
        rng = np.random.default_rng(seed)
        lo = np.array([pipe.chart_box.bounds[ax][0] for ax in pipe.section.axes])
        hi = np.array([pipe.chart_box.bounds[ax][1] for ax in pipe.section.axes])
        for s in rng.uniform(0.6 * lo, 0.6 * hi, size=(samples, len(lo))):
            q = pipe.section.embed(s)
            for i, z in enumerate(state.fields):
                r = float(np.max(np.abs(z.value(q) - E[:, i])))
                if r > worst:
                    worst, wit = r, (f"Z[{i}] on section", _pt(q))
    out.append(ClauseResidual("1", worst, tol_scale * (1 + scale), wit))

    # clause 2: section fields are basic for every kernel foliation
    worst, wit = 0.0, None
    for qq in range(1, n):
        K = kernel_frame(A, qq, pipe.chart_box, seed=seed)
        kmat = K.matrix_evaluator()
        for F in K.frame:
            Fg = CompiledField(F)
            for i, z in enumerate(state.fields):
                zg = CompiledField(z) if isinstance(z, VectorField) else z
                for p in pts:
                    b = bracket(zg, Fg, p)
                    r = _span_residual(kmat(p), b)
                    if r > worst:
                        worst, wit = r, (f"[Z[{i}], ker A^{qq} frame]", _pt(p))
    out.append(ClauseResidual("2", worst, tol_scale * (1 + scale), wit))

    # clause 3: kernel orders are preserved
    worst, wit = 0.0, None
    for i, z in enumerate(state.fields):
        qi = pipe.orders[i]
        zg = CompiledField(z) if isinstance(z, VectorField) else z
        Aq = pipe._power_ev[qi]
        for p in pts:
            r = float(np.max(np.abs(Aq(p) @ zg.value(p))))
            if r > worst:
                worst, wit = r, (f"A^{qi} Z[{i}]", _pt(p))
    out.append(ClauseResidual("3", worst, tol_scale * (1 + scale), wit))

    # clauses 4 and 5
    def pair_clause(name, min_power, target_power):
        worst, wit = 0.0, None
        if target_power >= n:
            frame_mat = lambda p: np.zeros((d, 0))
        else:
            im = image_frame(A, target_power, pipe.chart_box, seed=seed)
            frame_mat = im.matrix_evaluator()
        slots = [(a, i) for (a, i) in pipe.slots if a >= min_power]
        for u in range(len(slots)):
            for v in range(u + 1, len(slots)):
                fa = fields[slots[u]]
                fb = fields[slots[v]]
                for p in pts:
                    b = bracket(fa, fb, p)
                    r = _span_residual(frame_mat(p), b)
                    if r > worst:
                        worst, wit = r, (f"[{slots[u]}, {slots[v]}] vs Im A^{target_power}",
                                         _pt(p))
        return ClauseResidual(name, worst, tol_scale * (1 + scale), wit)

    if "4" in clauses:
        out.append(pair_clause("4", 0, k + 1))
    if "5" in clauses:
        out.append(pair_clause("5", 1, k + 2))
    return HKReport(k, tuple(c for c in out if c.clause in clauses))


# ---------------------------------------------------------------------------
# Pipeline operations.

def initial_frame(A: EndoField, chart: AdaptedChart,
                  settings: PipelineSettings = PipelineSettings(),
                  eigenvalue: float = 0.0, check: bool = True) -> FrameState:
    """Stage-0 frame: the x^(n,*) coordinate fields ordered by kernel order."""
    pipe = _Pipeline(A, chart, settings, eigenvalue)
    state = FrameState(pipe, 0)
    if check:
        report = hk_residuals(state)
        if not report.passed:
            worst = report.worst()
            raise InductionError(
                f"initial frame violates clause {worst.clause}: residual "
                f"{worst.max_residual:.3e} > {worst.tol:.3e} at {worst.witness}",
                report)
    return state


def induction_step(state: FrameState, section: Section | None = None,
                   check: bool = False) -> FrameState:
    """Advance the induction one stage: transport the section frame by the
    flows of the current image fields."""
    pipe = state.pipeline
    if section is not None and section.axes != pipe.section.axes:
        raise ValueError("section must match the pipeline's adapted chart")
    if state.k >= pipe.n - 1:
        raise ValueError("induction is already complete")
    new = FrameState(pipe, state.k + 1)
    if check:
        report = hk_residuals(new)
        if not report.passed:
            worst = report.worst()
            raise InductionError(
                f"stage {new.k} violates clause {worst.clause}: residual "
                f"{worst.max_residual:.3e} > {worst.tol:.3e} at {worst.witness}",
                report)
    return new


# ---------------------------------------------------------------------------
# The chart map.

class ChartMap:
    """The integral chart: section parametrisation plus ordered flows.

    Chart coordinates follow the slot order: one time coordinate per image
    slot (a >= 1), then the section coordinates.  Forward evaluation
    composes the flows; inversion solves for the flow times.
    """

    def __init__(self, pipeline: _Pipeline):
        self.pipeline = pipeline
        self.slots = pipeline.slots
        self.eigenvalue = pipeline.eigenvalue
        self.jordan = jordan_matrix(pipeline.mults, pipeline.eigenvalue)
        n = pipeline.n
        self.stage = max(n - 2, 0)
        self._chart = pipeline.stage_chart(self.stage) if n >= 2 else None
        self._frame = (_TransportedFrame(self._chart) if self._chart is not None
                       else None)

    @property
    def dim(self) -> int:
        return self.pipeline.d

    @property
    def n_flows(self) -> int:
        return self._chart.n_flows if self._chart is not None else 0

    def split(self, y):
        y = np.asarray(y, dtype=float)
        N = self.n_flows
        return y[N:], y[:N]   # (s, t)

    def forward(self, y) -> np.ndarray:
        s, t = self.split(y)
        if self._chart is None:
            return self.pipeline.section.embed(s)
        return self._chart.forward(s, t)

    def coords(self, q, t0=None) -> np.ndarray:
        if self._chart is None:
            return self.pipeline.section.project(q)
        s, t = self._chart.inverse(q, t0)
        return np.concatenate([t, s])

    def forward_with_frame(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint and the chart frame (columns in slot order) at it.

        Time columns are the generator values at the endpoint (the final
        flows commute); section columns are the transported section frame.
        """
        s, t = self.split(y)
        pipe = self.pipeline
        E = pipe.section.basis_matrix()
        if self._chart is None:
            return pipe.section.embed(s), E
        p, W = self._chart.forward_transport(s, t, E)
        cols = []
        w_col = 0
        for (a, i) in self.slots:
            if a >= 1:
                cols.append(self._chart.generators[
                    self._chart.flow_slots.index((a, i))].value(p))
            else:
                cols.append(W[:, w_col])
                w_col += 1
        return p, np.column_stack(cols)

    def frame_field(self, slot):
        """The slot's basis field as a point-evaluable field object."""
        a, i = slot
        pipe = self.pipeline
        if a >= 1:
            return pipe.generator(a, i, pipe.n - 1)
        if self._frame is None:
            ax = pipe.section.axes[i]
            return CompiledField(coordinate_field(pipe.d, ax + 1))
        return self._frame.field(i, f"Z[{i}]^(final)")

    def chart_ranges(self, scale: float | None = None,
                     box: Box | None = None) -> list:
        """Per-coordinate ranges in chart space staying inside the box."""
        pipe = self.pipeline
        box = box or pipe.chart_box
        scale = scale if scale is not None else pipe.settings.grid_scale
        half = min((hi - lo) / 2.0 for lo, hi in box.bounds)
        out = [(-scale * half, scale * half)] * self.n_flows
        for ax in pipe.section.axes:
            lo, hi = box.bounds[ax]
            mid, h = (lo + hi) / 2.0, (hi - lo) / 2.0
            out.append((mid - scale * h, mid + scale * h))
        return out

    def sample_coords(self, count: int, seed: int,
                      scale: float | None = None,
                      box: Box | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        ranges = self.chart_ranges(scale, box)
        lo = np.array([r[0] for r in ranges])
        hi = np.array([r[1] for r in ranges])
        return rng.uniform(lo, hi, size=(count, len(ranges)))


def build_chart(state: FrameState, section: Section | None = None,
                quotient_axes=None, check: bool = True) -> ChartMap:
    """Assemble the chart from the final induction stage."""
    pipe = state.pipeline
    if state.k != max(pipe.n - 1, 0):
        raise ValueError(f"chart is built from stage {pipe.n - 1}, got {state.k}")
    if section is not None and section.axes != pipe.section.axes:
        raise ValueError("section must match the pipeline's adapted chart")
    if quotient_axes is not None and tuple(quotient_axes) != tuple(pipe.section.axes):
        raise ValueError("quotient coordinates must be the section axes")
    if check and pipe.n >= 2:
        report = hk_residuals(state, clauses=("1", "3", "4"))
        if not report.passed:
            worst = report.worst()
            raise InductionError(
                f"final stage violates clause {worst.clause}: residual "
                f"{worst.max_residual:.3e} > {worst.tol:.3e} at {worst.witness}",
                report)
    return ChartMap(pipe)


# ---------------------------------------------------------------------------
# Verification.

@dataclass(frozen=True)
class VerificationReport:
    max_deviation: float
    max_bracket: float
    grid: int
    jordan: np.ndarray
    deviation_witness: tuple | None
    passed: bool


def _grid_endpoints(chart: ChartMap, grid: int, scale: float | None,
                    eps: float) -> list:
    """Forward-evaluate a chart-space grid with shared trajectory prefixes.

    Returns tuples (y, endpoint, frame) where the frame's section columns
    come from centred differences of perturbed section starts.
    """
    pipe = chart.pipeline
    ranges = chart.chart_ranges(scale)
    N = chart.n_flows
    S = len(pipe.section.axes)
    t_axes = [np.linspace(r[0], r[1], grid) for r in ranges[:N]]
    s_axes = [np.linspace(r[0], r[1], grid) for r in ranges[N:]]

    # section starts: base grid plus +/- eps shifts per section axis
    s_combos = list(itertools.product(*s_axes)) if S else [()]
    variants = [("base", None, 0.0)]
    for j in range(S):
        variants.append(("up", j, eps))
        variants.append(("dn", j, -eps))

    stage = chart._chart
    results = {}
    for tag, j, shift in variants:
        starts = []
        for sc in s_combos:
            s = np.array(sc, dtype=float)
            if j is not None:
                s[j] += shift
            starts.append((sc, pipe.section.embed(s)))
        # walk the application order, fanning out over each time grid
        points = {(sc, ()): x for sc, x in starts}
        if stage is not None:
            for alpha in stage.application_order:
                spec = stage.specs[alpha]
                times = t_axes[alpha]
                new_points = {}
                for (sc, tprefix), x in points.items():
                    for tv in times:
                        new_points[(sc, tprefix + (float(tv),))] = \
                            integrate_flow(spec, x, float(tv))
                points = new_points
        results[tag if j is None else (tag, j)] = points
    return results, stage


def verify_integral_chart(A: EndoField, chart: ChartMap, box: Box | None = None,
                          grid: int = 5, tol: float = 1e-5,
                          scale: float | None = None,
                          bracket_samples: int | None = None,
                          seed: int | None = None) -> VerificationReport:
    """Assemble the field's matrix in the chart frame on a chart-space grid.

    At each grid point the frame is pulled from the chart differential and
    the matrix solve(frame, A(p) frame) is compared entrywise with the
    constant Jordan matrix.  Pairwise numeric brackets of the chart frame
    fields are measured at a few sampled points.
    """
    pipe = chart.pipeline
    st = pipe.settings
    seed = seed if seed is not None else st.seed
    eps = st.h_transport
    Aev = A.evaluator()
    results, stage = _grid_endpoints(chart, grid, scale, eps)
    base = results["base"]
    worst, witness = 0.0, None
    gen_by_slot = {} if stage is None else dict(zip(stage.flow_slots,
                                                    stage.generators))
    for (sc, tpre), p in base.items():
        cols = []
        for (a, i) in chart.slots:
            if a >= 1:
                cols.append(gen_by_slot[(a, i)].value(p))
            else:
                up = results[("up", i)][(sc, tpre)]
                dn = results[("dn", i)][(sc, tpre)]
                cols.append((up - dn) / (2.0 * eps))
        frame = np.column_stack(cols)
        mat = np.linalg.solve(frame, Aev(p) @ frame)
        dev = float(np.max(np.abs(mat - chart.jordan)))
        if dev > worst:
            worst, witness = dev, (tuple(sc), tpre, tuple(p))

    # pairwise brackets of the chart frame, at sampled points
    n_brackets = bracket_samples if bracket_samples is not None else st.bracket_samples
    max_bracket = 0.0
    if n_brackets > 0 and len(chart.slots) > 1:
        ys = chart.sample_coords(n_brackets, seed + 1, scale)
        pts = [chart.forward(y) for y in ys]
        fields = [chart.frame_field(slot) for slot in chart.slots]
        for p in pts:
            for u in range(len(fields)):
                for v in range(u + 1, len(fields)):
                    b = numeric_bracket(fields[u], fields[v], p, h=st.h_bracket)
                    max_bracket = max(max_bracket, float(np.max(np.abs(b))))
    return VerificationReport(worst, max_bracket, grid, chart.jordan,
                              witness, worst <= tol)


def compare_charts(c1: ChartMap, c2: ChartMap, box: Box | None = None,
                   samples: int = 100, seed: int = 2026,
                   scale: float | None = None) -> float:
    """Max distance between the two charts' outputs at shared coordinates."""
    if c1.slots != c2.slots:
        raise ValueError("charts must share slot structure")
    ys = c1.sample_coords(samples, seed, scale)
    worst = 0.0
    for y in ys:
        worst = max(worst, float(np.max(np.abs(c1.forward(y) - c2.forward(y)))))
    return worst


# ---------------------------------------------------------------------------
# Driver.

@dataclass(frozen=True)
class JordanizeResult:
    chart: ChartMap
    stage_reports: tuple
    verification: VerificationReport


def jordanize(A: EndoField, chart: AdaptedChart,
              settings: PipelineSettings = PipelineSettings(),
              eigenvalue: float = 0.0, grid: int = 5,
              verify_tol: float = 1e-5,
              hk_clauses: tuple = ("1", "2", "3", "4", "5")) -> JordanizeResult:
    """Full pipeline: validate, run the induction, build and verify the chart."""
    N = A.shifted(eigenvalue) if eigenvalue != 0.0 else A
    validation = validate_adapted_chart(N, chart, seed=settings.seed)
    if not validation.passed:
        raise AdaptedChartError(
            f"chart grouping does not match the flag array: worst kernel "
            f"residual {validation.max_kernel_residual:.3e}, image residual "
            f"{validation.max_image_residual:.3e} at {validation.witness}")
    state = initial_frame(A, chart, settings, eigenvalue)
    reports = [hk_residuals(state, clauses=hk_clauses)]
    if not reports[0].passed:
        worst = reports[0].worst()
        raise InductionError(
            f"stage 0 violates clause {worst.clause}: residual "
            f"{worst.max_residual:.3e} > {worst.tol:.3e} at {worst.witness}",
            reports[0])
    n = chart.index
    for k in range(n - 1):
        state = induction_step(state)
        clause_subset = hk_clauses if state.k < n - 1 else tuple(
            c for c in hk_clauses if c in ("1", "3", "4"))
        rep = hk_residuals(state, clauses=clause_subset)
        reports.append(rep)
        if not rep.passed:
            worst = rep.worst()
            raise InductionError(
                f"stage {state.k} violates clause {worst.clause}: residual "
                f"{worst.max_residual:.3e} > {worst.tol:.3e} at {worst.witness}",
                rep)
    cmap = build_chart(state, check=False)
    verification = verify_integral_chart(A, cmap, grid=grid, tol=verify_tol)
    return JordanizeResult(cmap, tuple(reports), verification)
