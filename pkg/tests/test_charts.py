import numpy as np
import pytest

from endochart import expr as ex
from endochart.charts import (AdaptedChart, AdaptedChartError, ChartMap,
                              FrameState, InductionError, PipelineSettings,
                              Section, basis_slots, build_chart,
                              compare_charts, hk_residuals, induction_step,
                              initial_frame, jordan_matrix, jordanize,
                              validate_adapted_chart, verify_integral_chart)
from endochart.corpus import (Example35Spec, build_corpus_field,
                              conjugated_constant, constant_jordan,
                              example35_field, example38_chart,
                              example38_field)
from endochart.expr import Box
from endochart.flows import IntegratorSettings

FAST = PipelineSettings(integrator=IntegratorSettings(step=2e-2), hk_samples=3)


class TestJordanMatrix:
    def test_spec_example_1_1(self):
        # basis (A Z_2, Z_1, Z_2): only entry M[1, 3] = 1 (1-based)
        M = jordan_matrix((1, 1))
        expect = np.zeros((3, 3))
        expect[0, 2] = 1.0
        assert np.array_equal(M, expect)

    def test_zero_for_trivial(self):
        assert np.array_equal(jordan_matrix((4,)), np.zeros((4, 4)))

    def test_cyclic_block(self):
        M = jordan_matrix((0, 0, 1))
        expect = np.zeros((3, 3))
        expect[0, 1] = 1.0
        expect[1, 2] = 1.0
        assert np.array_equal(M, expect)

    def test_slots_order(self):
        slots = basis_slots((1, 1))
        assert slots == [(1, 1), (0, 0), (0, 1)]

    def test_n2_display(self):
        # multiplicities (d_1, d_2) = (1, 2): basis (AZ_1', AZ_2', Z_0, Z_1', Z_2')
        M = jordan_matrix((1, 2))
        assert M.shape == (5, 5)
        assert M[0, 3] == 1.0 and M[1, 4] == 1.0
        assert np.sum(M) == 2.0

    def test_eigenvalue_shift(self):
        M = jordan_matrix((1, 1), eigenvalue=2.5)
        assert np.allclose(np.diag(M), 2.5)


class TestValidateAdaptedChart:
    def test_example35_natural_groups_pass(self):
        spec = Example35Spec.from_theta(3)
        A, chart = example35_field(spec)
        rep = validate_adapted_chart(A, chart, samples=30, seed=1)
        assert rep.passed

    def test_permuted_groups_fail(self):
        spec = Example35Spec.from_theta(3)
        A, chart = example35_field(spec)
        bad = AdaptedChart(3, {(1, 1): (2,), (2, 2): (1,), (3, 3): (0,)},
                           chart.box)
        rep = validate_adapted_chart(A, bad, samples=30, seed=1)
        assert not rep.passed
        assert rep.witness is not None

    def test_constant_jordan_passes(self):
        A, chart = constant_jordan((1, 1))
        rep = validate_adapted_chart(A, chart, samples=30, seed=1)
        assert rep.passed


class TestConstantJordanPipeline:
    def test_identity_chart(self):
        A, chart = constant_jordan((1, 1))
        result = jordanize(A, chart, FAST, grid=3)
        assert result.verification.max_deviation <= 1e-9
        # forward map is the identity: slot axes carry their own coordinates
        y = np.array([0.11, -0.07, 0.2])
        assert np.allclose(result.chart.forward(y), y, atol=1e-9)

    def test_fixed_point_of_induction(self):
        A, chart = constant_jordan((1, 1))
        state = initial_frame(A, chart, FAST)
        state1 = induction_step(state)
        q = (0.2, 0.1, -0.1)
        for i, z in enumerate(state1.fields):
            e = np.zeros(3)
            e[chart.section_axes()[i]] = 1.0
            assert np.max(np.abs(z.value(q) - e)) <= 1e-9

    def test_coords_roundtrip(self):
        A, chart = constant_jordan((0, 0, 1))
        result = jordanize(A, chart, FAST, grid=3)
        y = np.array([0.15, -0.1, 0.05])
        p = result.chart.forward(y)
        back = result.chart.coords(p)
        assert np.max(np.abs(back - y)) <= 1e-9


class TestNegativePath:
    def test_example38_fails_h0(self):
        box = Box.cube(4, 1.0)
        A = example38_field()
        chart = example38_chart(box)
        with pytest.raises(InductionError) as err:
            initial_frame(A, chart, FAST)
        report = err.value.report
        worst = report.worst()
        assert worst.clause in ("4", "5")
        assert worst.witness is not None
        assert worst.max_residual > 0.1

    def test_example38_adapted_chart_itself_valid(self):
        # the grouping is fine; the failure is the induction hypothesis
        box = Box.cube(4, 1.0)
        rep = validate_adapted_chart(example38_field(), example38_chart(box),
                                     samples=30, seed=2)
        assert rep.passed


class TestConjugatedPipeline:
    def test_n2_d3_quadratic_shear(self):
        oracle = conjugated_constant(seed=20260811, d=3, multiplicities=(1, 1),
                                     shear_degree=2)
        result = jordanize(oracle.field, oracle.chart, FAST, grid=4)
        assert result.verification.max_deviation <= 1e-5
        assert result.verification.max_bracket <= 1e-5

    def test_chart_matches_known_inverse_up_to_section_choice(self):
        # with quotient slots unsheared, the two charts differ only by the
        # section mismatch: ŷ(Φ(y)) = y - (g_1(y_2, y_3), 0, 0)
        oracle = conjugated_constant(seed=20260811, d=3, multiplicities=(1, 1),
                                     shear_degree=2)
        result = jordanize(oracle.field, oracle.chart, FAST, grid=3)
        known = oracle.known_chart_evaluator()
        g1 = ex.compile_expr(oracle.shear[0])
        rng = np.random.default_rng(5)
        for y in rng.uniform(-0.2, 0.2, size=(10, 3)):
            p = result.chart.forward(y)
            w = known(p)
            expect = y.copy()
            expect[0] -= g1((0.0, y[1], y[2]))
            assert np.max(np.abs(w - expect)) <= 1e-6

    def test_flow_order_independence(self):
        oracle = conjugated_constant(seed=4, d=4, multiplicities=(0, 2),
                                     shear_degree=2)
        r1 = jordanize(oracle.field, oracle.chart, FAST, grid=3)
        asc = PipelineSettings(integrator=FAST.integrator, hk_samples=3,
                               flow_order="asc")
        r2 = jordanize(oracle.field, oracle.chart, asc, grid=3)
        dev = compare_charts(r1.chart, r2.chart, samples=50, seed=6)
        assert dev <= 1e-5


class TestExample35Pipeline:
    def test_n2_theta(self):
        spec = Example35Spec.from_theta(2, box=Box.cube(2, 0.4))
        A, chart = example35_field(spec)
        result = jordanize(A, chart, FAST, grid=4)
        assert result.verification.max_deviation <= 1e-5

    def test_n3_theta_smoke(self):
        spec = Example35Spec.from_theta(3)
        A, chart = example35_field(spec)
        result = jordanize(A, chart, FAST, grid=3)
        assert result.verification.max_deviation <= 1e-4
        # stage-1 clause-4 residual is reported
        stage1 = result.stage_reports[1]
        assert stage1.clause("4").max_residual <= 1e-5

    def test_shifted_section(self):
        spec = Example35Spec.from_theta(2, box=Box.cube(2, 0.4))
        A, chart = example35_field(spec)
        shifted = PipelineSettings(integrator=FAST.integrator, hk_samples=3,
                                   section_offsets=((0, 0.1),))
        r1 = jordanize(A, chart, FAST, grid=3)
        r2 = jordanize(A, chart, shifted, grid=3)
        assert r2.verification.max_deviation <= 1e-5
        p = (0.15, 0.2)
        y1 = r1.chart.coords(p)
        y2 = r2.chart.coords(p)
        # quotient component agrees; the flow time shifts with the section
        assert y1[1] == pytest.approx(y2[1], abs=1e-12)
        assert abs(y1[0] - y2[0]) > 1e-3


@pytest.fixture(scope="module")
def n3_strong():
    """Strongly nonlinear n = 3 instance (theta = t^2 on a wider box)."""
    spec = Example35Spec.from_theta(3, r=1, box=Box.cube(3, 0.5))
    A, chart = example35_field(spec)
    result = jordanize(A, chart, FAST, grid=3)
    return spec, A, result


class TestPipelineInvariants:
    def test_frame_matches_transported_fields(self, n3_strong):
        # chart differential columns = evaluations of the final basis fields
        _, _, result = n3_strong
        chart = result.chart
        for y in chart.sample_coords(5, seed=9):
            p, frame = chart.forward_with_frame(y)
            for col, slot in enumerate(chart.slots):
                v = chart.frame_field(slot).value(p)
                assert np.max(np.abs(frame[:, col] - v)) <= 1e-5

    def test_inverse_roundtrip(self, n3_strong):
        _, _, result = n3_strong
        chart = result.chart
        rng = np.random.default_rng(17)
        for p in rng.uniform(-0.2, 0.2, size=(5, 3)):
            y = chart.coords(p)
            back = chart.forward(y)
            assert np.max(np.abs(back - p)) <= 1e-6

    def test_monotone_commutator_depth(self, n3_strong):
        # raw bracket norms of the image slots shrink stage by stage and
        # vanish (to tolerance) at the final stage
        from endochart.flows import numeric_bracket
        spec, A, result = n3_strong
        pipe = result.chart.pipeline
        pts = [np.array([0.1, -0.12, 0.3]), np.array([-0.15, 0.1, 0.35])]
        norms = []
        for k in range(pipe.n):
            fields = [pipe.slot_field(a, i, k) for (a, i) in pipe.slots]
            worst = 0.0
            for u in range(len(fields)):
                for v in range(u + 1, len(fields)):
                    for p in pts:
                        b = numeric_bracket(fields[u], fields[v], p, h=2e-3)
                        worst = max(worst, float(np.max(np.abs(b))))
            norms.append(worst)
        assert norms[-1] <= 1e-5
        for a, b in zip(norms, norms[1:]):
            assert b <= a * 1.2 + 1e-9
        # the induction is doing real work: stage 0 brackets are visible
        assert norms[0] > 1e-4

    def test_trivial_field_identity_chart(self):
        # A = 0 short-circuits to the identity chart (no flows at all)
        A, chart = constant_jordan((3,))
        result = jordanize(A, chart, FAST, grid=3)
        assert result.chart.n_flows == 0
        y = np.array([0.2, -0.1, 0.05])
        assert np.allclose(result.chart.forward(y), y)
        assert result.verification.max_deviation == 0.0

    def test_example35_n3_cube_annihilates(self):
        from endochart.fields import endo_power
        from endochart.expr import is_zero_on_box
        spec = Example35Spec.from_theta(3)
        A, chart = example35_field(spec)
        A3 = endo_power(A, 3)
        for row in A3.entries:
            for e in row:
                assert is_zero_on_box(e, spec.box, samples=40, tol=1e-13,
                                      seed=3).passed


class TestSectionAndState:
    def test_section_embed_project(self):
        A, chart = constant_jordan((1, 1))
        s = Section.for_chart(chart, offsets={0: 0.05})
        x = s.embed((0.3, -0.2))
        assert x[0] == 0.05
        assert np.allclose(s.project(x), (0.3, -0.2))

    def test_initial_frame_fields(self):
        spec = Example35Spec.from_theta(3)
        A, chart = example35_field(spec)
        state = initial_frame(A, chart, FAST)
        assert state.k == 0
        assert state.kernel_orders == [3]
        assert len(state.fields) == 1

    def test_hk_report_structure(self):
        spec = Example35Spec.from_theta(3)
        A, chart = example35_field(spec)
        state = initial_frame(A, chart, FAST)
        rep = hk_residuals(state)
        assert rep.passed
        assert {c.clause for c in rep.clauses} == {"1", "2", "3", "4", "5"}
