"""Metric evaluation, definiteness diagnostics, errors, and the study harness."""

import numpy as np
import pytest

import conmet
from conmet import (
    Definiteness,
    DynamicalSystem,
    ExactMetric,
    FunctionalIndex,
    GridSpec,
    RecoverySolution,
    SolveDiagnostics,
    assemble,
    convergence_study,
    definiteness,
    ellipse_points,
    error_report,
    eval_metric,
    eval_metric_batch,
    eval_operator,
    eval_operator_batch,
    field_export,
    linear_example,
    make_grid,
    riesz_representer,
    solve,
    triangle_indices,
    wendland_c8,
)
from conftest import BOUNDS


def _zero_solution(linear, kernel, n_points=4):
    system, _, rhs = linear
    pts = make_grid(GridSpec(BOUNDS, 1.0))[:n_points]
    cset = conmet.collocation_data(system, pts)
    diag = SolveDiagnostics(dimension=3 * n_points, relative_residual=0.0,
                            factorization="cholesky", regularized=False)
    beta = np.zeros((n_points, 2, 2))
    return RecoverySolution(cset, kernel, beta, rhs, diag)


# -- metric and operator evaluation ---------------------------------------------

def test_eval_metric_zero_coefficients(linear, kernel):
    solution = _zero_solution(linear, kernel)
    assert np.array_equal(eval_metric(solution, np.array([0.1, 0.2])), np.zeros((2, 2)))
    assert np.array_equal(eval_operator(solution, np.array([0.1, 0.2])), np.zeros((2, 2)))


def test_eval_metric_outside_support_is_zero(solved_quarter, kernel):
    far = np.array([1.0 + kernel.support_radius + 0.05, 0.0])
    assert np.array_equal(eval_metric(solved_quarter, far), np.zeros((2, 2)))
    assert np.array_equal(eval_operator(solved_quarter, far), np.zeros((2, 2)))


def test_eval_metric_exactly_symmetric(solved_quarter):
    rng = np.random.default_rng(50)
    values = eval_metric_batch(solved_quarter, rng.uniform(-1, 1, (30, 2)))
    assert np.array_equal(values, values.transpose(0, 2, 1))
    images = eval_operator_batch(solved_quarter, rng.uniform(-1, 1, (30, 2)))
    assert np.array_equal(images, images.transpose(0, 2, 1))


def test_eval_batch_matches_single(solved_quarter):
    rng = np.random.default_rng(51)
    pts = rng.uniform(-1, 1, (10, 2))
    batch_s = eval_metric_batch(solved_quarter, pts)
    batch_fs = eval_operator_batch(solved_quarter, pts)
    # identical calls are bitwise deterministic; single-point evaluation may
    # differ in the last units because BLAS kernels depend on matrix shape
    assert np.array_equal(batch_s, eval_metric_batch(solved_quarter, pts))
    assert np.array_equal(batch_fs, eval_operator_batch(solved_quarter, pts))
    for e, x in enumerate(pts):
        assert np.allclose(batch_s[e], eval_metric(solved_quarter, x), rtol=1e-13, atol=1e-14)
        assert np.allclose(batch_fs[e], eval_operator(solved_quarter, x), rtol=1e-13, atol=1e-13)


def test_form1_equals_form2(solved_quarter, kernel):
    # expansion over representers with the raw coefficients gamma agrees with
    # the closed-form evaluation from the symmetric beta matrices
    cset = solved_quarter.collocation
    beta = solved_quarter.beta
    pairs = triangle_indices(2)
    rng = np.random.default_rng(52)
    for x in rng.uniform(-1, 1, (50, 2)):
        form1 = np.zeros((2, 2))
        for k in range(len(cset)):
            data = cset.point_data(k)
            for i, j in pairs:
                gamma = beta[k, i, j] if i == j else 2.0 * beta[k, i, j]
                form1 += gamma * riesz_representer(kernel, data, FunctionalIndex(k, i, j), x)
        assert np.allclose(eval_metric(solved_quarter, x), form1, rtol=0, atol=1e-10)


def test_eval_operator_at_collocation_points(solved_quarter, linear):
    _, _, rhs = linear
    images = eval_operator_batch(solved_quarter, solved_quarter.collocation.points)
    assert np.max(np.abs(images + rhs)) <= 1e-8


def test_eval_operator_orbital_fd(solved_quarter, linear):
    # subtract the zero-order part; the rest is the orbital derivative of S
    system, _, _ = linear
    rng = np.random.default_rng(53)
    t = 1e-6
    for x in rng.uniform(-0.9, 0.9, (50, 2)):
        jac = system.jacobian(x)
        fx = system.f(x)
        s_here = eval_metric(solved_quarter, x)
        orbital = eval_operator(solved_quarter, x) - jac.T @ s_here - s_here @ jac
        fd = (eval_metric(solved_quarter, x + t * fx)
              - eval_metric(solved_quarter, x - t * fx)) / (2.0 * t)
        assert np.allclose(orbital, fd, rtol=1e-5, atol=1e-7)


# -- definiteness ----------------------------------------------------------------

def test_definiteness_basic_cases():
    assert definiteness(np.eye(2)) is Definiteness.POSITIVE_DEFINITE
    assert definiteness(-np.eye(2)) is Definiteness.NEGATIVE_DEFINITE
    assert definiteness(np.diag([1.0, -1.0])) is Definiteness.INDEFINITE
    assert definiteness(np.diag([1.0, 1e-15]), tol=1e-12) is Definiteness.INDETERMINATE


def test_definiteness_methods_cross_check():
    rng = np.random.default_rng(54)
    for _ in range(50):
        a = rng.normal(size=(2, 2))
        a = a + a.T
        if abs(np.linalg.det(a)) < 1e-3 or abs(np.trace(a)) < 1e-3:
            continue
        assert (definiteness(a, method="trace-det")
                is definiteness(a, method="eigenvalues"))


def test_definiteness_higher_dimension():
    assert definiteness(np.diag([1.0, 2.0, 3.0])) is Definiteness.POSITIVE_DEFINITE
    assert definiteness(-np.diag([1.0, 2.0, 3.0])) is Definiteness.NEGATIVE_DEFINITE
    assert definiteness(np.diag([1.0, -2.0, 3.0])) is Definiteness.INDEFINITE


def test_definiteness_rejects_asymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        definiteness(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="trace-det"):
        definiteness(np.eye(3), method="trace-det")
    with pytest.raises(ValueError, match="unknown method"):
        definiteness(np.eye(2), method="pivots")


# -- error metrics and the study harness -----------------------------------------

def test_error_report_zero_solution_and_zero_metric(linear, kernel):
    # feeding back an exact metric identical to the recovered one gives (0, 0)
    solution = _zero_solution(linear, kernel)
    zero_exact = ExactMetric(lambda x: np.zeros((2, 2)), lambda x: np.zeros((2, 2, 2)))
    system, _, _ = linear
    check = make_grid(GridSpec(BOUNDS, 0.5))
    assert error_report(solution, zero_exact, system, check) == (0.0, 0.0)


def test_error_report_rejects_empty_grid(solved_quarter, linear):
    system, exact, _ = linear
    with pytest.raises(ValueError, match="empty"):
        error_report(solved_quarter, exact, system, np.empty((0, 2)))


def test_convergence_study_two_alphas(linear, kernel):
    system, exact, rhs = linear
    check = GridSpec(BOUNDS, 1.0 / 64.0, offset=1.0 / 128.0)
    report = convergence_study(system, exact, rhs, kernel, [0.5, 0.25], BOUNDS, check)
    assert len(report.rows) == 2
    first, second = report.rows
    assert first.ratio_s is None and first.ratio is None
    assert second.ratio_s == pytest.approx(2.0045, rel=0.05)
    assert first.e_s == pytest.approx(2.5724, rel=0.05)
    assert report.reference_ratio == pytest.approx(2.0 ** 3.5, rel=1e-12)


def test_convergence_study_single_alpha(linear, kernel):
    system, exact, rhs = linear
    check = GridSpec(BOUNDS, 0.25, offset=0.125)
    report = convergence_study(system, exact, rhs, kernel, [0.5], BOUNDS, check)
    assert len(report.rows) == 1
    assert report.rows[0].ratio_s is None and report.rows[0].ratio is None


def test_convergence_study_requires_decreasing_alphas(linear, kernel):
    system, exact, rhs = linear
    check = GridSpec(BOUNDS, 0.25, offset=0.125)
    with pytest.raises(ValueError, match="decreasing"):
        convergence_study(system, exact, rhs, kernel, [0.25, 0.5], BOUNDS, check)


# -- field export -----------------------------------------------------------------

def test_field_export_shapes_and_collocation_values(solved_quarter, linear):
    system, _, _ = linear
    pts = solved_quarter.collocation.points
    samples = field_export(solved_quarter, system, pts)
    assert len(samples) == len(pts)
    assert [tuple(s.x) for s in samples] == [tuple(p) for p in pts]
    for sample in samples:
        # interpolation conditions: L(S) = -I at the collocation points
        assert sample.trace_fs == pytest.approx(-2.0, abs=1e-6)
        assert sample.neg_det_fs == pytest.approx(-1.0, abs=1e-6)
        assert sample.max_eig_fs == pytest.approx(-1.0, abs=1e-6)


def test_field_export_single_point(solved_quarter, linear):
    system, _, _ = linear
    samples = field_export(solved_quarter, system, [[0.1, -0.2]])
    assert len(samples) == 1
    assert samples[0].s.shape == (2, 2)


def test_field_export_contraction_region(solved_eighth, linear):
    # on the solved alpha = 1/8 grid the metric is positive definite and the
    # operator image negative definite across the whole check region
    system, _, _ = linear
    check = make_grid(GridSpec(BOUNDS, 1.0 / 16.0, offset=1.0 / 32.0))
    samples = field_export(solved_eighth, system, check)
    for sample in samples:
        assert sample.trace_s > 0.0 and sample.det_s > 0.0
        assert sample.trace_fs < 0.0 and sample.neg_det_fs < 0.0
        assert sample.min_eig_s > 0.0 and sample.max_eig_fs < 0.0


# -- ellipses ----------------------------------------------------------------------

def test_ellipse_unit_circle():
    pts = ellipse_points(np.zeros(2), np.eye(2), 1.0, 16)
    assert pts.shape == (16, 2)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, rtol=0, atol=1e-12)


def test_ellipse_diagonal_semi_axes():
    pts = ellipse_points(np.zeros(2), np.diag([4.0, 1.0]), 1.0, 8)
    assert np.max(np.abs(pts[:, 0])) == pytest.approx(0.5, rel=1e-12)
    assert np.max(np.abs(pts[:, 1])) == pytest.approx(1.0, rel=1e-12)


def test_ellipse_residual_random_spd():
    rng = np.random.default_rng(55)
    for _ in range(10):
        a = rng.normal(size=(2, 2))
        s = a @ a.T + 0.1 * np.eye(2)
        center = rng.uniform(-1, 1, 2)
        level = 0.3 + rng.random()
        pts = ellipse_points(center, s, level, 32)
        for v in pts:
            res = (v - center) @ s @ (v - center)
            assert res == pytest.approx(level, rel=1e-10)


def test_ellipse_rejects_bad_input():
    with pytest.raises(ValueError, match="positive definite"):
        ellipse_points(np.zeros(2), np.diag([1.0, -0.5]), 1.0, 8)
    with pytest.raises(ValueError, match="level"):
        ellipse_points(np.zeros(2), np.eye(2), 0.0, 8)
    with pytest.raises(ValueError, match="two-dimensional"):
        ellipse_points(np.zeros(3), np.eye(3), 1.0, 8)


# -- a three-dimensional system end to end ------------------------------------------

def test_three_dimensional_recovery():
    a = np.array([[-1.0, 0.5, 0.0], [0.0, -2.0, 0.3], [0.2, 0.0, -1.5]])
    system = DynamicalSystem(3, lambda x: a @ x, lambda x: a.copy(), label="3d")
    kernel = wendland_c8(0.9)
    axis = (-0.5, 0.0, 0.5)
    pts = np.array([(x, y, z) for x in axis for y in axis for z in axis])
    cset, gram = assemble(system, kernel, pts)
    assert gram.shape == (27 * 6, 27 * 6)
    rhs = np.eye(3)
    solution = solve(gram, rhs, cset, kernel)
    images = eval_operator_batch(solution, pts)
    assert np.max(np.abs(images + rhs)) <= 1e-8
    values = eval_metric_batch(solution, pts)
    assert np.array_equal(values, values.transpose(0, 2, 1))
    assert definiteness(values[13]) is Definiteness.POSITIVE_DEFINITE
