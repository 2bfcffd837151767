"""Evaluation of the recovered metric, diagnostics, and the error study.

The recovered metric and the operator image have the closed forms

    S(x)   = sum_k [ psi(r_k) (J_k b_k + b_k J_k^T)
                     + psi1(r_k) <x_k - x, f_k> b_k ]
    L(S)(x) = Df(x)^T S(x) + S(x) Df(x)
             + sum_k [ psi1(r_k) <x - x_k, f(x)> (J_k b_k + b_k J_k^T)
                       + (f_k^T H12(x_k, x) f(x)) b_k ]

with r_k = |x_k - x|, b_k the coefficient matrices, and H12 the mixed kernel
Hessian.  Evaluation is vectorised over query points in fixed-size chunks so
arbitrarily large check grids stay within memory; every result is exactly
symmetric by construction.
"""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .collocation import FactorizationError, GridSpec, assemble, make_grid, solve
from .operator import apply_operator

__all__ = [
    "eval_metric",
    "eval_metric_batch",
    "eval_operator",
    "eval_operator_batch",
    "Definiteness",
    "definiteness",
    "FieldSample",
    "field_export",
    "error_report",
    "ConvergenceRow",
    "ConvergenceReport",
    "convergence_study",
    "ellipse_points",
]

_CHUNK = 1024


def _coefficient_images(solution):
    """P_k = J_k beta_k + beta_k J_k^T, exactly symmetric slice by slice."""
    half = np.matmul(solution.collocation.jacobians, solution.beta)
    return half + half.transpose(0, 2, 1)


def _symmetrize(fields):
    """Exactly symmetric copy, (T + T^T)/2 slice by slice."""
    return 0.5 * (fields + fields.transpose(0, 2, 1))


def _combine(weights_a, flats_a, weights_b, flats_b, n):
    """sum_k w_a[e,k] A_k + w_b[e,k] B_k through two dense GEMMs."""
    out = weights_a @ flats_a
    out += weights_b @ flats_b
    return out.reshape(len(out), n, n)


def _fields_batch(solution, points, want_operator):
    """S and (optionally) L(S) at each row of points in one shared pass."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cset = solution.collocation
    system = cset.system
    n = system.dim
    p_flat = _coefficient_images(solution).reshape(-1, n * n)
    beta_flat = solution.beta.reshape(-1, n * n)
    s_out = np.empty((len(points), n, n))
    fs_out = np.empty((len(points), n, n)) if want_operator else None
    for e0 in range(0, len(points), _CHUNK):
        e1 = min(len(points), e0 + _CHUNK)
        pts = points[e0:e1]
        diff = cset.points[None, :, :] - pts[:, None, :]
        r = np.sqrt(np.einsum("ekd,ekd->ek", diff, diff))
        psi, psi1, psi2 = solution.kernel.profile_values(r, with_psi2=want_operator)
        dot_k = np.einsum("ekd,kd->ek", diff, cset.f_values)   # <x_k - x, f_k>
        s_val = _symmetrize(_combine(psi, p_flat, psi1 * dot_k, beta_flat, n))
        s_out[e0:e1] = s_val
        if not want_operator:
            continue
        f_here = np.empty((len(pts), n))
        jac_here = np.empty((len(pts), n, n))
        for e, x in enumerate(pts):
            f_here[e] = np.asarray(system.f(x), dtype=float)
            jac_here[e] = np.asarray(system.jacobian(x), dtype=float)
        dot_e = np.einsum("ekd,ed->ek", diff, f_here)          # <x_k - x, f(x)>
        g2 = -psi1 * dot_e
        h = psi2 * dot_k
        h *= -dot_e
        h -= psi1 * (f_here @ cset.f_values.T)
        half = np.matmul(jac_here.transpose(0, 2, 1), s_val)   # Df^T S
        fs = half + half.transpose(0, 2, 1)
        fs += _combine(g2, p_flat, h, beta_flat, n)
        fs_out[e0:e1] = _symmetrize(fs)
    return s_out, fs_out


def eval_metric_batch(solution, points):
    """Recovered metric S at each row of points; (E, n, n) array."""
    return _fields_batch(solution, points, want_operator=False)[0]


def eval_metric(solution, x):
    """Recovered metric S(x), a symmetric dim x dim matrix."""
    return eval_metric_batch(solution, np.asarray(x, dtype=float)[None, :])[0]


def eval_operator_batch(solution, points):
    """Operator image L(S) at each row of points; (E, n, n) array."""
    return _fields_batch(solution, points, want_operator=True)[1]


def eval_operator(solution, x):
    """Operator image L(S)(x) = Df^T S + S Df + S' at one point."""
    return eval_operator_batch(solution, np.asarray(x, dtype=float)[None, :])[0]


class Definiteness(str, enum.Enum):
    POSITIVE_DEFINITE = "positive_definite"
    NEGATIVE_DEFINITE = "negative_definite"
    INDEFINITE = "indefinite"
    INDETERMINATE = "indeterminate"


def definiteness(matrix, tol=0.0, method="auto"):
    """Classify a symmetric matrix as positive/negative definite or indefinite.

    For 2 x 2 matrices the trace/determinant criterion decides (method
    "trace-det"); in general the extreme eigenvalues do ("eigenvalues").
    Whenever the decisive quantity lies within tol of zero the result is
    indeterminate.  Asymmetric input raises ValueError.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, np.max(np.abs(a)))
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    if method == "auto":
        method = "trace-det" if a.shape[0] == 2 else "eigenvalues"
    if method == "trace-det":
        if a.shape[0] != 2:
            raise ValueError("trace-det criterion applies to 2 x 2 matrices only")
        det = float(np.linalg.det(a))
        tr = float(np.trace(a))
        if abs(det) <= tol:
            return Definiteness.INDETERMINATE
        if det < 0.0:
            return Definiteness.INDEFINITE
        if abs(tr) <= tol:
            return Definiteness.INDETERMINATE
        return (Definiteness.POSITIVE_DEFINITE if tr > 0.0
                else Definiteness.NEGATIVE_DEFINITE)
    if method != "eigenvalues":
        raise ValueError(f"unknown method {method!r}")
    eigs = np.linalg.eigvalsh(a)
    low, high = float(eigs[0]), float(eigs[-1])
    if low > tol:
        return Definiteness.POSITIVE_DEFINITE
    if high < -tol:
        return Definiteness.NEGATIVE_DEFINITE
    if low < -tol and high > tol:
        return Definiteness.INDEFINITE
    return Definiteness.INDETERMINATE


@dataclass(frozen=True)
class FieldSample:
    """Metric and operator values at one point plus the plotted scalars."""

    x: np.ndarray
    s: np.ndarray
    fs: np.ndarray
    trace_s: float
    det_s: float
    trace_fs: float
    neg_det_fs: float
    min_eig_s: float
    max_eig_fs: float


def field_export(solution, system, grid):
    """Sample S and L(S) with their definiteness scalars on a point list."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    s_all, fs_all = _fields_batch(solution, grid, want_operator=True)
    min_eig_s = np.linalg.eigvalsh(s_all)[:, 0]
    max_eig_fs = np.linalg.eigvalsh(fs_all)[:, -1]
    samples = []
    for e, x in enumerate(grid):
        samples.append(FieldSample(
            x=x,
            s=s_all[e],
            fs=fs_all[e],
            trace_s=float(np.trace(s_all[e])),
            det_s=float(np.linalg.det(s_all[e])),
            trace_fs=float(np.trace(fs_all[e])),
            neg_det_fs=float(-np.linalg.det(fs_all[e])),
            min_eig_s=float(min_eig_s[e]),
            max_eig_fs=float(max_eig_fs[e]),
        ))
    return samples


def error_report(solution, exact, system, check_points):
    """Max-norm errors of S and L(S) against an exact metric.

    Returns (e, e_s): the componentwise maximum of |S - M| and of
    |L(S) - L(M)| over the check points, with L(M) evaluated through
    apply_operator from the exact value/gradient callables.
    """
    check_points = np.atleast_2d(np.asarray(check_points, dtype=float))
    if len(check_points) == 0:
        raise ValueError("empty check grid")
    s_all, fs_all = _fields_batch(solution, check_points, want_operator=True)
    err = 0.0
    err_s = 0.0
    for e, x in enumerate(check_points):
        m = np.asarray(exact.value(x), dtype=float)
        fm = apply_operator(system, m, exact.gradient(x), x)
        err = max(err, float(np.max(np.abs(s_all[e] - m))))
        err_s = max(err_s, float(np.max(np.abs(fs_all[e] - fm))))
    return err, err_s


@dataclass(frozen=True)
class ConvergenceRow:
    alpha: float
    e_s: float
    ratio_s: Optional[float]
    e: float
    ratio: Optional[float]


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-grid errors with successive coarse/fine ratios.

    Rows are ordered by decreasing spacing alpha; ratios compare each row
    against the previous (coarser) one.  reference_ratio is the expected
    asymptotic ratio 2^(sigma - 1 - dim/2) for spacing halving.
    """

    rows: tuple
    reference_ratio: float


def convergence_study(system, exact, rhs, kernel, alphas, bounds, check_spec,
                      equilibria=(), regularize=False):
    """Solve on the grid family X_alpha and tabulate errors and ratios."""
    alphas = [float(a) for a in alphas]
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError(f"spacings must be strictly decreasing, got {alphas}")
    check_points = make_grid(check_spec)
    rows = []
    prev = None
    for alpha in alphas:
        grid = make_grid(GridSpec(bounds=bounds, spacing=alpha))
        cset, gram = assemble(system, kernel, grid, equilibria=equilibria)
        try:
            solution = solve(gram, rhs, cset, kernel, regularize=regularize)
        except FactorizationError as err:
            raise FactorizationError(f"alpha={alpha}: {err}", pivot=err.pivot) from err
        err, err_s = error_report(solution, exact, system, check_points)
        if prev is None:
            rows.append(ConvergenceRow(alpha, err_s, None, err, None))
        else:
            rows.append(ConvergenceRow(alpha, err_s, prev[1] / err_s, err, prev[0] / err))
        prev = (err, err_s)
    reference = 2.0 ** (kernel.sigma - 1.0 - system.dim / 2.0)
    return ConvergenceReport(rows=tuple(rows), reference_ratio=reference)


def ellipse_points(x, s_x, level, count):
    """Points v on the metric ellipse (v - x)^T S(x) (v - x) = level.

    Parametrised through the eigendecomposition of the positive definite
    2 x 2 matrix s_x; raises ValueError otherwise.
    """
    x = np.asarray(x, dtype=float)
    s_x = np.asarray(s_x, dtype=float)
    if s_x.shape != (2, 2):
        raise ValueError(f"ellipse sampling is two-dimensional, got shape {s_x.shape}")
    if level <= 0.0:
        raise ValueError(f"level must be positive, got {level}")
    if count < 1:
        raise ValueError(f"need at least one sample, got {count}")
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (s_x + s_x.T))
    if eigenvalues[0] <= 0.0:
        raise ValueError(f"matrix is not positive definite (eigenvalues {eigenvalues.tolist()})")
    angles = 2.0 * np.pi * np.arange(count) / count
    radial = np.sqrt(level / eigenvalues)
    local = np.stack([radial[0] * np.cos(angles), radial[1] * np.sin(angles)])
    return x + (eigenvectors @ local).T
