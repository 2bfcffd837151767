"""Compactly supported radial kernels with analytic derivative helpers.

Besides the kernel profile psi(r) itself, applying a first-order operator to
both arguments of phi(x, y) = psi(|x - y|) needs the two radial quotients

    psi1(r) = psi'(r) / r
    psi2(r) = (psi''(r) - psi'(r)/r) / r**2

which stay finite at r = 0 for sufficiently smooth kernels.  Both are derived
here symbolically at construction time: the profile is kept as an integer
coefficient list in t = c*r, differentiation and the divisions by t happen on
that list, so no numerical division by r ever takes place.  Each helper is
then stored in the factored form

    (1 - t)**e * cofactor(t),    t = c*r in [0, 1],

which for the Wendland family has a nonnegative cofactor and therefore
evaluates without cancellation on the whole support.  Outside the support all
helpers are exactly zero.
"""

import math

import numpy as np

__all__ = ["RadialKernel", "wendland_c8"]


def _poly_diff(coeffs):
    """Derivative of an integer coefficient list (ascending powers)."""
    return [m * a for m, a in enumerate(coeffs)][1:]


def _poly_div_t(coeffs):
    """Exact division by t; requires a vanishing constant term."""
    if coeffs and coeffs[0] != 0:
        raise ValueError("polynomial has a nonzero constant term, not divisible by t")
    return list(coeffs[1:])


def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def _factor_support(coeffs):
    """Split p(t) = (1 - t)**e * cofactor(t) with the maximal exponent e.

    Division by (1 - t) is the exact prefix-sum recursion on the integer
    coefficients; p is divisible exactly when p(1) = 0.
    """
    coeffs = list(coeffs)
    exponent = 0
    while len(coeffs) > 1 and sum(coeffs) == 0:
        quotient = []
        acc = 0
        for a in coeffs[:-1]:
            acc += a
            quotient.append(acc)
        coeffs = quotient
        exponent += 1
    return exponent, coeffs


def _int_power(x, e):
    """x**e for a small nonnegative integer e by repeated squaring."""
    if e == 0:
        return np.ones_like(x)
    if e == 1:
        return x
    half = _int_power(x, e // 2)
    sq = half * half
    return sq if e % 2 == 0 else sq * x


class _FactoredRadial:
    """One radial helper: outer * (1 - t)**e * cofactor(t) on t <= 1, else 0."""

    def __init__(self, outer, exponent, cofactor):
        self.outer = float(outer)
        self.exponent = int(exponent)
        self.cofactor = tuple(float(a) for a in cofactor)

    def eval_unit(self, t):
        """Horner evaluation for a 1-D array of t values inside [0, 1)."""
        acc = np.full(t.shape, self.cofactor[-1])
        for a in self.cofactor[-2::-1]:
            acc *= t
            acc += a
        acc *= _int_power(1.0 - t, self.exponent)
        if self.outer != 1.0:
            acc *= self.outer
        return acc

    def __call__(self, t):
        flat = t.ravel()
        inside = flat < 1.0
        out = np.zeros(flat.shape)
        out[inside] = self.eval_unit(flat[inside])
        return out.reshape(t.shape)


class RadialKernel:
    """Scalar compactly supported radial kernel phi(x, y) = psi(|x - y|).

    Parameters
    ----------
    shape_parameter : float
        Positive inverse support radius c; the kernel vanishes for
        r >= 1/c.
    sigma : float
        Sobolev smoothness order of the reproduced space.
    psi_coefficients : sequence of int
        Integer coefficients (ascending powers) of the profile polynomial in
        t = c*r, valid on [0, 1].  The polynomial must have vanishing t**1
        and t**3 terms so that psi1 and psi2 remain polynomial; this holds
        for any radial profile that is at least C^4.
    label : str
        Free-text name.

    Instances are immutable after construction and safe to share between
    threads; every evaluation method is pure and accepts scalars or arrays
    of radii.
    """

    def __init__(self, shape_parameter, sigma, psi_coefficients, label=""):
        c = float(shape_parameter)
        if not c > 0.0:
            raise ValueError(f"shape parameter must be positive, got {shape_parameter}")
        if not sigma > 0.0:
            raise ValueError(f"smoothness order must be positive, got {sigma}")
        self.shape_parameter = c
        self.sigma = float(sigma)
        self.label = label
        self.psi_coefficients = tuple(int(a) for a in psi_coefficients)

        p = list(self.psi_coefficients)
        u = _poly_div_t(_poly_diff(p))       # psi'(r)/r      = c^2 * u(c r)
        w = _poly_div_t(_poly_diff(u))       # psi1'(r)/r     = c^4 * w(c r)
        self._psi = _FactoredRadial(1.0, *_factor_support(p))
        self._psi1 = _FactoredRadial(c ** 2, *_factor_support(u))
        self._psi2 = _FactoredRadial(c ** 4, *_factor_support(w))

    @property
    def support_radius(self):
        return 1.0 / self.shape_parameter

    def __repr__(self):
        return (f"RadialKernel(label={self.label!r}, c={self.shape_parameter}, "
                f"sigma={self.sigma})")

    # -- radial profile and the two derivative quotients ---------------------

    def _eval(self, helper, r):
        r = np.asarray(r, dtype=float)
        out = helper(self.shape_parameter * r)
        return float(out) if out.ndim == 0 else out

    def psi(self, r):
        """Profile psi(r); exactly zero for r >= 1/c."""
        return self._eval(self._psi, r)

    def psi1(self, r):
        """psi'(r)/r, continuously extended to r = 0."""
        return self._eval(self._psi1, r)

    def psi2(self, r):
        """(psi''(r) - psi'(r)/r)/r**2, continuously extended to r = 0."""
        return self._eval(self._psi2, r)

    def profile_values(self, r, with_psi2=True):
        """psi, psi1 and optionally psi2 on one shared support mask.

        Equivalent to calling the three helpers separately but evaluates the
        polynomials only on the entries inside the support, which is what the
        pairwise assembly and grid evaluation loops want.  Returns a tuple
        (psi, psi1, psi2-or-None) of arrays shaped like r.
        """
        r = np.asarray(r, dtype=float)
        t = (self.shape_parameter * r).ravel()
        inside = t < 1.0
        t_in = t[inside]
        helpers = [self._psi, self._psi1] + ([self._psi2] if with_psi2 else [])
        values = []
        for helper in helpers:
            flat = np.zeros(t.shape)
            flat[inside] = helper.eval_unit(t_in)
            values.append(flat.reshape(r.shape))
        if not with_psi2:
            values.append(None)
        return tuple(values)

    # -- bivariate kernel and its derivatives --------------------------------

    def _pair(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError(f"point dimensions differ: {x.shape} vs {y.shape}")
        return x - y

    def phi(self, x, y):
        """Kernel value psi(|x - y|)."""
        diff = self._pair(x, y)
        return self.psi(np.linalg.norm(diff))

    def grad1_phi(self, x, y):
        """Gradient of phi in its first argument: psi1(r) * (x - y)."""
        diff = self._pair(x, y)
        return self.psi1(np.linalg.norm(diff)) * diff

    def hess12_phi(self, x, y):
        """Mixed second derivative matrix d^2 phi / dx_i dy_j.

        Equals -psi2(r) (x-y)(x-y)^T - psi1(r) I; symmetric, finite at
        x = y where it reduces to -psi1(0) I.
        """
        diff = self._pair(x, y)
        r = np.linalg.norm(diff)
        return (-self.psi2(r)) * np.outer(diff, diff) - self.psi1(r) * np.eye(diff.size)


# Profile of Wendland's C^8 function for up to two space dimensions,
# (1-t)^10 (2145 t^4 + 2250 t^3 + 1050 t^2 + 250 t + 25),  t = c*r.
_WENDLAND_C8_FACTOR = [25, 250, 1050, 2250, 2145]


def wendland_c8(c):
    """Wendland's C^8 kernel on R^2 with inverse support radius c.

    Reproduces the Sobolev space of order sigma = 5.5 in two dimensions.
    Raises ValueError for nonpositive c.
    """
    one_minus_t_10 = [(-1) ** m * math.comb(10, m) for m in range(11)]
    coeffs = _poly_mul(one_minus_t_10, _WENDLAND_C8_FACTOR)
    return RadialKernel(c, 5.5, coeffs, label="wendland-c8")
