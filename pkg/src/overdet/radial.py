"""Radial solutions of ``-Δu = f`` on geodesic balls and annuli of a model manifold.

Everything reduces to three running integrals, tabulated once per spec:

* ``F(r)  = ∫_0^r h^{N-1} f``           (ball problems),
* ``F0(r) = ∫_{R0}^r h^{N-1} f``,  ``G(r) = ∫_{R0}^r h^{1-N}``,
  ``K(r) = ∫_{R0}^r F0(s) h(s)^{1-N} ds``   (annular problems).

With these, ``v = -F / h^{N-1}``, the annulus solution with ``u(R0) = 0``,
``u(R) = c`` is ``u = (c + K(R)) G / G(R) - K`` and

    w(r, c) = (c - F0(r) G(r) + K(r)) / (h(r)^{N-1} G(r)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, DomainError
from .funcexpr import Field, ScalarField, as_field
from .manifold import Manifold
from .quadrature import (CumulativeIntegral, NonIntegrableError, estimate_endpoint_exponent,
                         gauss_legendre, integrate)
from .reporting import write_csv

__all__ = [
    "OverdeterminedSpec", "RadialProfile", "BoundaryLayerWarning",
    "v_of", "u_ball", "u_ball_nested", "w_of", "alpha_of", "u_annulus", "u_annulus_prime",
    "ball_profile", "annulus_profile", "ode_residual", "comparison_trajectory",
    "write_profile_csv", "graded_grid",
]

BOUNDARY_LAYER = 1e-6


class BoundaryLayerWarning(UserWarning):
    """``w`` was evaluated within ``1e-6 * R0`` of the inner sphere, where it blows up."""


def graded_grid(a: float, b: float, n: int, grading: float = 1.5) -> np.ndarray:
    """``n`` nodes on ``[a, b]`` crowding at ``a`` like ``(i/(n-1))**grading``."""
    i = np.arange(n) / (n - 1)
    x = a + (b - a) * i ** grading
    x[-1] = b
    return x


@dataclass(frozen=True, eq=False)
class OverdeterminedSpec:
    """Data of an overdetermined problem on a model manifold.

    ``R0`` present means the annular (Bernoulli type) problem with ``u = 0``
    on the inner sphere ``∂B_{R0}``; otherwise the ball (Serrin type) problem.
    ``f_exponent`` overrides the automatic estimate of a power-law
    singularity of ``f`` at the pole.  ``interior_sphere`` records that the
    domain is declared to satisfy the interior sphere condition; it is never
    verified here.
    """

    manifold: Manifold
    f: Field
    phi: Field = None
    kappa: Field = None
    interval: tuple | None = None
    R0: float | None = None
    f_exponent: float | None = None
    interior_sphere: bool = False
    table_nodes: int = 512
    tol: float = 1e-13

    def __post_init__(self):
        zero = ScalarField.parse("0")
        object.__setattr__(self, "f", as_field(self.f))
        object.__setattr__(self, "phi", zero if self.phi is None else as_field(self.phi))
        object.__setattr__(self, "kappa", zero if self.kappa is None else as_field(self.kappa))
        S = self.manifold.S
        if self.R0 is not None:
            R0 = float(self.R0)
            if not 0 < R0 < S:
                raise DomainError(f"inner radius R0={R0} must lie in (0, {S})")
            object.__setattr__(self, "R0", R0)
        if self.interval is not None:
            lo, hi = (float(x) for x in self.interval)
            if not 0 < lo < hi < S:
                raise DomainError(f"interval ({lo}, {hi}) must satisfy 0 < r_lo < r_hi < {S}")
            if self.R0 is not None and self.R0 > lo:
                raise DomainError(f"R0={self.R0} exceeds r_lo={lo}")
            object.__setattr__(self, "interval", (lo, hi))
        if self.table_nodes < 16:
            raise DomainError("table_nodes must be at least 16")

    @property
    def N(self) -> int:
        return self.manifold.N

    @property
    def annular(self) -> bool:
        return self.R0 is not None

    @property
    def start(self) -> float:
        return self.R0 if self.annular else 0.0

    @cached_property
    def f_pole_exponent(self):
        """Power-law exponent of ``f`` at the pole, ``None`` if bounded."""
        if self.annular:
            return None
        if self.f_exponent is not None:
            return float(self.f_exponent) if self.f_exponent < 0 else None
        return estimate_endpoint_exponent(self.f, 0.0, 1.0)

    @cached_property
    def table_top(self) -> float:
        S = self.manifold.S
        if self.interval is not None:
            top = self.interval[1]
        elif math.isfinite(S):
            top = S * (1 - 1e-3)
        else:
            top = self.start + 4.0
        return top

    def weight_f(self, t):
        return self.manifold.h_pow(t, self.N - 1) * self.f(t)

    def weight_inv(self, t):
        return self.manifold.h_pow(t, 1 - self.N)

    @cached_property
    def F(self) -> CumulativeIntegral:
        if self.annular:
            raise DomainError("ball table requested for an annular problem")
        hint = None
        if self.f_pole_exponent is not None:
            hint = (self.N - 1) + self.f_pole_exponent
            if hint <= -1 + 1e-6:
                raise NonIntegrableError(
                    f"h^(N-1) f ~ r^{hint:.6g} near the pole is not integrable")
        return CumulativeIntegral(self.weight_f, 0.0, self.table_top, nodes=self.table_nodes,
                                  singular_exponent=hint, tol=self.tol)

    def _annular_only(self):
        if not self.annular:
            raise DomainError("annular quantity requested but R0 is absent")

    @cached_property
    def F0(self) -> CumulativeIntegral:
        self._annular_only()
        return CumulativeIntegral(self.weight_f, self.R0, self.table_top,
                                  nodes=self.table_nodes, tol=self.tol)

    @cached_property
    def G(self) -> CumulativeIntegral:
        self._annular_only()
        return CumulativeIntegral(self.weight_inv, self.R0, self.table_top,
                                  nodes=self.table_nodes, tol=self.tol)

    @cached_property
    def K(self) -> CumulativeIntegral:
        self._annular_only()
        F0 = self.F0
        return CumulativeIntegral(lambda s: F0(s) * self.weight_inv(s), self.R0,
                                  self.table_top, nodes=self.table_nodes, tol=self.tol)


def _radii(spec: OverdeterminedSpec, r, lo_open: bool):
    arr = np.asarray(r, dtype=float)
    lo = spec.start
    bad = (arr < lo) | (arr >= spec.manifold.S) | np.isnan(arr)
    if lo_open:
        bad |= arr == lo
    if np.any(bad):
        where = "(" if lo_open else "["
        raise DomainError(f"r outside {where}{lo}, {spec.manifold.S})")
    return arr


def _out(arr, template):
    return float(arr) if np.ndim(template) == 0 else arr


def v_of(spec: OverdeterminedSpec, r):
    """``v(r) = -h^{1-N} ∫_0^r h^{N-1} f``, the flux of the radial solution through ``∂B_r``.

    ``v(0) = 0`` when ``f`` is bounded near the pole.
    """
    if spec.annular:
        raise DomainError("v is defined for ball problems (R0 absent)")
    arr = _radii(spec, r, lo_open=False)
    out = np.zeros_like(arr, dtype=float)
    pos = arr > 0
    if np.any(~pos) and spec.f_pole_exponent is not None:
        raise DomainError("v(0) is undefined for f singular at the pole")
    if np.any(pos):
        rp = arr[pos]
        out[pos] = -spec.F(rp) / spec.manifold.h_pow(rp, spec.N - 1)
    return _out(out, r)


def _v_hint(spec):
    alpha = spec.f_pole_exponent
    if alpha is None:
        return None
    hint = 1.0 + alpha
    if hint <= -1 + 1e-6:
        raise DomainError("u is unbounded at the pole for this f")
    return hint if hint < 0 else None


def u_ball(spec: OverdeterminedSpec, R: float, c: float, r):
    """Radial solution of ``-Δu = f`` in ``B_R`` with ``u = c`` on ``∂B_R``:
    ``u(r) = c - ∫_r^R v``."""
    if not 0 < R < spec.manifold.S:
        raise DomainError(f"R={R} must lie in (0, {spec.manifold.S})")
    arr = np.atleast_1d(_radii(spec, r, lo_open=False))
    if np.any(arr > R):
        raise DomainError("u_ball needs r <= R")
    vfun = lambda s: v_of(spec, s)
    out = np.empty_like(arr)
    for k, rk in enumerate(arr):
        if rk == R:
            out[k] = c
            continue
        hint = _v_hint(spec) if rk == 0 else None
        out[k] = c - integrate(vfun, rk, R, 1e-13, singular_left=hint, atol=1e-15).value
    return _out(out.reshape(np.shape(r)), r)


def u_ball_nested(spec: OverdeterminedSpec, R: float, c: float, r: float) -> float:
    """Independent route to :func:`u_ball`: the double integral
    ``c + ∫_r^R ∫_0^s (h(t)/h(s))^{N-1} f(t) dt ds`` by nested adaptive quadrature,
    bypassing the cumulative table."""
    r = float(r)
    if not 0 <= r <= R < spec.manifold.S:
        raise DomainError("need 0 <= r <= R < S")
    if r == R:
        return float(c)
    alpha = spec.f_pole_exponent
    inner_hint = None if alpha is None else (spec.N - 1) + alpha
    m = spec.manifold

    def inner(s_arr):
        shape = np.shape(s_arr)
        flat = np.atleast_1d(s_arr).ravel()
        vals = np.empty_like(flat)
        for k, s in enumerate(flat):
            if s == 0:
                vals[k] = 0.0
                continue
            vals[k] = integrate(spec.weight_f, 0.0, s, 1e-12, singular_left=inner_hint,
                                atol=1e-15).value / m.h_pow(s, spec.N - 1)
        return vals.reshape(shape)

    hint = _v_hint(spec) if r == 0 else None
    return float(c) + integrate(inner, r, R, 1e-11, singular_left=hint, atol=1e-14).value


def alpha_of(spec: OverdeterminedSpec, r):
    """Coefficient of ``c`` in ``w(r, c)``: ``1 / (h^{N-1} ∫_{R0}^r h^{1-N})``."""
    spec._annular_only()
    arr = _radii(spec, r, lo_open=True)
    return _out(1.0 / (spec.manifold.h_pow(arr, spec.N - 1) * spec.G(arr)), r)


def w_of(spec: OverdeterminedSpec, r, c):
    """``w(r, c)``: slope at ``r`` of the annular radial solution taking the value
    ``c`` on ``∂B_r`` and ``0`` on ``∂B_{R0}``.

    Emits :class:`BoundaryLayerWarning` for ``r - R0 < 1e-6 * R0``.
    """
    spec._annular_only()
    arr = _radii(spec, r, lo_open=True)
    if np.any(arr - spec.R0 < BOUNDARY_LAYER * spec.R0):
        warnings.warn(f"w evaluated within {BOUNDARY_LAYER:g}*R0 of R0; values are unreliable",
                      BoundaryLayerWarning, stacklevel=2)
    hp = spec.manifold.h_pow(arr, spec.N - 1)
    G = spec.G(arr)
    out = (np.asarray(c, dtype=float) - spec.F0(arr) * G + spec.K(arr)) / (hp * G)
    return float(out) if np.ndim(out) == 0 else out


def _annulus_R(spec, R):
    spec._annular_only()
    if not spec.R0 < R < spec.manifold.S:
        raise DomainError(f"outer radius R={R} must lie in (R0={spec.R0}, {spec.manifold.S})")


def u_annulus(spec: OverdeterminedSpec, R: float, c: float, r):
    """Radial solution in ``B_R \\ B_{R0}`` with ``u(R0) = 0``, ``u(R) = c``."""
    _annulus_R(spec, R)
    arr = _radii(spec, r, lo_open=False)
    A = (c + spec.K(R)) / spec.G(R)
    return _out(A * spec.G(arr) - spec.K(arr), r)


def u_annulus_prime(spec: OverdeterminedSpec, R: float, c: float, r):
    _annulus_R(spec, R)
    arr = _radii(spec, r, lo_open=False)
    A = (c + spec.K(R)) / spec.G(R)
    return _out((A - spec.F0(arr)) / spec.manifold.h_pow(arr, spec.N - 1), r)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    grid: np.ndarray
    u: np.ndarray
    u_prime: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("grid", "u", "u_prime"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.grid.shape == self.u.shape == self.u_prime.shape):
            raise ValueError("profile arrays differ in shape")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("profile grid must be strictly increasing")

    def __call__(self, r):
        """Cubic Hermite interpolation of ``u``."""
        from scipy.interpolate import CubicHermiteSpline
        spline = CubicHermiteSpline(self.grid, self.u, self.u_prime, extrapolate=False)
        out = spline(np.asarray(r, dtype=float))
        if np.any(np.isnan(out)):
            raise DomainError("profile evaluated outside its grid")
        return _out(out, r)


def _panel_gl(func, lo, hi, order=30):
    x, w = gauss_legendre(order)
    t = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]
    return 0.5 * (hi - lo) * (np.asarray(func(t.ravel())).reshape(t.shape) @ w)


def ball_profile(spec: OverdeterminedSpec, R: float, c: float, n: int = 512,
                 r_min: float = 0.0) -> RadialProfile:
    """``u_R`` on a grid graded toward ``r_min`` (use ``r_min > 0`` for singular f)."""
    if n < 16:
        raise DomainError("profiles need at least 16 nodes")
    if not 0 <= r_min < R < spec.manifold.S:
        raise DomainError("need 0 <= r_min < R < S")
    grid = graded_grid(r_min, R, n)
    up = v_of(spec, grid)
    vfun = lambda s: v_of(spec, s)
    pieces = _panel_gl(vfun, grid[:-1], grid[1:])
    if r_min == 0 and _v_hint(spec) is not None:
        pieces[0] = integrate(vfun, 0.0, grid[1], 1e-13, singular_left=_v_hint(spec),
                              atol=1e-15).value
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    return RadialProfile(grid, c - tail, up, {"R": R, "c": c})


def annulus_profile(spec: OverdeterminedSpec, R: float, c: float, n: int = 512) -> RadialProfile:
    if n < 16:
        raise DomainError("profiles need at least 16 nodes")
    _annulus_R(spec, R)
    grid = graded_grid(spec.R0, R, n)
    u = u_annulus(spec, R, c, grid)
    u[0] = 0.0
    u[-1] = c
    return RadialProfile(grid, u, u_annulus_prime(spec, R, c, grid),
                         {"R": R, "c": c, "R0": spec.R0})


def ode_residual(p: RadialProfile, spec: OverdeterminedSpec) -> float:
    """Largest violation of ``h^{N-1} u'|_{r_i}^{r_{i+1}} = -∫_{r_i}^{r_{i+1}} h^{N-1} f``."""
    if len(p.grid) < 16:
        raise DomainError("residual needs at least 16 nodes")
    flux = spec.manifold.h_pow(p.grid, spec.N - 1) * p.u_prime
    alpha = spec.f_pole_exponent
    hint0 = None if alpha is None else (spec.N - 1) + alpha
    src = np.empty(len(p.grid) - 1)
    if spec.f.is_zero:
        src[:] = 0.0
    else:
        for i in range(len(src)):
            hint = hint0 if p.grid[i] == 0 else None
            src[i] = integrate(spec.weight_f, p.grid[i], p.grid[i + 1], 1e-13,
                               singular_left=hint, atol=1e-15).value
    return float(np.max(np.abs(np.diff(flux) + src)))


def comparison_trajectory(spec: OverdeterminedSpec, a: float, b: float, y_start: float,
                          forcing=None, from_right: bool = False, n: int = 200):
    """Integrate ``y' = w(r, y) + g(r)`` across ``[a, b]`` (``R0 < a < b``).

    Starts at ``a`` (or at ``b`` when ``from_right``).  Returns ``(r, y)`` on a
    uniform grid of ``n`` points in increasing ``r``.
    """
    spec._annular_only()
    if not spec.R0 < a < b < spec.manifold.S:
        raise DomainError("need R0 < a < b < S")
    g = (lambda r: 0.0) if forcing is None else forcing
    grid = np.linspace(a, b, n)
    span = (b, a) if from_right else (a, b)
    t_eval = grid[::-1] if from_right else grid

    def rhs(r, y):
        return [w_of(spec, r, y[0]) + float(g(r))]

    sol = solve_ivp(rhs, span, [y_start], method="DOP853", t_eval=t_eval,
                    rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise ConvergenceError(f"comparison ODE failed: {sol.message}")
    y = sol.y[0]
    return grid, (y[::-1] if from_right else y)


def write_profile_csv(p: RadialProfile, path):
    return write_csv(path, ["r", "u", "u_prime"], [p.grid, p.u, p.u_prime])
