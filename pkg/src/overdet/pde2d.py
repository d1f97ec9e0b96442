"""Finite-volume Poisson solver on star-shaped domains of a model surface (N = 2).

Geodesic polar coordinates ``(r, θ)`` carry the metric ``dr² + h(r)² dθ²``.
The domain ``{R0 <= r < ρ(θ)}`` (``R0 = 0`` for domains containing the pole)
is mapped to the unit strip by ``r = R0 + s L(θ)``, ``L = ρ - R0``.  In
``(s, θ)`` the Laplace-Beltrami equation reads

    ∂_s(A u_s + B u_θ) + ∂_θ(B u_s + C u_θ) = -f √g,

    √g = L h,   A = (s² L'² + h²) / (L h),   B = -s L' / h,   C = L / h,

which is discretised with the symmetric nine-point stencil.  For domains
containing the pole, the ``s = 0`` row collapses into one unknown whose
equation is the flux balance of the small disc ``s < ds/2`` around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.sparse.linalg import spsolve

from .errors import ConfigError, ConvergenceError, DomainError
from .funcexpr import as_field
from .manifold import Kind, Manifold
from .quadrature import gauss_legendre
from .radial import RadialProfile
from .reporting import write_csv

__all__ = [
    "StarDomain", "Grid2DSolution", "BoundaryFlux", "CounterexampleTable",
    "solve_dirichlet", "boundary_flux", "build_counterexample", "radial_equivalence",
    "write_solution_csv", "write_flux_csv", "write_counterexample_csv", "SolverError",
]

TWO_PI = 2.0 * math.pi
MIN_RESOLUTION = (32, 64)
SOLVER_TOL = 1e-10


class SolverError(ConvergenceError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True, eq=False)
class StarDomain:
    """``{inner_radius <= r < ρ(θ)}`` in geodesic polar coordinates."""

    rho: object
    rho_prime: object
    inner_radius: float | None = None
    kind: str = "ball"          # "ball", "annulus", "ellipse" or "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def ball(cls, R: float) -> "StarDomain":
        R = float(R)
        return cls(lambda t: np.full(np.shape(t), R), lambda t: np.zeros(np.shape(t)),
                   None, "ball", {"R": R})

    @classmethod
    def annulus(cls, R0: float, R: float) -> "StarDomain":
        R = float(R)
        return cls(lambda t: np.full(np.shape(t), R), lambda t: np.zeros(np.shape(t)),
                   float(R0), "annulus", {"R": R, "R0": float(R0)})

    @classmethod
    def ellipse(cls, a: float, b: float) -> "StarDomain":
        a, b = float(a), float(b)

        def rho(t):
            return a * b / np.sqrt(b**2 * np.cos(t)**2 + a**2 * np.sin(t)**2)

        def rho_prime(t):
            q = b**2 * np.cos(t)**2 + a**2 * np.sin(t)**2
            return -0.5 * a * b * (a**2 - b**2) * np.sin(2 * t) / q**1.5

        return cls(rho, rho_prime, None, "ellipse", {"a": a, "b": b})

    @classmethod
    def from_function(cls, rho, rho_prime=None, inner_radius=None) -> "StarDomain":
        if rho_prime is None:
            step = 1e-5

            def rho_prime(t):
                t = np.asarray(t, dtype=float)
                return (rho(t + step) - rho(t - step)) / (2 * step)

        kind = "custom" if inner_radius is None else "annulus"
        return cls(rho, rho_prime, inner_radius, kind, {})

    @property
    def annular(self) -> bool:
        return self.inner_radius is not None

    @property
    def base(self) -> float:
        return self.inner_radius if self.annular else 0.0

    def validate(self, m: Manifold, samples: int = 720):
        t = np.linspace(0.0, TWO_PI, samples + 1)
        r = np.asarray(self.rho(t), dtype=float)
        if abs(r[0] - r[-1]) >= 1e-12:
            raise DomainError("boundary radius is not 2π-periodic")
        if np.any(r <= self.base):
            raise DomainError("boundary radius must exceed the inner radius (or 0)")
        if np.any(r >= m.S):
            raise DomainError(f"boundary radius must stay below S={m.S}")
        if self.kind == "annulus" and not self.annular:
            raise ConfigError("annular domain needs inner_radius")
        if self.kind == "ellipse" and m.kind is not Kind.EUCLIDEAN:
            raise DomainError("ellipse domains are only defined on the Euclidean preset")

    @property
    def constant_radius(self) -> float | None:
        t = np.linspace(0.0, TWO_PI, 361)
        r = np.asarray(self.rho(t), dtype=float)
        return float(r[0]) if np.ptp(r) < 1e-12 else None


@dataclass(frozen=True, eq=False)
class Grid2DSolution:
    manifold: Manifold
    domain: StarDomain
    s: np.ndarray               # (n_s + 1,)
    theta: np.ndarray           # (n_theta,)
    r: np.ndarray               # (n_s + 1, n_theta)
    u: np.ndarray               # (n_s + 1, n_theta); pole row repeated
    resolution: tuple
    residual_history: tuple
    solver: str

    @property
    def boundary_points(self):
        """Indices of boundary nodes closest to and farthest from the pole."""
        rb = self.r[-1]
        return int(np.argmin(rb)), int(np.argmax(rb))


def _h_parts(m, r):
    return np.asarray(m.h(r), dtype=float) * np.ones_like(r)


def _pcg(A, b, tol, maxiter, x0=None):
    """Jacobi-preconditioned conjugate gradients with a residual log.

    The residual is measured relative to ``|b|`` whatever the start ``x0``.
    """
    dinv = 1.0 / A.diagonal()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    history = []
    if bnorm == 0.0:
        bnorm = 1.0
    r = b - A @ x
    history.append(float(np.linalg.norm(r)) / bnorm)
    if history[-1] <= tol:
        return x, True, history
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(maxiter):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r)) / bnorm
        history.append(rel)
        if rel <= tol:
            # confirm against the true residual
            true_rel = float(np.linalg.norm(b - A @ x)) / bnorm
            history.append(true_rel)
            if true_rel <= tol:
                return x, True, history
            r = b - A @ x
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, False, history


def solve_dirichlet(m: Manifold, dom: StarDomain, f, g_boundary, resolution=(128, 256), *,
                    g_inner=0.0, tol: float = SOLVER_TOL, maxiter: int | None = None
                    ) -> Grid2DSolution:
    """Solve ``-Δu = f(r)`` in the domain with ``u = g(θ)`` on the outer boundary.

    For annular domains ``u = g_inner`` (constant or function of θ) on the
    inner circle.  ``resolution = (n_s, n_θ)`` counts radial intervals and
    angular nodes.
    """
    if m.N != 2:
        raise DomainError("the 2D solver needs N = 2")
    n_s, n_t = (int(x) for x in resolution)
    if n_s < MIN_RESOLUTION[0] or n_t < MIN_RESOLUTION[1]:
        raise DomainError(f"resolution must be at least {MIN_RESOLUTION}, got {(n_s, n_t)}")
    dom.validate(m)
    f = as_field(f)
    ds = 1.0 / n_s
    dt = TWO_PI / n_t
    s = np.arange(n_s + 1) * ds
    theta = np.arange(n_t) * dt
    base = dom.base
    L = np.asarray(dom.rho(theta), dtype=float) - base
    Lp = np.asarray(dom.rho_prime(theta), dtype=float)
    th_half = theta + 0.5 * dt
    Lh = np.asarray(dom.rho(th_half), dtype=float) - base
    Lph = np.asarray(dom.rho_prime(th_half), dtype=float)

    def geo(sv, Lv, Lpv):
        h = _h_parts(m, base + sv * Lv)
        A = (sv**2 * Lpv**2 + h**2) / (Lv * h)
        B = -sv * Lpv / h
        C = Lv / h
        return A, B, C, Lv * h

    pole = not dom.annular
    S_col = s[:, None]
    # A at radial half points i+1/2 (i = 0..n_s-1), node columns
    A_half, _, _, _ = geo((s[:-1] + 0.5 * ds)[:, None], L[None, :], Lp[None, :])
    # C at angular half points j+1/2, node rows
    with np.errstate(divide="ignore", invalid="ignore"):
        _, _, C_half, _ = geo(S_col, Lh[None, :], Lph[None, :])
        _, B_node, _, sqrtg = geo(S_col, L[None, :], Lp[None, :])
    if pole:
        B_node[0] = -Lp / L
        sqrtg[0] = 0.0

    # unknowns: rings i = 1..n_s-1 (all j), plus the pole
    n_ring = n_s - 1
    def idx(i, j):
        return (i - 1) * n_t + (j % n_t)
    n_unk = n_ring * n_t + (1 if pole else 0)
    pole_idx = n_ring * n_t

    # Dirichlet values
    g_vals = (np.asarray(g_boundary(theta), dtype=float) if callable(g_boundary)
              else np.full(n_t, float(g_boundary))) * np.ones(n_t)
    if pole:
        inner_vals = None
    else:
        inner_vals = (np.asarray(g_inner(theta), dtype=float) if callable(g_inner)
                      else np.full(n_t, float(g_inner))) * np.ones(n_t)

    fvals = np.asarray(f(base + S_col * L[None, :]), dtype=float) * np.ones((n_s + 1, n_t))

    rows, cols, vals = [], [], []
    rhs = np.zeros(n_unk)
    I, J = np.meshgrid(np.arange(1, n_s), np.arange(n_t), indexing="ij")
    I = I.ravel()
    J = J.ravel()
    me = idx(I, J)
    Jp = (J + 1) % n_t
    Jm = (J - 1) % n_t
    Ae = A_half[I, J] * dt / ds
    Aw = A_half[I - 1, J] * dt / ds
    Cn = C_half[I, J] * ds / dt
    Cs = C_half[I, Jm] * ds / dt
    rhs[me] = fvals[I, J] * sqrtg[I, J] * ds * dt

    def couple(ii, jj, coef):
        """Add ``coef`` for neighbour (ii, jj); Dirichlet neighbours go to the RHS."""
        inner = ii == 0
        outer = ii == n_s
        live = ~(inner | outer)
        rows.append(me[live]); cols.append(idx(ii[live], jj[live])); vals.append(coef[live])
        if np.any(outer):
            np.subtract.at(rhs, me[outer], coef[outer] * g_vals[jj[outer] % n_t])
        if np.any(inner):
            if pole:
                rows.append(me[inner]); cols.append(np.full(inner.sum(), pole_idx))
                vals.append(coef[inner])
            else:
                np.subtract.at(rhs, me[inner], coef[inner] * inner_vals[jj[inner] % n_t])

    rows.append(me); cols.append(me); vals.append(Ae + Aw + Cn + Cs)
    couple(I + 1, J, -Ae)
    couple(I - 1, J, -Aw)
    couple(I, Jp, -Cn)
    couple(I, Jm, -Cs)
    couple(I + 1, Jp, -(B_node[I + 1, J] + B_node[I, Jp]) / 4)
    couple(I - 1, Jm, -(B_node[I - 1, J] + B_node[I, Jm]) / 4)
    couple(I + 1, Jm, (B_node[I + 1, J] + B_node[I, Jm]) / 4)
    couple(I - 1, Jp, (B_node[I - 1, J] + B_node[I, Jp]) / 4)

    if pole:
        # pole row: transpose of the ring-1 couplings, flux balance of s < ds/2
        j = np.arange(n_t)
        ring1 = idx(np.ones(n_t, dtype=int), j)
        coef = (-A_half[0, j] * dt / ds + (B_node[1, (j + 1) % n_t] - B_node[1, (j - 1) % n_t]) / 4)
        rows.append(np.full(n_t, pole_idx)); cols.append(ring1); vals.append(coef)
        rows.append(np.array([pole_idx])); cols.append(np.array([pole_idx]))
        vals.append(np.array([np.sum(A_half[0] * dt / ds)]))
        # ∫_0^{L ds/2} f(r) h(r) dr per angular sector
        x, w = gauss_legendre(8)
        top = 0.5 * ds * L
        rq = 0.5 * top[:, None] * (x[None, :] + 1.0)
        integrand = np.asarray(f(rq), dtype=float) * _h_parts(m, rq)
        rhs[pole_idx] = float(np.sum(dt * 0.5 * top * (integrand @ w)))

    Amat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n_unk, n_unk))
    Amat.sum_duplicates()
    if maxiter is None:
        maxiter = 20 * (n_s + n_t) + 2000
    # start from the Dirichlet data interpolated along s, so that constant
    # data are reproduced to roundoff
    outer_row = g_vals[None, :]
    if pole:
        lift = np.broadcast_to(outer_row, (n_ring, n_t)).ravel()
        x0 = np.concatenate([lift, [float(np.mean(g_vals))]])
    else:
        x0 = (inner_vals[None, :] + S_col[1:n_s] * (outer_row - inner_vals[None, :])).ravel()
    x, ok, history = _pcg(Amat, rhs, tol, maxiter, x0)
    solver = "pcg-jacobi"
    if not ok:
        x = spsolve(Amat.tocsc(), rhs)
        rel = float(np.linalg.norm(rhs - Amat @ x)) / max(float(np.linalg.norm(rhs)), 1e-300)
        history.append(rel)
        solver = "direct-fallback"
        if not rel <= tol:
            raise SolverError(f"linear solve did not reach relative residual {tol}", history)

    U = np.empty((n_s + 1, n_t))
    U[1:n_s] = x[:n_ring * n_t].reshape(n_ring, n_t)
    U[n_s] = g_vals
    U[0] = x[pole_idx] if pole else inner_vals
    R = base + S_col * L[None, :]
    for arr in (U, R, s, theta):
        arr.flags.writeable = False
    return Grid2DSolution(m, dom, s, theta, R, U, (n_s, n_t), tuple(history), solver)


@dataclass(frozen=True, eq=False)
class BoundaryFlux:
    theta: np.ndarray
    r: np.ndarray
    values: np.ndarray

    def __call__(self, theta):
        t = np.concatenate([self.theta, [TWO_PI]])
        y = np.concatenate([self.values, [self.values[0]]])
        spline = CubicSpline(t, y, bc_type="periodic")
        return spline(np.mod(theta, TWO_PI))


def boundary_flux(sol: Grid2DSolution) -> BoundaryFlux:
    """Outward metric-normal derivative on the outer boundary.

    ``u_ν = (g^{ss} u_s + g^{sθ} u_θ) / sqrt(g^{ss})`` with a one-sided
    second-order ``u_s`` and a centred periodic ``u_θ``.
    """
    m, dom = sol.manifold, sol.domain
    n_s, n_t = sol.resolution
    ds = 1.0 / n_s
    dt = TWO_PI / n_t
    theta = sol.theta
    U = sol.u
    L = np.asarray(dom.rho(theta), dtype=float) - dom.base
    Lp = np.asarray(dom.rho_prime(theta), dtype=float)
    rb = dom.base + L
    h = _h_parts(m, rb)
    u_s = (3 * U[-1] - 4 * U[-2] + U[-3]) / (2 * ds)
    u_t = (np.roll(U[-1], -1) - np.roll(U[-1], 1)) / (2 * dt)
    gss = (Lp**2 + h**2) / (L**2 * h**2)
    gst = -Lp / (L * h**2)
    return BoundaryFlux(theta.copy(), rb, (gss * u_s + gst * u_t) / np.sqrt(gss))


@dataclass(frozen=True, eq=False)
class CounterexampleTable:
    r: np.ndarray
    kappa: np.ndarray          # -u_ν, positive for positive f
    mismatch: np.ndarray       # spread over the 2-4 boundary points of each radius
    solution: Grid2DSolution

    @property
    def consistency(self) -> float:
        return float(np.max(self.mismatch))

    def kappa_field(self):
        """``κ`` (= -u_ν) as a field on ``[b, a]``."""
        from .funcexpr import TabulatedField
        return TabulatedField(self.r, self.kappa, text="<ellipse kappa>")

    def neumann_field(self):
        """The Neumann datum ``u_ν = -κ`` as a field on ``[b, a]``."""
        from .funcexpr import TabulatedField
        return TabulatedField(self.r, -self.kappa, text="<ellipse u_nu>")


def build_counterexample(a: float, b: float, f, resolution=(192, 384), n_r: int = 101,
                         m: Manifold | None = None) -> CounterexampleTable:
    """Solve ``-Δu = f(r)`` on the ellipse ``x²/a² + y²/b² < 1`` with ``u = 0`` and
    tabulate ``κ(r) = -u_ν`` along the boundary, one value per radius in ``[b, a]``.
    """
    from .manifold import euclidean
    m = euclidean(2) if m is None else m
    if m.kind is not Kind.EUCLIDEAN:
        raise DomainError("the ellipse counterexample lives on the Euclidean preset")
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise DomainError("semi-axes must be positive")
    if a < b:
        raise DomainError(f"need a >= b, got a={a}, b={b}")
    f = as_field(f)
    if a == b:
        sol = solve_dirichlet(m, StarDomain.ball(a), f, lambda t: np.zeros_like(t), resolution)
        flux = boundary_flux(sol)
        k = -flux.values
        return CounterexampleTable(np.array([a]), np.array([float(np.mean(k))]),
                                   np.array([float(np.ptp(k))]), sol)
    sol = solve_dirichlet(m, StarDomain.ellipse(a, b), f, lambda t: np.zeros_like(t),
                          resolution)
    flux = boundary_flux(sol)
    r = np.linspace(b, a, n_r)
    sin2 = np.clip(b**2 * (a**2 / r**2 - 1) / (a**2 - b**2), 0.0, 1.0)
    t0 = np.arcsin(np.sqrt(sin2))
    pts = np.stack([t0, math.pi - t0, math.pi + t0, TWO_PI - t0])
    vals = -flux(pts)
    return CounterexampleTable(r, vals.mean(axis=0), np.ptp(vals, axis=0), sol)


def radial_equivalence(sol: Grid2DSolution, p: RadialProfile) -> float:
    """Max nodal difference between a 2D solution and a radial profile."""
    dom = sol.domain
    R = dom.constant_radius
    if R is None:
        raise DomainError("radial comparison needs a geodesic ball or annulus")
    if abs(p.grid[-1] - R) > 1e-12 * max(1.0, R) or abs(p.grid[0] - dom.base) > 1e-12:
        raise DomainError("profile interval does not match the domain")
    spline = CubicHermiteSpline(p.grid, p.u, p.u_prime)
    rr = np.clip(sol.r, p.grid[0], p.grid[-1])
    return float(np.max(np.abs(sol.u - spline(rr))))


def write_solution_csv(sol: Grid2DSolution, path):
    T, S = np.meshgrid(sol.theta, sol.s)
    return write_csv(path, ["theta", "s", "r", "u"], [T, S, sol.r, sol.u])


def write_flux_csv(flux: BoundaryFlux, path):
    return write_csv(path, ["theta", "r", "u_nu"], [flux.theta, flux.r, flux.values])


def write_counterexample_csv(table: CounterexampleTable, path):
    return write_csv(path, ["r", "kappa", "mismatch"], [table.r, table.kappa, table.mismatch])
