"""Adaptive Gauss-Kronrod quadrature with power-law endpoint singularities.

An endpoint behaviour ``(t - a)**alpha`` with ``alpha > -1`` is removed by the
substitution ``t = a + (b - a) * s**p`` with ``p = ceil(2 / (1 + alpha))``
before adaptive bisection.  :class:`CumulativeIntegral` tabulates running
integrals on a graded grid so that nested integrals cost one table build plus
a fixed Gauss-Legendre rule per query.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConvergenceError, DomainError

__all__ = [
    "Integrand", "QuadratureResult", "IntegrationError", "IntegrandEvaluationError",
    "NonIntegrableError", "integrate", "integrate_weighted_h", "gauss_legendre",
    "estimate_endpoint_exponent", "substitution_power", "CumulativeIntegral",
]

EPS = np.finfo(float).eps

# 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK dqk21).
_XGK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
])
_WGK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are every other Kronrod node
_GAUSS_IDX = np.arange(1, 21, 2)
GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(10)[1]


class QuadratureResult(NamedTuple):
    value: float
    error: float


class IntegrationError(ConvergenceError):
    """Adaptive refinement hit its subdivision limit."""

    def __init__(self, message, value, error):
        self.value = value
        self.error = error
        super().__init__(f"{message} (best estimate {value!r}, error {error:.3g})")


class IntegrandEvaluationError(DomainError):
    """The integrand returned a non-finite value at an interior node."""


class NonIntegrableError(DomainError):
    """Endpoint exponent <= -1: the integral diverges."""


@dataclass(frozen=True)
class Integrand:
    """Vectorised evaluator plus optional endpoint exponent hints."""

    evaluator: Callable
    singular_left: float | None = None
    singular_right: float | None = None

    def __post_init__(self):
        for hint in (self.singular_left, self.singular_right):
            if hint is not None and not hint > -1:
                raise NonIntegrableError(f"endpoint exponent {hint} is not > -1")


def substitution_power(alpha: float | None) -> int:
    if alpha is None:
        return 1
    if not alpha > -1:
        raise NonIntegrableError(f"endpoint exponent {alpha} is not > -1")
    return max(1, math.ceil(2.0 / (1.0 + alpha) - 1e-9))


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _sample(func, t):
    y = np.asarray(func(t), dtype=float)
    if y.shape != t.shape:
        y = np.broadcast_to(y, t.shape)
    if not np.all(np.isfinite(y)):
        bad = t[~np.isfinite(y)]
        raise IntegrandEvaluationError(f"non-finite integrand value at t={bad.flat[0]!r}")
    return y


def _gk21(func, lo: np.ndarray, hi: np.ndarray):
    """Kronrod value, error estimate and |f| integral on each [lo, hi]."""
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    t = centre[:, None] + half[:, None] * KRONROD_NODES[None, :]
    y = _sample(func, t)
    resk = y @ KRONROD_WEIGHTS
    resg = y[:, _GAUSS_IDX] @ GAUSS_WEIGHTS
    resabs = np.abs(y) @ KRONROD_WEIGHTS
    resasc = np.abs(y - 0.5 * resk[:, None]) @ KRONROD_WEIGHTS
    ah = np.abs(half)
    value = resk * half
    err = np.abs(resk - resg) * ah
    resasc = resasc * ah
    resabs = resabs * ah
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    floor = 50.0 * EPS * resabs
    return value, np.maximum(err, floor), floor


def _adaptive(func, a, b, tol, atol, max_subdivisions):
    value, err, floor = _gk21(func, np.array([a]), np.array([b]))
    heap = [(-err[0], a, b, value[0], floor[0])]
    total, total_err = value[0], err[0]
    n_int = 1
    while True:
        if total_err <= max(atol, tol * abs(total)):
            break
        if all(-e <= fl * (1 + 1e-12) for e, _, _, _, fl in heap):
            break  # every interval is at its roundoff floor
        if n_int >= max_subdivisions:
            raise IntegrationError(
                f"no convergence after {max_subdivisions} subdivisions", float(total), float(total_err))
        # bisect the worst few intervals together so each callback is vectorised
        worst = -heap[0][0]
        batch = []
        while heap and len(batch) < 8 and -heap[0][0] >= 0.25 * worst:
            batch.append(heapq.heappop(heap))
        keep = []
        los, his = [], []
        for item in batch:
            e = -item[0]
            if e <= item[4] * (1 + 1e-12):
                keep.append(item)
                continue
            m = 0.5 * (item[1] + item[2])
            los += [item[1], m]
            his += [m, item[2]]
            total -= item[3]
            total_err -= e
        for item in keep:
            heapq.heappush(heap, item)
        if not los:
            break
        v, e, fl = _gk21(func, np.array(los), np.array(his))
        for k in range(len(los)):
            heapq.heappush(heap, (-e[k], los[k], his[k], v[k], fl[k]))
        total += v.sum()
        total_err += e.sum()
        n_int += len(los) // 2
        # guard against drift of the running sums
        if n_int % 256 == 0:
            total = math.fsum(item[3] for item in heap)
            total_err = math.fsum(-item[0] for item in heap)
    total = math.fsum(item[3] for item in heap)
    total_err = math.fsum(-item[0] for item in heap)
    return float(total), float(total_err)


def _substituted(func, endpoint, direction, span, p):
    """Integrand after ``t = endpoint + direction * span * s**p`` on [0, 1].

    Where ``s**p`` is lost to rounding the node lands on the singular
    endpoint itself; the transformed integrand vanishes there because
    ``p (1 + alpha) >= 2``, so those samples contribute zero.
    """

    def g(s):
        s = np.asarray(s, dtype=float)
        t = endpoint + direction * span * s ** p
        jac = (p * span) * s ** (p - 1)
        out = np.zeros(s.shape)
        ok = t != endpoint
        if np.any(ok):
            vals = np.asarray(func(t[ok]), dtype=float)
            out[ok] = np.broadcast_to(vals, t[ok].shape) * jac[ok]
        return out

    return g


def _left_substituted(func, a, b, p):
    if p == 1:
        return func, a, b
    return _substituted(func, a, 1.0, b - a, p), 0.0, 1.0


def _right_substituted(func, a, b, p):
    if p == 1:
        return func, a, b
    return _substituted(func, b, -1.0, b - a, p), 0.0, 1.0


def integrate(g, a: float, b: float, tol: float = 1e-10, *, singular_left=None,
              singular_right=None, atol: float | None = None,
              max_subdivisions: int = 20000) -> QuadratureResult:
    """Integrate ``g`` over ``[a, b]``.

    Parameters
    ----------
    g : Integrand or callable
        Must accept a numpy array of abscissae.
    tol : float
        Relative tolerance, at least 1e-13.  Convergence means
        ``error <= max(atol, tol * |value|)`` with ``atol`` defaulting to
        ``tol``, which implies ``error <= tol * (1 + |value|)``.
    singular_left, singular_right : float, optional
        Exponent ``alpha`` of a ``(t - endpoint)**alpha`` behaviour.
        Ignored when ``g`` is an :class:`Integrand` carrying its own hints.
        At a right endpoint ``b`` the distance ``b - t`` is only resolved to
        about ``eps * |b|``, which limits accuracy for strong singularities.
    """
    if isinstance(g, Integrand):
        func, singular_left, singular_right = g.evaluator, g.singular_left, g.singular_right
    else:
        func = g
        Integrand(func, singular_left, singular_right)  # validates the hints
    if not a < b:
        raise DomainError(f"integration bounds must satisfy a < b, got [{a}, {b}]")
    if tol < 1e-13:
        raise DomainError(f"tolerance {tol} below the supported 1e-13")
    atol = tol if atol is None else atol

    pl = substitution_power(singular_left)
    pr = substitution_power(singular_right)
    if pl > 1 and pr > 1:
        mid = 0.5 * (a + b)
        left = integrate(func, a, mid, tol, singular_left=singular_left, atol=0.5 * atol,
                         max_subdivisions=max_subdivisions)
        right = integrate(func, mid, b, tol, singular_right=singular_right, atol=0.5 * atol,
                          max_subdivisions=max_subdivisions)
        return QuadratureResult(left.value + right.value, left.error + right.error)
    if pl > 1:
        gg, lo, hi = _left_substituted(func, a, b, pl)
    elif pr > 1:
        gg, lo, hi = _right_substituted(func, a, b, pr)
    else:
        gg, lo, hi = func, a, b
    return QuadratureResult(*_adaptive(gg, lo, hi, tol, atol, max_subdivisions))


def estimate_endpoint_exponent(func, x0: float, scale: float = 1.0, side: int = 1):
    """Estimate ``alpha`` in ``|func(x0 + side*t)| ~ t**alpha`` as ``t -> 0+``.

    Returns ``None`` when the samples show no blow-up (alpha >= ~0) or are not
    usable (zeros, non-finite values).
    """
    ts = scale * np.array([1e-6, 1e-7, 1e-8])
    try:
        vals = np.abs(np.asarray(func(x0 + side * ts), dtype=float))
    except DomainError:
        return None
    if vals.shape != ts.shape or not np.all(np.isfinite(vals)) or np.any(vals == 0):
        return None
    slopes = np.log(vals[:-1] / vals[1:]) / np.log(ts[:-1] / ts[1:])
    alpha = float(slopes.min())
    if alpha > -1e-3:
        return None
    # snap to a clean value when the two slopes agree (pure power laws)
    if abs(slopes[0] - slopes[1]) < 1e-6:
        alpha = round(alpha, 9)
    return alpha


def integrate_weighted_h(m, f, a: float, b: float, tol: float = 1e-10,
                         f_exponent: float | None = None) -> float:
    """``∫_a^b h(t)^(N-1) f(t) dt`` with the pole singularity handled at ``a = 0``."""
    if not 0 <= a < b < m.S:
        raise DomainError(f"need 0 <= a < b < S, got [{a}, {b}] with S={m.S}")
    power = m.N - 1

    def g(t):
        return m.h_pow(t, power) * f(t)

    hint = None
    if a == 0:
        alpha_f = f_exponent if f_exponent is not None else estimate_endpoint_exponent(f, 0.0, b)
        if alpha_f is not None:
            hint = power + alpha_f
            if hint <= -1 + 1e-6:
                raise NonIntegrableError(
                    f"h^(N-1) f ~ t^{hint:.6g} near the pole is not integrable")
    return integrate(g, a, b, tol, singular_left=hint).value


class CumulativeIntegral:
    """Running integral ``x -> ∫_a^x g`` for ``x >= a``.

    Nodes are graded as ``a + (b - a) * (i/n)**grading`` so that they crowd at
    the lower endpoint, where singular behaviour lives.  Panel integrals come
    from a vectorised Gauss-Legendre/Kronrod pair; panels where the two
    disagree are redone adaptively.  Queries add a Gauss-Legendre increment
    from the nearest node below; queries past ``b`` fall back to adaptive
    integration.  The table is read-only after construction.
    """

    def __init__(self, func, a: float, b: float, *, nodes: int = 512, grading: float = 1.5,
                 singular_exponent: float | None = None, tol: float = 1e-13, order: int = 30):
        if not a < b:
            raise DomainError(f"empty table range [{a}, {b}]")
        self.func = func
        self.a = float(a)
        self.b = float(b)
        self.tol = max(tol, 1e-13)
        self.order = order
        self.alpha = singular_exponent
        self.p = substitution_power(singular_exponent)
        i = np.arange(nodes + 1) / nodes
        self.nodes = self.a + (self.b - self.a) * i ** grading
        self.nodes[-1] = self.b
        panels = self._panel_values(self.nodes[:-1], self.nodes[1:])
        self.cumulative = np.concatenate([[0.0], np.cumsum(panels)])
        self.cumulative.flags.writeable = False
        self.nodes.flags.writeable = False

    def _gl(self, lo, hi, first):
        """Gauss-Legendre integral on each [lo, hi]; ``first`` marks panels
        starting at the singular endpoint ``a``."""
        x, w = gauss_legendre(self.order)
        u = 0.5 * (x + 1.0)
        span = hi - lo
        if self.p > 1:
            # power substitution only where the panel touches the endpoint
            t_plain = lo[:, None] + span[:, None] * u[None, :]
            t_sub = lo[:, None] + span[:, None] * (u ** self.p)[None, :]
            jac_sub = self.p * u ** (self.p - 1)
            t = np.where(first[:, None], t_sub, t_plain)
            jac = np.where(first[:, None], jac_sub[None, :], 1.0)
        else:
            t = lo[:, None] + span[:, None] * u[None, :]
            jac = 1.0
        y = _sample(self.func, t) * jac
        return 0.5 * span * (y @ w)

    def _panel_values(self, lo, hi):
        first = lo == self.a
        gl = self._gl(lo, hi, first)
        # accuracy is judged against the size of the whole table, so panels
        # where the integrand nearly vanishes do not chase roundoff
        self.atol = self.tol * float(np.sum(np.abs(gl))) / len(lo)
        smooth = ~first
        vals = gl.copy()
        if np.any(smooth):
            kr, _, floor = _gk21(self.func, lo[smooth], hi[smooth])
            scale = np.abs(kr) + floor / (50 * EPS)
            redo = np.flatnonzero(smooth)[np.abs(kr - gl[smooth]) > 1e3 * EPS * scale + 1e-300]
        else:
            redo = np.array([], dtype=int)
        redo = set(redo.tolist()) | set(np.flatnonzero(first).tolist())
        for k in sorted(redo):
            hint = self.alpha if lo[k] == self.a else None
            vals[k] = integrate(self.func, lo[k], hi[k], self.tol, singular_left=hint,
                                atol=self.atol).value
        return vals

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        flat = np.atleast_1d(arr).ravel()
        if np.any(flat < self.a) or np.any(np.isnan(flat)):
            raise DomainError(f"cumulative integral queried below its start {self.a}")
        out = np.empty_like(flat)
        inside = flat <= self.b
        if np.any(inside):
            xi = flat[inside]
            k = np.clip(np.searchsorted(self.nodes, xi, side="right") - 1, 0, len(self.nodes) - 2)
            lo = self.nodes[k]
            inc = np.zeros_like(xi)
            nz = xi > lo
            if np.any(nz):
                inc[nz] = self._gl(lo[nz], xi[nz], lo[nz] == self.a)
            out[inside] = self.cumulative[k] + inc
        for idx in np.flatnonzero(~inside):
            out[idx] = self.cumulative[-1] + integrate(self.func, self.b, flat[idx], self.tol,
                                                       atol=self.atol).value
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)
