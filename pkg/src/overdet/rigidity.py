"""Rigidity classification for the Serrin and Bernoulli type overdetermined problems.

Given the data (f, φ, κ) the classifier evaluates the hypothesis function

    g = φ' - v            (ball problem)       g = φ' - w(·, φ)        (annulus)

and the defect ``d = v - κ`` resp. ``d = w(·, φ) - κ`` on a grid, locates the
zeros of ``d`` and decides which conclusion the rigidity theorems support.
All checks are made on grid values, so they certify the discrete data and
nothing beyond it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .radial import BoundaryLayerWarning, OverdeterminedSpec, graded_grid, v_of, w_of
from .reporting import to_json, to_keyvalue

__all__ = [
    "Verdict", "Monotone", "RigidityReport", "QConditionResult", "CorollaryReport",
    "serrin_check", "bernoulli_check", "q_condition_check", "comparison_corollary_check",
    "working_grid", "EXIT_CODES",
]

ZERO_TOL = 1e-9       # |d| below this at a node counts as a zero
SIGN_TOL = 1e-9       # slack in "d <= 0" / "d >= 0"
MONO_TOL = 1e-10      # slack in monotonicity
HYP_TOL = 1e-10       # slack in the hypothesis g >= 0
DEGEN_TOL = 1e-12     # "vanishes" threshold for kappa and the case (c) function
DEGEN_RUN = 3         # consecutive nodes for "vanishes on an interval"
ROOT_XTOL = 1e-10


class Verdict(str, Enum):
    RADIAL_AND_BALL = "RadialAndBall"
    RADIAL_ONLY = "RadialOnly"
    INCONCLUSIVE = "Inconclusive"
    UNSOLVABLE = "Unsolvable"
    HYPOTHESIS_FAILS = "HypothesisFails"


EXIT_CODES = {
    Verdict.RADIAL_AND_BALL: 0,
    Verdict.RADIAL_ONLY: 1,
    Verdict.INCONCLUSIVE: 2,
    Verdict.UNSOLVABLE: 3,
    Verdict.HYPOTHESIS_FAILS: 4,
}


class Monotone(str, Enum):
    NONINCREASING = "nonincreasing"
    NONDECREASING = "nondecreasing"
    NONE = "none"


@dataclass
class RigidityReport:
    problem_kind: str
    hypothesis_holds: bool
    hypothesis_strict: bool
    defect_zeros: list
    cond1: bool
    cond2: bool
    monotone_d: Monotone
    kappa_nonvanishing: bool
    f_nondegenerate: bool
    verdict: Verdict
    witness: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    interval: tuple = ()
    grid_size: int = 0

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]

    def as_dict(self) -> dict:
        return {
            "problem_kind": self.problem_kind,
            "hypothesis_holds": self.hypothesis_holds,
            "hypothesis_strict": self.hypothesis_strict,
            "defect_zeros": list(self.defect_zeros),
            "cond1": self.cond1,
            "cond2": self.cond2,
            "monotone_d": self.monotone_d.value,
            "kappa_nonvanishing": self.kappa_nonvanishing,
            "f_nondegenerate": self.f_nondegenerate,
            "verdict": self.verdict.value,
            "witness": dict(self.witness),
        }

    def diagnostics(self) -> dict:
        return {"interval": list(self.interval), "grid_size": self.grid_size,
                "exit_code": self.exit_code, "notes": list(self.notes)}

    def to_json(self) -> str:
        return to_json({"rigidity": self.as_dict(), "diagnostics": self.diagnostics()})

    def to_text(self) -> str:
        d = self.as_dict()
        witness = d.pop("witness")
        diag = self.diagnostics()
        notes = diag.pop("notes")
        blocks = {"rigidity": d, "witness": witness, "diagnostics": diag}
        if notes:
            blocks["notes"] = {f"note{i + 1}": n for i, n in enumerate(notes)}
        return to_keyvalue(blocks)


def working_grid(spec: OverdeterminedSpec, n: int) -> np.ndarray:
    """Grid on the working interval.

    Without an explicit interval the upper end is ``S (1 - 1e-3)`` (finite S
    only) and the lower end ``1e-3 * r_hi`` for the ball problem or
    ``R0 + 1e-3 (r_hi - R0)`` for the annulus, since neither the pole nor the
    inner sphere is reachable on the grid.
    """
    if n < 16:
        raise DomainError("rigidity grids need at least 16 nodes")
    S = spec.manifold.S
    if spec.interval is not None:
        lo, hi = spec.interval
        if spec.annular and lo == spec.R0:
            lo = spec.R0 + 1e-3 * (hi - spec.R0)
    else:
        if not np.isfinite(S):
            raise DomainError("an explicit working interval is required when S is infinite")
        hi = S * (1 - 1e-3)
        lo = spec.R0 + 1e-3 * (hi - spec.R0) if spec.annular else 1e-3 * hi
    return graded_grid(lo, hi, n)


def _first(mask, grid):
    idx = np.flatnonzero(mask)
    return float(grid[idx[0]]) if idx.size else None


def _runs(mask, length):
    """Start indices of runs of ``True`` at least ``length`` long."""
    starts = []
    count = 0
    for i, m in enumerate(mask):
        count = count + 1 if m else 0
        if count == length:
            starts.append(i - length + 1)
    return starts


def _zeros(dfun, grid, d):
    """Sign-change roots (refined by Brent's method) plus grid touch-zeros."""
    touch = np.abs(d) < ZERO_TOL
    zeros = [float(r) for r in grid[touch]]
    for i in range(len(grid) - 1):
        if touch[i] or touch[i + 1]:
            continue
        if d[i] * d[i + 1] < 0:
            zeros.append(float(brentq(dfun, grid[i], grid[i + 1], xtol=ROOT_XTOL,
                                      rtol=4 * np.finfo(float).eps)))
    return sorted(zeros), touch


def _monotone(d):
    diff = np.diff(d)
    scale = MONO_TOL * max(1.0, float(np.max(np.abs(d))))
    if np.all(diff >= -scale):
        return Monotone.NONDECREASING, None
    if np.all(diff <= scale):
        return Monotone.NONINCREASING, None
    return Monotone.NONE, None


def _classify(kind, spec, grid, g, d, dfun, case_c_values, notes):
    witness = {}
    gscale = HYP_TOL * max(1.0, float(np.max(np.abs(g))))
    hyp_bad = g < -gscale
    hypothesis_holds = not np.any(hyp_bad)
    if not hypothesis_holds:
        witness["hypothesis"] = _first(hyp_bad, grid)
    hypothesis_strict = bool(np.all(g > gscale))
    if hypothesis_holds and not hypothesis_strict:
        witness["hypothesis_strict"] = _first(g <= gscale, grid)

    zeros, touch = _zeros(dfun, grid, d)

    if zeros:
        left = grid <= zeros[-1]
        bad1 = left & (d > SIGN_TOL)
        right = grid >= zeros[0]
        bad2 = right & (d < -SIGN_TOL)
    else:
        bad1 = bad2 = np.zeros_like(grid, dtype=bool)
    cond1 = not np.any(bad1)
    cond2 = not np.any(bad2)
    if not cond1:
        witness["cond1"] = _first(bad1, grid)
    if not cond2:
        witness["cond2"] = _first(bad2, grid)

    monotone_d, _ = _monotone(d)
    if monotone_d is Monotone.NONE:
        diff = np.diff(d)
        up = np.flatnonzero(diff > 0)
        down = np.flatnonzero(diff < 0)
        witness["monotone_d"] = [float(grid[up[0]]), float(grid[down[0]])]

    kappa = np.asarray(spec.kappa(grid), dtype=float) * np.ones_like(grid)
    small_kappa = np.abs(kappa) <= DEGEN_TOL
    kappa_nonvanishing = not np.any(small_kappa)
    if not kappa_nonvanishing:
        witness["kappa_nonvanishing"] = _first(small_kappa, grid)

    runs = _runs(np.abs(case_c_values) < DEGEN_TOL, DEGEN_RUN)
    f_nondegenerate = not runs
    if runs:
        witness["f_nondegenerate"] = float(grid[runs[0]])

    partial_vanishing = bool(_runs(touch, DEGEN_RUN)) and not np.all(touch)

    if not hypothesis_holds:
        verdict = Verdict.HYPOTHESIS_FAILS
    elif not zeros:
        verdict = Verdict.UNSOLVABLE
    elif not (cond1 or cond2):
        verdict = Verdict.INCONCLUSIVE
    else:
        ball_bc = monotone_d is not Monotone.NONE and (kappa_nonvanishing or f_nondegenerate)
        if hypothesis_strict:
            verdict = Verdict.RADIAL_AND_BALL
        elif ball_bc and partial_vanishing:
            verdict = Verdict.INCONCLUSIVE
            notes.append("defect vanishes on a proper subinterval; the ball conclusion "
                         "through kappa_nonvanishing or f_nondegenerate is not decided there")
        elif ball_bc:
            verdict = Verdict.RADIAL_AND_BALL
        else:
            verdict = Verdict.RADIAL_ONLY
        if not cond1:
            notes.append("radial conclusion uses cond2, which also needs the interior "
                         "sphere condition on the domain: "
                         + ("declared" if getattr(spec, "interior_sphere", False)
                            else "assumed, not declared"))

    return RigidityReport(
        problem_kind=kind,
        hypothesis_holds=hypothesis_holds,
        hypothesis_strict=hypothesis_strict,
        defect_zeros=zeros,
        cond1=cond1,
        cond2=cond2,
        monotone_d=monotone_d,
        kappa_nonvanishing=kappa_nonvanishing,
        f_nondegenerate=f_nondegenerate,
        verdict=verdict,
        witness=witness,
        notes=notes,
        interval=(float(grid[0]), float(grid[-1])),
        grid_size=len(grid),
    )


def _broadcast(field_, r):
    return np.asarray(field_(r), dtype=float) * np.ones_like(np.asarray(r, dtype=float))


def serrin_check(spec: OverdeterminedSpec, n: int = 400) -> RigidityReport:
    """Classify the ball problem ``-Δu = f``, ``u = φ``, ``u_ν = κ`` on ``∂Ω``."""
    if spec.annular:
        raise DomainError("serrin_check needs a spec without R0")
    grid = working_grid(spec, n)
    v = v_of(spec, grid)
    g = _broadcast(spec.phi.derivative(), grid) - v
    d = v - _broadcast(spec.kappa, grid)

    def dfun(r):
        return v_of(spec, r) - float(spec.kappa(r))

    F = spec.F(grid)
    return _classify("Serrin", spec, grid, g, d, dfun, F, [])


def bernoulli_check(spec: OverdeterminedSpec, n: int = 400) -> RigidityReport:
    """Classify the annular problem with ``u = 0`` on ``∂B_{R0}``."""
    if not spec.annular:
        raise DomainError("bernoulli_check needs a spec with R0")
    grid = working_grid(spec, n)
    phi = _broadcast(spec.phi, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryLayerWarning)
        w = w_of(spec, grid, phi)
    g = _broadcast(spec.phi.derivative(), grid) - w
    d = w - _broadcast(spec.kappa, grid)

    def dfun(r):
        return w_of(spec, r, float(spec.phi(r))) - float(spec.kappa(r))

    f = _broadcast(spec.f, grid)
    notes = []
    if grid[0] - spec.R0 < 1e-6 * spec.R0:
        notes.append("grid enters the boundary layer next to R0")
    return _classify("Bernoulli", spec, grid, g, d, dfun, f, notes)


@dataclass
class QConditionResult:
    passed: bool
    witness: tuple | None          # first (r1, r2) with Q(r2) > Q(r1)
    derivative_checked: bool
    derivative_passed: bool | None
    derivative_witness: float | None

    def __bool__(self) -> bool:
        return self.passed


def _q_values(spec, grid):
    hp = spec.manifold.h_pow(grid, spec.N - 1)
    return hp * _broadcast(spec.kappa, grid) + spec.F0(grid)


def q_condition_check(spec: OverdeterminedSpec, n: int = 400) -> QConditionResult:
    """``Q = h^{N-1} κ + ∫_{R0}^r h^{N-1} f`` must be non-increasing; when κ has a
    derivative, also ``-(h^{N-1} κ)' >= h^{N-1} f`` pointwise."""
    if not spec.annular:
        raise DomainError("q_condition_check needs a spec with R0")
    grid = working_grid(spec, n)
    Q = _q_values(spec, grid)
    slack = MONO_TOL * max(1.0, float(np.max(np.abs(Q))))
    up = np.flatnonzero(np.diff(Q) > slack)
    witness = (float(grid[up[0]]), float(grid[up[0] + 1])) if up.size else None
    passed = witness is None

    deriv_ok = None
    deriv_witness = None
    checked = False
    try:
        dk = spec.kappa.derivative()
        m = spec.manifold
        N = spec.N
        kap = _broadcast(spec.kappa, grid)
        hp = m.h_pow(grid, N - 1)
        dprod = (N - 1) * m.h_pow(grid, N - 2) * m.h_prime(grid) * kap + hp * _broadcast(dk, grid)
        lhs = -dprod
        rhs = hp * _broadcast(spec.f, grid)
        dslack = 1e-8 * max(1.0, float(np.max(np.abs(rhs))), float(np.max(np.abs(lhs))))
        bad = lhs < rhs - dslack
        checked = True
        deriv_ok = not np.any(bad)
        deriv_witness = _first(bad, grid)
    except (DomainError, NotImplementedError):
        pass
    if checked:
        passed = passed and deriv_ok
    return QConditionResult(passed, witness, checked, deriv_ok, deriv_witness)


@dataclass
class CorollaryReport:
    derivative_inequality: bool
    f_nonpositive: bool
    c_nonpositive: bool
    u_min_ok: bool
    applies: bool
    ball: bool
    witness: dict = field(default_factory=dict)

    @property
    def conclusion(self) -> str:
        if not self.applies:
            return "not applicable"
        return "radial and geodesic ball" if self.ball else "radial"


def comparison_corollary_check(spec: OverdeterminedSpec, c: float, u_min: float,
                               n: int = 400) -> CorollaryReport:
    """Constant-data Bernoulli corollary for ``f <= 0`` and solutions with ``u >= c``."""
    if not spec.annular:
        raise DomainError("comparison_corollary_check needs a spec with R0")
    grid = working_grid(spec, n)
    witness = {}
    q = q_condition_check(spec, n)
    deriv = bool(q.derivative_checked and q.derivative_passed)
    if not deriv:
        witness["derivative_inequality"] = q.derivative_witness
    f = _broadcast(spec.f, grid)
    f_ok = bool(np.all(f <= 0))
    if not f_ok:
        witness["f_nonpositive"] = _first(f > 0, grid)
    c_ok = c <= 0
    u_ok = u_min >= c
    if not u_ok:
        witness["u_min"] = u_min
    applies = deriv and f_ok and c_ok and u_ok
    return CorollaryReport(deriv, f_ok, c_ok, u_ok, applies, applies and c < 0, witness)
