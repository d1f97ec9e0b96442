"""Model manifolds ``[0, S) x_h S^{N-1}`` described by their warping function."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DomainError
from .funcexpr import ScalarField, as_field

__all__ = [
    "Kind", "Manifold", "euclidean", "hyperbolic", "spherical", "custom",
    "h_eval", "h_prime_eval", "validate_warping", "WarpingReport", "manifold_from_config",
]

INF = math.inf


class Kind(str, Enum):
    EUCLIDEAN = "Euclidean"
    HYPERBOLIC = "Hyperbolic"
    SPHERICAL = "Spherical"
    CUSTOM = "Custom"


@dataclass(frozen=True, eq=False)
class Manifold:
    """Warped product with metric ``dr^2 + h(r)^2 g_{S^{N-1}}``.

    ``S`` is the upper end of the radial interval; ``math.inf`` stands for an
    unbounded one.  Grid based routines always need a finite working bound
    from the caller.
    """

    kind: Kind
    h: ScalarField
    N: int
    S: float = INF
    h_prime: ScalarField = field(default=None)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {self.N}")
        if not self.S > 0:
            raise DomainError(f"S must be positive, got {self.S}")
        if self.h_prime is None:
            object.__setattr__(self, "h_prime", self.h.derivative())

    def _check(self, r):
        arr = np.asarray(r, dtype=float)
        if np.any(arr < 0) or np.any(arr >= self.S) or np.any(np.isnan(arr)):
            raise DomainError(f"r outside [0, {self.S}) for {self.kind.value} manifold")
        return arr

    def h_pow(self, r, p):
        """``h(r)**p``, the weight that recurs in every radial formula."""
        return np.power(self.h(r), p)

    def describe(self) -> str:
        return f"{self.kind.value}(h={self.h.text}, N={self.N}, S={self.S})"


def euclidean(N: int) -> Manifold:
    return Manifold(Kind.EUCLIDEAN, ScalarField.parse("r"), N, INF)


def hyperbolic(N: int) -> Manifold:
    return Manifold(Kind.HYPERBOLIC, ScalarField.parse("sinh(r)"), N, INF)


def spherical(N: int) -> Manifold:
    return Manifold(Kind.SPHERICAL, ScalarField.parse("sin(r)"), N, math.pi)


def custom(h, N: int, S: float = INF) -> Manifold:
    return Manifold(Kind.CUSTOM, as_field(h), N, S)


def h_eval(m: Manifold, r):
    """Warping function ``h(r)`` for ``0 <= r < S``."""
    return m.h(m._check(r) if np.ndim(r) else float(m._check(r)))


def h_prime_eval(m: Manifold, r):
    """``h'(r)``; symbolic derivative for custom warping functions."""
    return m.h_prime(m._check(r) if np.ndim(r) else float(m._check(r)))


@dataclass
class WarpingReport:
    checks: dict = field(default_factory=dict)  # name -> (passed, witness r or None)

    @property
    def ok(self) -> bool:
        return all(p for p, _ in self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, (p, _) in self.checks.items() if not p]


def validate_warping(m: Manifold, grid) -> WarpingReport:
    """Check positivity of h on ``grid`` and the pole conditions h(0)=0, h'(0)=1.

    Higher even derivatives at the pole are not examined.
    """
    report = WarpingReport()
    grid = np.asarray(grid, dtype=float)

    inside = grid[(grid > 0) & (grid < m.S)]
    try:
        hv = m.h(inside)
        bad = np.flatnonzero(~(hv > 0))
        report.checks["positive"] = (bad.size == 0, float(inside[bad[0]]) if bad.size else None)
    except DomainError:
        report.checks["positive"] = (False, None)

    try:
        h0 = float(m.h(0.0))
        report.checks["h(0)=0"] = (abs(h0) <= 1e-12, None if abs(h0) <= 1e-12 else 0.0)
    except DomainError:
        report.checks["h(0)=0"] = (False, 0.0)

    witness = None
    for eps in (1e-3, 1e-4, 1e-5):
        try:
            ratio = float(m.h(eps)) / eps
        except DomainError:
            ratio = math.nan
        if not abs(ratio - 1.0) <= 1e-4:
            witness = eps
            break
    report.checks["h'(0)=1"] = (witness is None, witness)

    outside = grid[(grid < 0) | (grid >= m.S)]
    report.checks["grid within [0,S)"] = (outside.size == 0, float(outside[0]) if outside.size else None)
    return report


_PRESETS = {"euclidean": euclidean, "hyperbolic": hyperbolic, "spherical": spherical}


def manifold_from_config(spec, dimension) -> Manifold:
    """Build a manifold from the ``manifold`` / ``dimension`` config entries."""
    try:
        N = int(dimension)
    except (TypeError, ValueError):
        raise ConfigError(f"dimension must be an integer, got {dimension!r}") from None
    if isinstance(spec, str):
        try:
            return _PRESETS[spec.lower()](N)
        except KeyError:
            raise ConfigError(f"unknown manifold preset {spec!r}") from None
    if isinstance(spec, dict):
        if "h" not in spec:
            raise ConfigError("custom manifold needs an 'h' expression")
        S = spec.get("S", "inf")
        if isinstance(S, str):
            if S.lower() not in ("inf", "+inf", "infinity"):
                raise ConfigError(f"S must be a number or 'inf', got {S!r}")
            S = INF
        return custom(ScalarField.parse(str(spec["h"])), N, float(S))
    raise ConfigError(f"cannot interpret manifold entry {spec!r}")
