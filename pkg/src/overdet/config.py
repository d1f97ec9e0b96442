"""TOML run configuration.

Example::

    kind = "serrin"            # serrin | bernoulli | radial | pde | counterexample
    manifold = "euclidean"     # or a table: [manifold] h = "r + r^3", S = "inf"
    dimension = 2
    f = "2"
    phi = "0"
    kappa = "-r"
    interval = [0.01, 2.0]
    # R0 = 1.0                 # present for the annular (Bernoulli) problem
    output_dir = "out"

    [grid]
    n = 400                    # rigidity grid / profile nodes
    resolution = [128, 256]    # 2D solves (n_s, n_theta)

    [tolerances]
    quad = 1e-13

Kind specific tables: ``[radial]`` (``R``, ``c``), ``[pde]`` (``domain`` =
ball | annulus | ellipse, ``R``, ``R0``, ``a``, ``b``, constant boundary
value ``g`` and inner value ``g_inner``) and ``[counterexample]`` (``a``,
``b``, ``n_r``).
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DomainError
from .funcexpr import ScalarField
from .manifold import Manifold, manifold_from_config
from .radial import OverdeterminedSpec

__all__ = ["RunConfig", "load_config", "parse_config", "KINDS"]

KINDS = ("serrin", "bernoulli", "radial", "pde", "counterexample")


@dataclass
class RunConfig:
    kind: str
    manifold: Manifold
    f: ScalarField
    phi: ScalarField
    kappa: ScalarField
    interval: tuple | None
    R0: float | None
    f_exponent: float | None = None
    interior_sphere: bool = False
    n: int = 400
    resolution: tuple = (128, 256)
    quad_tol: float = 1e-13
    output_dir: Path = Path("out")
    radial: dict = field(default_factory=dict)
    pde: dict = field(default_factory=dict)
    counterexample: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def spec(self) -> OverdeterminedSpec:
        return OverdeterminedSpec(self.manifold, self.f, self.phi, self.kappa,
                                  interval=self.interval, R0=self.R0,
                                  f_exponent=self.f_exponent,
                                  interior_sphere=self.interior_sphere,
                                  tol=self.quad_tol)


def _expr(raw, key, default="0") -> ScalarField:
    value = raw.get(key, default)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = repr(float(value))
    if not isinstance(value, str):
        raise ConfigError(f"'{key}' must be an expression string")
    try:
        return ScalarField.parse(value)
    except ConfigError as exc:
        exc.field_name = key
        raise


def _number(raw, key, default=None, required=False):
    if key not in raw:
        if required:
            raise ConfigError(f"missing required field '{key}'")
        return default
    value = raw[key]
    if isinstance(value, str) and value.lower() in ("inf", "+inf"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    return float(value)


def _table(raw, key):
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def parse_config(raw: dict) -> RunConfig:
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"'kind' must be one of {', '.join(KINDS)}, got {kind!r}")
    if "dimension" not in raw and kind not in ("pde", "counterexample"):
        raise ConfigError("missing required field 'dimension'")
    dimension = raw.get("dimension", 2)
    m = manifold_from_config(raw.get("manifold", "euclidean"), dimension)

    interval = raw.get("interval")
    if interval is not None:
        if (not isinstance(interval, list) or len(interval) != 2
                or not all(isinstance(x, (int, float)) for x in interval)):
            raise ConfigError("'interval' must be a pair [r_lo, r_hi]")
        interval = (float(interval[0]), float(interval[1]))
        if not 0 < interval[0] < interval[1] < m.S:
            raise DomainError(f"interval {interval} must lie in (0, S={m.S})")

    R0 = _number(raw, "R0")
    if kind == "bernoulli" and R0 is None:
        raise ConfigError("kind 'bernoulli' needs 'R0'")
    if kind == "serrin" and R0 is not None:
        raise ConfigError("kind 'serrin' must not set 'R0'")
    if kind in ("serrin", "bernoulli") and interval is None and not math.isfinite(m.S):
        raise ConfigError(f"kind '{kind}' needs 'interval' on a manifold with S = inf")

    grid = _table(raw, "grid")
    n = int(grid.get("n", 400))
    res = grid.get("resolution", [128, 256])
    if not (isinstance(res, list) and len(res) == 2 and all(isinstance(x, int) for x in res)):
        raise ConfigError("[grid] resolution must be a pair of integers")
    tols = _table(raw, "tolerances")

    out = Path(raw.get("output_dir", "out"))

    cfg = RunConfig(
        kind=kind, manifold=m,
        f=_expr(raw, "f"), phi=_expr(raw, "phi"), kappa=_expr(raw, "kappa"),
        interval=interval, R0=R0,
        f_exponent=_number(raw, "f_exponent"),
        interior_sphere=bool(raw.get("interior_sphere", False)),
        n=n, resolution=(int(res[0]), int(res[1])),
        quad_tol=float(tols.get("quad", 1e-13)),
        output_dir=out,
        radial=_table(raw, "radial"), pde=_table(raw, "pde"),
        counterexample=_table(raw, "counterexample"),
        raw=raw,
    )
    _check_kind(cfg)
    return cfg


def _check_kind(cfg: RunConfig):
    if cfg.kind == "radial" and "R" not in cfg.radial:
        raise ConfigError("[radial] needs 'R'")
    if cfg.kind == "pde":
        dom = cfg.pde.get("domain", "ball")
        need = {"ball": ("R",), "annulus": ("R0", "R"), "ellipse": ("a", "b")}
        if dom not in need:
            raise ConfigError(f"[pde] domain must be ball, annulus or ellipse, got {dom!r}")
        for key in need[dom]:
            if key not in cfg.pde:
                raise ConfigError(f"[pde] domain '{dom}' needs '{key}'")
    if cfg.kind == "counterexample":
        for key in ("a", "b"):
            if key not in cfg.counterexample:
                raise ConfigError(f"[counterexample] needs '{key}'")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(raw)
