"""Problem configuration: one JSON document per study.

Example::

    {
      "_note": "doubling map, A(x) = x",
      "map": {"inverse_branches": ["x/2", "(x+1)/2"], "lambda": 0.5,
              "orientation": "preserving"},
      "potential": {"A": "x"},
      "numerics": {"grid_n": 128, "beta_schedule": [8, 16, 32, 64]},
      "anchors": {"x_bar": 1.0, "omega_bar": "|0"}
    }

Any object may carry a ``"_note"`` key, which is ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dynamics import ExpandingMapSpec
from .expr import ExpressionError
from .symbolic import EventuallyPeriodicPoint, parse_point
from .transfer import PotentialSpec

__all__ = ["ConfigError", "Numerics", "ProblemConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """The configuration document is malformed."""


@dataclass(frozen=True)
class Numerics:
    grid_n: int = 128
    eigen_tol: float = 1e-13
    max_iter: int = 5000
    kernel_tol: float = 1e-10
    depth_cap: int = 64
    series_depth: int = 40
    table_depth: int = 10
    beta_schedule: tuple[float, ...] = (8.0, 16.0, 32.0, 64.0)
    max_period: int = 8
    N_bar: int = 2
    tie_tol: float = 1e-7
    refine_tol: float = 1e-6
    scan_points: int = 129
    subaction_tol: float = 1e-12
    mane_eps: float = 1e-3
    mane_max_n: int = 20


@dataclass(frozen=True)
class ProblemConfig:
    branches: tuple[str, ...]
    lam: float
    orientation: str
    potential_kind: str
    potential_src: str
    numerics: Numerics = field(default_factory=Numerics)
    x_bar: float = 1.0
    omega_bar: str = "|0"

    def fmap(self) -> ExpandingMapSpec:
        return ExpandingMapSpec(self.branches, self.lam, self.orientation)

    def potential(self) -> PotentialSpec:
        return PotentialSpec(**{self.potential_kind: self.potential_src})

    def omega_point(self, d: int) -> EventuallyPeriodicPoint:
        return parse_point(self.omega_bar, d)


def _strip(obj: dict, where: str, allowed: set[str]) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    out = {k: v for k, v in obj.items() if k != "_note"}
    unknown = set(out) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return out


def parse_config(doc: dict) -> ProblemConfig:
    """Validate a decoded JSON document and build a :class:`ProblemConfig`."""
    top = _strip(doc, "config", {"map", "potential", "numerics", "anchors"})
    for key in ("map", "potential"):
        if key not in top:
            raise ConfigError(f"config: missing {key!r}")
    mp = _strip(top["map"], "map", {"inverse_branches", "lambda", "orientation"})
    if "inverse_branches" not in mp or "lambda" not in mp:
        raise ConfigError("map: need 'inverse_branches' and 'lambda'")
    pot = _strip(top["potential"], "potential", {"g", "A"})
    if len(pot) != 1:
        raise ConfigError("potential: give exactly one of 'g' or 'A'")
    (kind, src), = pot.items()
    num_fields = {f.name for f in fields(Numerics)}
    num = _strip(top.get("numerics", {}), "numerics", num_fields)
    if "beta_schedule" in num:
        num["beta_schedule"] = tuple(float(b) for b in num["beta_schedule"])
    try:
        numerics = Numerics(**num)
    except TypeError as exc:
        raise ConfigError(f"numerics: {exc}") from exc
    anc = _strip(top.get("anchors", {}), "anchors", {"x_bar", "omega_bar"})
    cfg = ProblemConfig(
        branches=tuple(str(b) for b in mp["inverse_branches"]),
        lam=float(mp["lambda"]),
        orientation=str(mp.get("orientation", "preserving")),
        potential_kind=kind,
        potential_src=str(src),
        numerics=numerics,
        x_bar=float(anc.get("x_bar", 1.0)),
        omega_bar=str(anc.get("omega_bar", "|0")),
    )
    try:
        fmap = cfg.fmap()
        cfg.potential().validate(1024)
        cfg.omega_point(fmap.d)
    except (ExpressionError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if not 0.0 <= cfg.x_bar <= 1.0:
        raise ConfigError("anchors: x_bar must lie in [0, 1]")
    return cfg


def load_config(path: str | Path) -> ProblemConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)
