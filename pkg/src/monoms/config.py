"""Case files: a flat ``key = value`` schema under a single ``[case]`` section.

Example::

    [case]
    name = smoke
    grid.counts = 10, 10
    grid.extent = 1, 1
    perm = uniform
    perm.value = 1
    scheme = tpfa
    ratio = 5, 5
    mode = one-step

Every key is listed in :data:`SCHEMA`; unknown keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError

PERM_KINDS = ("uniform", "lognormal", "rotated", "spe10")
SCHEMES = ("tpfa", "mpfa-o")
RESTRICTIONS = ("cv", "galerkin")
REPAIRS = ("off", "coarse", "fine", "both")
MODES = ("one-step", "iterative")


@dataclass(frozen=True)
class CaseConfig:
    name: str
    grid_counts: tuple
    grid_extent: tuple
    grid_perturb: float = 0.0
    grid_seed: int = 0
    perm: str = "uniform"
    perm_value: float = 1.0
    perm_path: str | None = None
    perm_layers: tuple = (85, 85)
    perm_shape: tuple = (60, 220, 85)
    perm_isotropic: bool = False
    perm_theta: float = 0.0
    perm_k1: float = 1.0
    perm_k2: float = 1.0
    perm_seed: int = 1
    perm_mu: float = 0.0
    perm_sigma: float = 1.0
    scheme: str = "tpfa"
    mpfa_boundary: str = "tpfa"
    p_left: float = 1.0
    p_right: float = 0.0
    ratio: tuple = ()
    restriction: str = "cv"
    repair: str = "off"
    epsilon: float = 0.01
    weight: float = 1.0
    fine_repair_override: bool = False
    basis_omega: float = 2.0 / 3.0
    basis_tol: float = 1e-3
    basis_max_sweeps: int = 250
    mode: str = "one-step"
    tol: float = 1e-8
    max_cycles: int = 300
    smoothing_steps: int = 1
    finalize_cv: bool = False
    baseline: bool = True
    reference_limit: int = 250_000
    output: str | None = None

    @property
    def dim(self) -> int:
        return len(self.grid_counts)

    @property
    def coarse_repair(self) -> bool:
        return self.repair in ("coarse", "both")

    @property
    def fine_repair(self) -> bool:
        return self.repair in ("fine", "both")

    def replace(self, **changes) -> "CaseConfig":
        return validate(dataclasses.replace(self, **changes))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _layers(text):
    parts = text.replace("-", " ").replace(",", " ").split()
    vals = tuple(int(v) for v in parts)
    if len(vals) == 1:
        return (vals[0], vals[0])
    if len(vals) != 2:
        raise ValueError("expected one layer or a range first-last")
    return vals


# file key -> (dataclass field, parser)
SCHEMA = {
    "name": ("name", str),
    "grid.counts": ("grid_counts", _ints),
    "grid.extent": ("grid_extent", _floats),
    "grid.perturb": ("grid_perturb", float),
    "grid.seed": ("grid_seed", int),
    "perm": ("perm", str),
    "perm.value": ("perm_value", float),
    "perm.path": ("perm_path", str),
    "perm.layers": ("perm_layers", _layers),
    "perm.shape": ("perm_shape", _ints),
    "perm.isotropic": ("perm_isotropic", _bool),
    "perm.theta": ("perm_theta", float),
    "perm.k1": ("perm_k1", float),
    "perm.k2": ("perm_k2", float),
    "perm.seed": ("perm_seed", int),
    "perm.mu": ("perm_mu", float),
    "perm.sigma": ("perm_sigma", float),
    "scheme": ("scheme", str),
    "mpfa.boundary": ("mpfa_boundary", str),
    "bc.left": ("p_left", float),
    "bc.right": ("p_right", float),
    "ratio": ("ratio", _ints),
    "restriction": ("restriction", str),
    "repair": ("repair", str),
    "repair.epsilon": ("epsilon", float),
    "repair.weight": ("weight", float),
    "repair.fine_override": ("fine_repair_override", _bool),
    "basis.omega": ("basis_omega", float),
    "basis.tol": ("basis_tol", float),
    "basis.max_sweeps": ("basis_max_sweeps", int),
    "mode": ("mode", str),
    "solve.tol": ("tol", float),
    "solve.max_cycles": ("max_cycles", int),
    "solve.smoothing_steps": ("smoothing_steps", int),
    "solve.finalize_cv": ("finalize_cv", _bool),
    "baseline": ("baseline", _bool),
    "reference_limit": ("reference_limit", int),
    "output": ("output", str),
}
REQUIRED = ("name", "grid.counts", "grid.extent", "ratio")


def _check(cond, message):
    if not cond:
        raise ConfigError(message)


def validate(cfg: CaseConfig) -> CaseConfig:
    """Cross-field checks; returns ``cfg`` unchanged when it is consistent."""
    _check(cfg.name.strip() != "", "name must not be empty")
    _check(cfg.dim in (2, 3), f"grid.counts needs 2 or 3 entries, got {len(cfg.grid_counts)}")
    _check(len(cfg.grid_extent) == cfg.dim, "grid.extent and grid.counts differ in length")
    _check(all(c > 0 for c in cfg.grid_counts), "grid.counts must be positive")
    _check(all(e > 0 for e in cfg.grid_extent), "grid.extent must be positive")
    _check(len(cfg.ratio) == cfg.dim, "ratio and grid.counts differ in length")
    _check(all(r > 0 for r in cfg.ratio), "ratio must be positive")
    _check(0 <= cfg.grid_perturb < 0.5, "grid.perturb must lie in [0, 0.5)")
    _check(cfg.grid_perturb == 0 or cfg.dim == 2, "grid.perturb is only available in 2-D")
    _check(cfg.perm in PERM_KINDS, f"perm must be one of {PERM_KINDS}, got {cfg.perm!r}")
    _check(cfg.perm != "spe10" or cfg.perm_path, "perm = spe10 needs perm.path")
    _check(cfg.perm != "rotated" or cfg.dim == 2, "perm = rotated is only available in 2-D")
    _check(cfg.perm_sigma >= 0, "perm.sigma must be non-negative")
    _check(cfg.perm_value > 0 and cfg.perm_k1 > 0 and cfg.perm_k2 > 0, "permeabilities must be positive")
    first, last = cfg.perm_layers
    _check(len(cfg.perm_shape) == 3 and all(v > 0 for v in cfg.perm_shape), "perm.shape needs three positive sizes")
    _check(1 <= first <= last, "perm.layers must be an increasing 1-based range")
    if cfg.perm == "spe10":
        want = 2 if first == last else 3
        _check(cfg.dim == want, f"perm.layers {first}-{last} needs a {want}-D grid")
    _check(cfg.scheme in SCHEMES, f"scheme must be one of {SCHEMES}, got {cfg.scheme!r}")
    _check(cfg.scheme != "mpfa-o" or cfg.dim == 2, "mpfa-o requires a 2-D grid")
    _check(cfg.mpfa_boundary in ("tpfa", "interaction"), "mpfa.boundary must be tpfa or interaction")
    _check(cfg.restriction in RESTRICTIONS, f"restriction must be one of {RESTRICTIONS}")
    _check(cfg.repair in REPAIRS, f"repair must be one of {REPAIRS}, got {cfg.repair!r}")
    _check(not cfg.fine_repair or cfg.scheme == "mpfa-o" or cfg.fine_repair_override,
           "fine repair requires scheme = mpfa-o (or repair.fine_override = true)")
    _check(cfg.epsilon >= 0, "repair.epsilon must be non-negative")
    _check(cfg.weight > 0, "repair.weight must be positive")
    _check(0 < cfg.basis_omega <= 1, "basis.omega must lie in (0, 1]")
    _check(cfg.basis_tol >= 0, "basis.tol must be non-negative")
    _check(cfg.basis_max_sweeps >= 0, "basis.max_sweeps must be non-negative")
    _check(cfg.mode in MODES, f"mode must be one of {MODES}, got {cfg.mode!r}")
    _check(cfg.tol > 0, "solve.tol must be positive")
    _check(cfg.max_cycles > 0, "solve.max_cycles must be positive")
    _check(cfg.smoothing_steps >= 0, "solve.smoothing_steps must be non-negative")
    return cfg


def parse_config(text: str, base_dir=None) -> CaseConfig:
    """Parse case text; relative ``perm.path`` values resolve against ``base_dir``."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed case file: {exc}") from None
    sections = parser.sections()
    if sections != ["case"]:
        raise ConfigError(f"expected exactly one [case] section, found {sections}")
    raw = dict(parser["case"])
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}", key)
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", key)
    values = {}
    for key, text_value in raw.items():
        attr, conv = SCHEMA[key]
        try:
            values[attr] = conv(text_value.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", key) from None
    if values.get("perm_path") and base_dir is not None:
        path = Path(values["perm_path"]).expanduser()
        if not path.is_absolute():
            values["perm_path"] = str(Path(base_dir) / path)
    return validate(CaseConfig(**values))


def load_config(path) -> CaseConfig:
    path = Path(path)
    if not path.is_file():
        bundled = bundled_case_path(path.name)
        if bundled is None:
            raise ConfigError(f"case file {str(path)!r} not found")
        path = bundled
    return parse_config(path.read_text(), base_dir=path.parent)


def bundled_cases() -> dict:
    """Names and paths of the case files shipped with the package."""
    root = resources.files("monoms") / "cases"
    return {p.name[:-4]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".ini")}


def bundled_case_path(name: str):
    name = name[:-4] if name.endswith(".ini") else name
    return bundled_cases().get(name)


__all__ = [
    "CaseConfig",
    "SCHEMA",
    "parse_config",
    "load_config",
    "validate",
    "bundled_cases",
    "bundled_case_path",
]
