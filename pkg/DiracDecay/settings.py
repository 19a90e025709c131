"""
Run configuration:
- Potential family and parameters
- Grid, cutoff and contour resolution
- Evolution times, weights γ, probes and oracle box
- Tuning range and threshold tolerances
Settings live in a YAML file merged over DEFAULT_CONFIG; `to_run_config`
turns them into a validated, immutable RunConfig.
"""
import copy
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .decay import default_times
from .discretize import PotentialSpec
from .errors import ConfigError, DiracDecayError
from .freeops import CutoffSpec
from .threshold import TUNE_TARGETS, Tolerances
from .utils import config_hash, deep_merge, dump_yaml, to_plain

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "potential": {
        "family": "gaussian_matrix",     # zero | gaussian_matrix | polynomial
        "amplitude": [[-1.0, 0.0], [0.0, -1.0]],   # Hermitian 2x2; complex entries as "a+bj"
        "width": 1.0,
        "decay_exponent": 3.0,           # β for the polynomial family
        "coupling": 1.0,
    },
    "grid": {"n_per_axis": 32, "L": 6.0},
    "cutoff": {"lambda1": 0.1},
    "contour": {
        "lambda_min": 1e-6,
        "ratio": 1.3,
        "points_per_period": 16,
        "resolution_cap": 800,
        "half_period": True,
    },
    "evolution": {
        "t_min": 4.0,
        "t_max": 256.0,
        "t_ratio": float(np.sqrt(2.0)),
        "gammas": [0.0],
        "subtract_Ft": True,
        "born": False,
        "probe_rho_max": 40.0,
        "probe_step": 1.0,
        "check_resolution": False,
    },
    "oracle": {
        "enabled": False,
        "half_width": 300.0,
        "points": 512,
        "method": "chebyshev",           # eigh | chebyshev
        "band": "low",                   # low | high | full
        "epsilon": 0.01,
        "times": [5.0, 20.0],
    },
    "tune": {"s_min": 0.1, "s_max": 50.0, "tol": 1e-8, "target": "any"},
    "tolerances": {
        "kernel_rel": 1e-6,
        "gap_factor": 10.0,
        "s2_rel": 1e-6,
        "cond_max": 1e12,
        "moment_rel": 1e-4,
        "residual_max": 0.05,
    },
    "run": {"serial": False, "max_workers": None},
    "output": {"directory": "dirac_runs", "html": False, "theme": "light"},
}


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec
    n_per_axis: int
    L: float
    cutoff: CutoffSpec
    lambda_min: float
    contour_ratio: float
    points_per_period: int
    resolution_cap: int
    half_period: bool
    t_values: tuple
    gammas: tuple
    subtract_Ft: bool
    born: bool
    probe_rho_max: float
    probe_step: float
    check_resolution: bool
    oracle_enabled: bool
    oracle_half_width: float
    oracle_points: int
    oracle_method: str
    oracle_band: str
    oracle_epsilon: float
    oracle_times: tuple
    s_range: tuple
    tune_tol: float
    tune_target: str
    tolerances: Tolerances
    serial: bool
    max_workers: int | None
    output_dir: str
    html: bool
    theme: str
    config_hash: str


def _complex_matrix(value) -> np.ndarray:
    try:
        return np.array([[complex(str(entry).replace(' ', '')) for entry in row] for row in value])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"potential.amplitude is not a 2x2 numeric matrix: {e}") from e


def _number(section: dict, key: str, name: str) -> float:
    # PyYAML reads 1e-6 (no decimal point) as a string
    value = section[key]
    if isinstance(value, bool):
        raise ConfigError(f"{name}.{key} must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}.{key} must be a number, got {value!r}") from None


def _positive(section: dict, key: str, name: str) -> float:
    value = _number(section, key, name)
    if not value > 0:
        raise ConfigError(f"{name}.{key} must be positive, got {value!r}")
    return value


class RunSettings:
    def __init__(self, config_path: str | None = None):
        self.config_path = config_path
        self.settings = copy.deepcopy(DEFAULT_CONFIG)
        self.unknown_keys = []
        if config_path:
            self._load_settings()

    def _load_settings(self):
        """Merges the YAML (or JSON) file over the defaults."""
        if not os.path.exists(self.config_path):
            raise ConfigError(f"Config file not found: {self.config_path}")
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                loaded = yaml.safe_load(f) or {}
        except (yaml.YAMLError, IOError) as e:
            raise ConfigError(f"Error loading config from {self.config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {self.config_path} must hold a mapping")
        self.settings = deep_merge(DEFAULT_CONFIG, loaded, self.unknown_keys)
        for key in self.unknown_keys:
            logger.warning("Ignoring unknown config key '%s'", key)

    def save_settings(self, path: str | None = None) -> bool:
        path = path or self.config_path
        if not path:
            return False
        try:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, 'w', encoding='utf-8') as f:
                f.write(dump_yaml(self.settings))
            return True
        except IOError as e:
            logger.error("Error saving config to %s: %s", path, e)
            return False

    def get(self, dotted_key: str, default=None):
        """Gets a value by 'section.key'."""
        node = self.settings
        for part in dotted_key.split('.'):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, dotted_key: str, value):
        section, _, key = dotted_key.rpartition('.')
        node = self.settings.get(section) if section else self.settings
        if not isinstance(node, dict) or key not in node:
            logger.warning("Attempting to set unknown config key '%s'", dotted_key)
            return
        node[key] = value

    def get_all(self) -> dict:
        return copy.deepcopy(self.settings)

    def to_json(self) -> str:
        return json.dumps(to_plain(self.settings), indent=4)

    def hash(self) -> str:
        return config_hash(self.settings)

    def apply_overrides(self, grid_n=None, grid_L=None, lambda1=None, out=None, serial=None):
        """Command-line overrides; None leaves the value untouched."""
        for key, value in (("grid.n_per_axis", grid_n), ("grid.L", grid_L),
                           ("cutoff.lambda1", lambda1), ("output.directory", out),
                           ("run.serial", serial)):
            if value is not None:
                self.set(key, value)

    def to_run_config(self) -> RunConfig:
        s = self.settings
        pot, grid, ev, orc, tune = (s['potential'], s['grid'], s['evolution'], s['oracle'],
                                    s['tune'])
        try:
            potential = PotentialSpec(
                family=pot['family'], amplitude=_complex_matrix(pot['amplitude']),
                width=float(pot['width']), decay_exponent=float(pot['decay_exponent']),
                coupling=float(pot['coupling']))
            cutoff = CutoffSpec(float(s['cutoff']['lambda1']))
            tolerances = Tolerances(**{k: float(v) for k, v in s['tolerances'].items()})
        except (DiracDecayError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

        n = grid['n_per_axis']
        if not isinstance(n, int) or n < 8 or n % 2:
            raise ConfigError(f"grid.n_per_axis must be an even integer >= 8, got {n!r}")
        L = _positive(grid, 'L', 'grid')
        lambda_min = _number(s['contour'], 'lambda_min', 'contour')
        contour_ratio = _number(s['contour'], 'ratio', 'contour')
        if not 0 < lambda_min < cutoff.lambda1:
            raise ConfigError("contour.lambda_min must lie in (0, lambda1)")
        if not contour_ratio > 1:
            raise ConfigError("contour.ratio must exceed 1")

        t_min, t_max = _positive(ev, 't_min', 'evolution'), _positive(ev, 't_max', 'evolution')
        t_ratio = _number(ev, 't_ratio', 'evolution')
        if not t_min < t_max or not t_ratio > 1:
            raise ConfigError("evolution needs t_min < t_max and t_ratio > 1")
        gammas = tuple(float(g) for g in ev['gammas'])
        if not gammas or any(not 0 <= g < 1.5 for g in gammas):
            raise ConfigError(f"evolution.gammas must lie in [0, 3/2), got {gammas}")

        if orc['method'] not in ("eigh", "chebyshev") or orc['band'] not in ("low", "high", "full"):
            raise ConfigError("oracle.method must be eigh|chebyshev, oracle.band low|high|full")
        points = orc['points']
        if not isinstance(points, int) or points < 4 or points % 2:
            raise ConfigError("oracle.points must be an even integer >= 4")

        s_min, s_max = _number(tune, 's_min', 'tune'), _number(tune, 's_max', 'tune')
        if not 0 < s_min < s_max:
            raise ConfigError("tune.s_min and tune.s_max must be ordered and positive")
        if tune['target'] not in TUNE_TARGETS:
            raise ConfigError(f"tune.target must be one of {TUNE_TARGETS}")

        return RunConfig(
            potential=potential, n_per_axis=n, L=L, cutoff=cutoff,
            lambda_min=lambda_min, contour_ratio=contour_ratio,
            points_per_period=int(s['contour']['points_per_period']),
            resolution_cap=int(s['contour']['resolution_cap']),
            half_period=bool(s['contour']['half_period']),
            t_values=tuple(default_times(t_min, t_max, t_ratio).tolist()),
            gammas=gammas, subtract_Ft=bool(ev['subtract_Ft']), born=bool(ev['born']),
            probe_rho_max=_positive(ev, 'probe_rho_max', 'evolution'),
            probe_step=_positive(ev, 'probe_step', 'evolution'),
            check_resolution=bool(ev['check_resolution']),
            oracle_enabled=bool(orc['enabled']),
            oracle_half_width=_positive(orc, 'half_width', 'oracle'), oracle_points=points,
            oracle_method=orc['method'], oracle_band=orc['band'],
            oracle_epsilon=_positive(orc, 'epsilon', 'oracle'),
            oracle_times=tuple(float(t) for t in orc['times']),
            s_range=(s_min, s_max), tune_tol=_number(tune, 'tol', 'tune'),
            tune_target=tune['target'],
            tolerances=tolerances, serial=bool(s['run']['serial']),
            max_workers=s['run']['max_workers'],
            output_dir=str(s['output']['directory']), html=bool(s['output']['html']),
            theme=str(s['output']['theme']), config_hash=self.hash())
