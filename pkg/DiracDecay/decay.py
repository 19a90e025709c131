"""
Decay-rate and boundedness verdicts for kernel time series.
- fit_decay: log-log least squares with the slope's standard error.
- check_log_bounded: the 1/log t class of the finite-rank term.
- window_stability: refit on the upper half of the window.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, ValidationError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 5
LOG_BOUND_RATIO = 5.0


def default_times(t_min: float = 4.0, t_max: float = 256.0, ratio: float = np.sqrt(2.0)):
    """Geometric t-grid from t_min to t_max inclusive."""
    count = int(np.floor(np.log(t_max / t_min) / np.log(ratio) + 1e-9)) + 1
    return t_min * ratio ** np.arange(count)


@dataclass
class DecaySeries:
    gamma: float
    t: np.ndarray
    norms: np.ndarray
    provenance: str = ""
    fit_exponent: float = float('nan')
    fit_stderr: float = float('nan')
    window: tuple = field(default=(None, None))

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.norms = np.asarray(self.norms, dtype=float)
        if self.t.shape != self.norms.shape:
            raise ValidationError("Decay series needs one norm per time")
        if np.any(np.diff(self.t) <= 0):
            raise ValidationError("Decay series times must be strictly increasing")

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.norms.tolist()))

    def fit(self, t_min: float | None = None, t_max: float | None = None) -> "DecaySeries":
        self.fit_exponent, self.fit_stderr = fit_decay(self.samples, t_min, t_max)
        self.window = (t_min, t_max)
        return self


def _window(samples, t_min, t_max):
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    t, norms = data[:, 0], data[:, 1]
    keep = np.ones_like(t, dtype=bool)
    if t_min is not None:
        keep &= t >= t_min
    if t_max is not None:
        keep &= t <= t_max
    return t[keep], norms[keep]


def fit_decay(samples, t_min: float | None = None, t_max: float | None = None):
    """Slope of log(norm) against log(t) over the window, with its standard error."""
    t, norms = _window(samples, t_min, t_max)
    if len(t) < MIN_SAMPLES:
        raise ValidationError(f"fit_decay needs at least {MIN_SAMPLES} samples in the window, "
                              f"got {len(t)}")
    if np.any(norms <= 0) or np.any(t <= 0):
        raise DomainError("fit_decay needs positive times and norms")
    result = stats.linregress(np.log(t), np.log(norms))
    logger.debug("Fitted exponent %.4f ± %.4f over %d samples", result.slope, result.stderr,
                 len(t))
    return float(result.slope), float(result.stderr)


@dataclass(frozen=True)
class LogBoundVerdict:
    ratio: float
    passed: bool


def check_log_bounded(samples, max_ratio: float = LOG_BOUND_RATIO) -> LogBoundVerdict:
    """max/min of norm·log t over the samples with t ≥ 2; passes iff below max_ratio."""
    t, norms = _window(samples, 2.0, None)
    if len(t) == 0:
        return LogBoundVerdict(float('nan'), False)
    scaled = norms * np.log(t)
    low = np.min(scaled)
    ratio = float(np.max(scaled) / low) if low > 0 else float('inf')
    return LogBoundVerdict(ratio, ratio < max_ratio)


def series_from_kernels(kernels, gamma: float, provenance: str | None = None) -> DecaySeries:
    """Weighted sup norms of a list of kernels (anything with .t and .supnorm)."""
    ordered = sorted(kernels, key=lambda k: k.t)
    t = [k.t for k in ordered]
    norms = [k.supnorm(gamma) for k in ordered]
    if provenance is None:
        provenance = getattr(ordered[0], 'provenance', 'finite_rank') if ordered else ""
    return DecaySeries(gamma=gamma, t=t, norms=norms, provenance=provenance)


def window_stability(series: DecaySeries, t_min: float | None = None,
                     t_max: float | None = None) -> dict:
    """
    Refit on the upper half (in log t) of the window; stable iff the exponents
    differ by less than 2× the full-window standard error.
    """
    t, _ = _window(series.samples, t_min, t_max)
    if len(t) < MIN_SAMPLES:
        raise ValidationError("window_stability needs a fittable window")
    full, stderr = fit_decay(series.samples, t_min, t_max)
    middle = float(np.exp(0.5 * (np.log(t[0]) + np.log(t[-1]))))
    try:
        half, half_err = fit_decay(series.samples, middle, t_max)
    except ValidationError:
        half, half_err = fit_decay(series.samples, t[-MIN_SAMPLES], t_max)
    difference = abs(half - full)
    stable = difference < 2.0 * max(stderr, 1e-12)
    if not stable:
        logger.warning("Window halving moved the exponent by %.3f (stderr %.3f)", difference,
                       stderr)
    return {'exponent': full, 'stderr': stderr, 'half_exponent': half, 'half_stderr': half_err,
            'difference': difference, 'stable': stable}
