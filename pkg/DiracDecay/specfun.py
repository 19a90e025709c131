"""
Special functions and scalar coefficients behind every kernel:
- Bessel J0/J1, Y0/Y1 and the Hankel functions H^(1), H^(2) of order 0 and 1.
- The threshold coefficients g±(λ) and g1±(λ) of the small-argument expansion
  of the free Schrödinger resolvent.

Values come from scipy.special (Cephes for J/Y, AMOS for H); both switch
between series and asymptotic forms internally. Everything here accepts
scalars or numpy arrays and is safe to call from several threads.
"""
import numpy as np
from scipy import special

from .errors import DomainError

EULER_GAMMA = float(np.euler_gamma)
_ORDERS = (0, 1)


def sign_value(sign) -> int:
    """Normalizes '+', '-', +1, -1 to +1 / -1."""
    if sign in ('+', 1, +1.0, 'plus'):
        return 1
    if sign in ('-', -1, -1.0, 'minus'):
        return -1
    raise DomainError(f"Sign must be '+' or '-', got {sign!r}")


def _check_order(order):
    if order not in _ORDERS:
        raise DomainError(f"Only orders 0 and 1 are supported, got {order!r}")


def _as_real(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _unwrap(value):
    # 0-d arrays back to Python scalars
    if np.ndim(value) == 0:
        return value.item() if hasattr(value, 'item') else value
    return value


def bessel_j(order: int, x):
    _check_order(order)
    arr = _as_real(x)
    if np.any(arr < 0):
        raise DomainError("bessel_j is defined here for x >= 0 only")
    out = special.j0(arr) if order == 0 else special.j1(arr)
    return _unwrap(out)


def bessel_y(order: int, x):
    _check_order(order)
    arr = _as_real(x)
    if np.any(arr <= 0):
        raise DomainError("bessel_y needs x > 0 (log singularity at the origin)")
    out = special.y0(arr) if order == 0 else special.y1(arr)
    return _unwrap(out)


def hankel1(order: int, x):
    """H^(1)_order(x) = J_order(x) + i Y_order(x) for real x > 0."""
    _check_order(order)
    arr = _as_real(x)
    if np.any(arr <= 0):
        raise DomainError("hankel1 needs x > 0 (log singularity at the origin)")
    return _unwrap(special.hankel1(order, arr))


def hankel2(order: int, x):
    """Incoming counterpart, the complex conjugate of hankel1 for real x."""
    return _unwrap(np.conj(hankel1(order, x)))


def hankel(sign, order: int, x):
    return hankel1(order, x) if sign_value(sign) > 0 else hankel2(order, x)


def _check_lambda(lam):
    arr = _as_real(lam, "lambda")
    if np.any(arr <= 0):
        raise DomainError("lambda must be > 0 on the logarithmic branch")
    return arr


def g_pm(sign, lam):
    """g±(λ) = -(log(λ/2) + γ_E)/(2π) ± i/4."""
    s = sign_value(sign)
    arr = _check_lambda(lam)
    value = -(np.log(arr / 2.0) + EULER_GAMMA) / (2.0 * np.pi) + s * 0.25j
    return _unwrap(value)


def g1_pm(sign, lam):
    """g1±(λ) = -λ²/4 g±(λ) - λ²/(8π)."""
    arr = _check_lambda(lam)
    value = -arr ** 2 / 4.0 * np.asarray(g_pm(sign, arr)) - arr ** 2 / (8.0 * np.pi)
    return _unwrap(value)


def branch_sign(sign, lam):
    """
    Effective branch for a signed spectral parameter: the outgoing limit at
    λ < 0 uses the incoming Schrödinger resolvent, since (λ + i0)² = λ² - i0.
    """
    s = sign_value(sign)
    arr = _as_real(lam, "lambda")
    if np.any(arr == 0):
        raise DomainError("branch is undefined at lambda = 0")
    return _unwrap(s * np.sign(arr).astype(int))


def g_branch(sign, lam):
    """g^{s·sgn λ}(|λ|) for real λ ≠ 0 (scalar λ only)."""
    sigma = branch_sign(sign, lam)
    return g_pm(sigma, abs(float(lam)))


def free_resolvent_small_argument(sign, lam, r, terms: int = 2):
    """
    Small-argument expansion of (±i/4)H0^(±)(λr):
    terms=2 gives g±(λ) + G0(r), terms=4 adds g1±(λ) r² + λ² r² log r / (8π).
    """
    r_arr = _as_real(r, "r")
    if np.any(r_arr <= 0):
        raise DomainError("r must be > 0")
    lam_arr = _check_lambda(lam)
    value = np.asarray(g_pm(sign, lam_arr)) - np.log(r_arr) / (2.0 * np.pi)
    if terms == 4:
        value = (value + np.asarray(g1_pm(sign, lam_arr)) * r_arr ** 2
                 + lam_arr ** 2 * r_arr ** 2 * np.log(r_arr) / (8.0 * np.pi))
    elif terms != 2:
        raise DomainError("terms must be 2 or 4")
    return _unwrap(value)
