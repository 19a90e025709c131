"""
Closed-form kernels of the free massless Dirac operator D0 = -iα·∇ in the plane:
- Dirac matrices and the algebra check.
- Free Schrödinger and Dirac resolvent kernels (outgoing '+' / incoming '-').
- The spectral density kernel μ0 and the smooth cutoff χ.
- The low-energy expansion kernels G00, G10, G11, G21, G20 and G0, G1, G2.

Every 2×2 kernel used here is translation invariant and of the form
    K(x, y) = a(|x-y|) I + b(|x-y|) α·e,   e = (x-y)/|x-y|,
so the *_radial helpers return the pair (a, b) and `radial_block` builds the
blocks. Points are arrays of shape (..., 2); results broadcast.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularPointError, ValidationError
from .specfun import bessel_j, branch_sign, hankel, sign_value

IDENTITY = np.eye(2, dtype=complex)
ALPHA1 = np.array([[0, 1], [1, 0]], dtype=complex)
ALPHA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
BETA = np.array([[1, 0], [0, -1]], dtype=complex)

EXPANSION_TAGS = ("G00", "G10", "G11", "G21", "G20", "G0", "G1", "G2")
SINGULAR_TAGS = ("G00", "G10", "G0")


@dataclass(frozen=True)
class CutoffSpec:
    lambda1: float = 0.1

    def __post_init__(self):
        if not np.isfinite(self.lambda1) or self.lambda1 <= 0:
            raise ValidationError(f"lambda1 must be positive, got {self.lambda1}")

    @property
    def support(self) -> float:
        return 2.0 * self.lambda1


def dirac_algebra_check() -> bool:
    """All nine anticommutators of {β, α1, α2} equal 2δ_jk I exactly."""
    mats = (BETA, ALPHA1, ALPHA2)
    for j, a in enumerate(mats):
        for k, b in enumerate(mats):
            expected = 2.0 * IDENTITY if j == k else np.zeros((2, 2), dtype=complex)
            if not np.array_equal(a @ b + b @ a, expected):
                return False
    return True


def alpha_dot(v) -> np.ndarray:
    """α·v for vectors of shape (..., 2), returning blocks of shape (..., 2, 2)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 1] = v[..., 0] - 1j * v[..., 1]
    out[..., 1, 0] = v[..., 0] + 1j * v[..., 1]
    return out


def bracket(y) -> np.ndarray:
    """⟨y⟩ = (1 + |y|²)^{1/2} for points of shape (..., 2)."""
    y = np.asarray(y, dtype=float)
    return np.sqrt(1.0 + np.sum(y ** 2, axis=-1))


def bracket_radius(r) -> np.ndarray:
    return np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2)


def separation(x, y):
    """Returns (r, e) with r = |x-y| and e the unit vector (zero where r = 0)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt(np.sum(d ** 2, axis=-1))
    with np.errstate(invalid='ignore', divide='ignore'):
        e = np.where(r[..., None] > 0, d / np.where(r > 0, r, 1.0)[..., None], 0.0)
    return r, e


def radial_block(a, b, e) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return a[..., None, None] * IDENTITY + b[..., None, None] * alpha_dot(e)


def block_norm(a, b):
    """Operator norm of a I + b α·e with |e| = 1."""
    return np.maximum(np.abs(a + b), np.abs(a - b))


def _reject_coincident(r, what):
    if np.any(np.asarray(r) == 0):
        raise SingularPointError(f"{what} is singular at x = y")


# --- Cutoff -----------------------------------------------------------------

def _glue(u):
    with np.errstate(divide='ignore', over='ignore'):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)


def smooth_cutoff(lam, spec: CutoffSpec):
    """
    Even C∞ bump: 1 for |λ| ≤ λ1, 0 for |λ| ≥ 2λ1, with the exp(-1/u) glue on
    the transition so that χ(λ1 + u λ1) + χ(2λ1 - u λ1) = 1.
    """
    u = (np.abs(np.asarray(lam, dtype=float)) - spec.lambda1) / spec.lambda1
    u = np.clip(u, 0.0, 1.0)
    left, right = _glue(1.0 - u), _glue(u)
    value = left / (left + right)
    return value.item() if np.ndim(value) == 0 else value


def smooth_cutoff_derivative(lam, spec: CutoffSpec):
    lam = np.asarray(lam, dtype=float)
    u = np.clip((np.abs(lam) - spec.lambda1) / spec.lambda1, 0.0, 1.0)
    f_left, f_right = _glue(1.0 - u), _glue(u)
    with np.errstate(divide='ignore', invalid='ignore'):
        df_left = np.where(u < 1, f_left / np.where(u < 1, (1.0 - u) ** 2, 1.0), 0.0)
        df_right = np.where(u > 0, f_right / np.where(u > 0, u ** 2, 1.0), 0.0)
    dchi_du = -(df_left * f_right + f_left * df_right) / (f_left + f_right) ** 2
    value = np.sign(lam) * dchi_du / spec.lambda1
    return value.item() if np.ndim(value) == 0 else value


def _cutoff_values(lam, cutoff):
    if cutoff is None:
        return np.ones_like(np.asarray(lam, dtype=float))
    return np.asarray(smooth_cutoff(lam, cutoff), dtype=float)


# --- Free resolvents --------------------------------------------------------

def schrodinger_radial(sign, lam, r):
    """(±i/4) H0^(±)(λr) for λ > 0, r > 0."""
    s = sign_value(sign)
    if np.any(np.asarray(lam) <= 0):
        raise DomainError("schrodinger_resolvent needs lambda > 0")
    _reject_coincident(r, "The Schrödinger resolvent")
    return s * 0.25j * np.asarray(hankel(s, 0, np.asarray(lam) * np.asarray(r)))


def schrodinger_resolvent(sign, lam, x, y):
    r, _ = separation(x, y)
    value = schrodinger_radial(sign, lam, r)
    return value.item() if np.ndim(value) == 0 else value


def dirac_radial(sign, lam: float, r):
    """
    Coefficients (a, b) of the Dirac resolvent (-iα·∇ + λ)R0(λ²) for real
    λ ≠ 0. With σ = s·sgn λ:
        a = λ (iσ/4) H0^σ(|λ| r),   b = -(σ|λ|/4) H1^σ(|λ| r).
    """
    lam = float(lam)
    sigma = int(branch_sign(sign, lam))
    _reject_coincident(r, "The Dirac resolvent")
    z = abs(lam) * np.asarray(r, dtype=float)
    a = lam * sigma * 0.25j * np.asarray(hankel(sigma, 0, z))
    b = -sigma * abs(lam) / 4.0 * np.asarray(hankel(sigma, 1, z))
    return a, b


def dirac_radial_pair(lam: float, r):
    """Both signs from one Hankel evaluation: {+1: (a, b), -1: (a, b)}."""
    lam = float(lam)
    if lam == 0:
        raise DomainError("The Dirac resolvent needs lambda != 0")
    _reject_coincident(r, "The Dirac resolvent")
    z = abs(lam) * np.asarray(r, dtype=float)
    h0, h1 = np.asarray(hankel(1, 0, z)), np.asarray(hankel(1, 1, z))
    out = {}
    for s in (1, -1):
        sigma = s * int(np.sign(lam))
        H0, H1 = (h0, h1) if sigma > 0 else (np.conj(h0), np.conj(h1))
        out[s] = (lam * sigma * 0.25j * H0, -sigma * abs(lam) / 4.0 * H1)
    return out


def dirac_resolvent(sign, lam: float, x, y) -> np.ndarray:
    r, e = separation(x, y)
    a, b = dirac_radial(sign, lam, r)
    return radial_block(a, b, e)


# --- Spectral density -------------------------------------------------------

def mu0_radial(lam: float, r, cutoff: CutoffSpec | None = None):
    """
    μ0(λ) = sgn(λ) χ(λ) (D0 + λ)(i/2) J0(|λ||x-y|) in (a, b) form:
        a = i χ |λ| J0(|λ| r) / 2,   b = -χ λ J1(|λ| r) / 2.
    cutoff=None drops χ, giving the bare resolvent jump R0+ - R0-.
    """
    lam = float(lam)
    chi = float(_cutoff_values(lam, cutoff))
    z = abs(lam) * np.asarray(r, dtype=float)
    a = 0.5j * chi * abs(lam) * np.asarray(bessel_j(0, z))
    b = -0.5 * chi * lam * np.asarray(bessel_j(1, z))
    return a, b


def mu0(lam: float, x, y, cutoff: CutoffSpec | None) -> np.ndarray:
    r, e = separation(x, y)
    a, b = mu0_radial(lam, r, cutoff)
    return radial_block(a, b, e)


def mu0_derivative_radial(lam: float, r, cutoff: CutoffSpec | None = None):
    lam = float(lam)
    r = np.asarray(r, dtype=float)
    z = abs(lam) * r
    j0, j1 = np.asarray(bessel_j(0, z)), np.asarray(bessel_j(1, z))
    a_bare = 0.5j * abs(lam) * j0
    b_bare = -0.5 * lam * j1
    da_bare = 0.5j * np.sign(lam) * (j0 - z * j1)
    db_bare = -0.5 * z * j0
    chi = float(_cutoff_values(lam, cutoff))
    dchi = 0.0 if cutoff is None else float(smooth_cutoff_derivative(lam, cutoff))
    return chi * da_bare + dchi * a_bare, chi * db_bare + dchi * b_bare


# --- Expansion kernels ------------------------------------------------------

def expansion_radial(tag: str, r):
    if tag not in EXPANSION_TAGS:
        raise ValidationError(f"Unknown expansion kernel tag '{tag}'")
    r = np.asarray(r, dtype=float)
    if tag in SINGULAR_TAGS:
        _reject_coincident(r, f"Kernel {tag}")
    zero = np.zeros_like(r, dtype=complex)
    with np.errstate(divide='ignore', invalid='ignore'):
        log_r = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
    if tag == "G00":
        return zero, 1j / (2.0 * np.pi * r)
    if tag in ("G10", "G0"):
        return -log_r / (2.0 * np.pi) + zero, zero
    if tag == "G11":
        return np.ones_like(zero), zero
    if tag == "G21":
        return zero, -2j * r
    if tag == "G20":
        # -iα·∇(r² log r)/(8π), vanishing at r = 0
        return zero, np.where(r > 0, -1j * r * (2.0 * log_r + 1.0) / (8.0 * np.pi), 0.0)
    if tag == "G1":
        return r ** 2 + zero, zero
    return r ** 2 * log_r / (8.0 * np.pi) + zero, zero  # G2


def expansion_kernel(tag: str, x, y) -> np.ndarray:
    r, e = separation(x, y)
    a, b = expansion_radial(tag, r)
    return radial_block(a, b, e)
