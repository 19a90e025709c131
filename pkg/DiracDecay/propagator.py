"""
Stone-formula propagator kernels at low energy:
- LambdaContour: symmetric λ-nodes, geometric toward 0, uniform elsewhere.
- Free evolution e^{-itD0}χ(D0)(x, y) and its radial sup norm.
- Spectral density [R_V+ - R_V-](λ) from the symmetric resolvent identity.
- e^{-itH}χ(H) on probe pairs, its Born truncation and the finite-rank
  logarithmic piece F_t.
- An independent lattice oracle (exact Fourier multiplier, dense or Chebyshev).

Every Stone integral carries the 1/(2πi) factor, so kernels are directly
comparable with the oracle.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev
from scipy import linalg

from .discretize import (BlockOperator, FactoredPotential, KernelSpec, PotentialSpec, assemble,
                         assemble_resolvent_pair, blocks_to_matrix, pointwise_left,
                         pointwise_right, weighted_supnorm)
from .errors import (CausalityError, DomainError, ResolutionError, ValidationError)
from .freeops import (CutoffSpec, ALPHA1, ALPHA2, block_norm, bracket_radius, dirac_radial_pair,
                      expansion_kernel, radial_block, separation, smooth_cutoff)
from .specfun import bessel_j
from .threshold import InversionBundle, ThresholdReport

logger = logging.getLogger(__name__)

STONE_FACTOR = 1.0 / (2j * np.pi)
PROVENANCES = ("free", "stone_low_energy", "stone_low_energy_minus_Ft", "born",
               "oracle_full", "oracle_low", "oracle_high")
BANDS = ("low", "high", "full")
ORACLE_METHODS = ("eigh", "chebyshev")
RESOLUTION_TOL = 1e-3


# --- Contours ---------------------------------------------------------------

def _half_line(lambda_min: float, ratio: float, spacing: float, top: float) -> np.ndarray:
    geometric = [lambda_min]
    while geometric[-1] * ratio < top and geometric[-1] * (ratio - 1.0) < spacing:
        geometric.append(geometric[-1] * ratio)
    start = geometric[-1]
    m = max(1, int(np.ceil((top - start) / spacing)))
    uniform = start + (top - start) * np.arange(1, m + 1) / m
    return np.concatenate([geometric, uniform])


def _log_trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    """Trapezoid rule in u = log λ, expressed as weights for dλ."""
    du = np.diff(np.log(nodes))
    w = np.zeros_like(nodes)
    w[:-1] += 0.5 * du
    w[1:] += 0.5 * du
    return nodes * w


@dataclass(frozen=True, eq=False)
class LambdaContour:
    nodes: np.ndarray          # ascending, symmetric about 0, 0 excluded
    weights: np.ndarray
    lambda_min: float
    ratio: float
    spacing: float             # step of the uniform section
    top: float                 # largest |λ|

    @property
    def size(self) -> int:
        return len(self.nodes)

    def refined(self) -> "LambdaContour":
        """Node doubling: ratio → √ratio, spacing → spacing / 2."""
        return make_contour(self.lambda_min, np.sqrt(self.ratio), 0.5 * self.spacing, self.top)

    def quadrature_error(self) -> float:
        """Relative error on ∫ dλ / (|λ| log²(|λ|/c)) over the node range, c = e·top."""
        c = np.e * self.top
        lam = np.abs(self.nodes)
        approx = np.sum(self.weights / (lam * np.log(lam / c) ** 2))
        exact = 2.0 * (1.0 / np.log(c / self.top) - 1.0 / np.log(c / self.lambda_min))
        return float(abs(approx - exact) / exact)

    def shifted_rule(self, shift: float):
        """Nodes and weights extended by uniform steps past ±top to cover λ - shift."""
        h = self.spacing
        m = int(np.ceil(abs(shift) / h)) + 1
        extra = self.top + h * np.arange(1, m + 1)
        weights = self.weights.copy()
        if shift > 0:
            weights[-1] += 0.5 * h
            return (np.concatenate([self.nodes, extra]),
                    np.concatenate([weights, np.full(m, h)]))
        weights[0] += 0.5 * h
        return (np.concatenate([-extra[::-1], self.nodes]),
                np.concatenate([np.full(m, h), weights]))


def make_contour(lambda_min: float, ratio: float, spacing: float, top: float) -> LambdaContour:
    if not 0 < lambda_min < top:
        raise ValidationError(f"Need 0 < lambda_min < top, got {lambda_min}, {top}")
    if ratio <= 1 or spacing <= 0:
        raise ValidationError("Contour ratio must exceed 1 and spacing must be positive")
    positive = _half_line(lambda_min, ratio, spacing, top)
    w = _log_trapezoid_weights(positive)
    return LambdaContour(nodes=np.concatenate([-positive[::-1], positive]),
                         weights=np.concatenate([w[::-1], w]),
                         lambda_min=lambda_min, ratio=ratio, spacing=spacing, top=top)


def build_contour(cutoff: CutoffSpec, t_max: float, r_max: float = 0.0,
                  lambda_min: float = 1e-6, ratio: float = 1.3,
                  points_per_period: int = 16, resolution_cap: int = 800) -> LambdaContour:
    """
    Contour covering supp χ. The uniform step resolves e^{-iλ(t ± r)} with
    `points_per_period` nodes and never exceeds top / resolution_cap.
    """
    top = cutoff.support
    reach = abs(t_max) + abs(r_max)
    spacing = top / resolution_cap
    if reach > 0:
        spacing = min(spacing, 2.0 * np.pi / (points_per_period * reach))
    contour = make_contour(lambda_min, ratio, spacing, top)
    logger.debug("Contour: %d nodes, spacing %.3e, lambda_min %.1e", contour.size, spacing,
                 lambda_min)
    return contour


def stone_integral(f, t_values, contour: LambdaContour, half_period: bool = False,
                   prefactor: complex = STONE_FACTOR, base: np.ndarray | None = None):
    """
    prefactor · Σ_j w_j e^{-itλ_j} f(λ_j) for each t. f maps an array of λ to
    values of shape (n, ...). With half_period the integrand is replaced by
    ½[f(λ) - f(λ - π/t)], which leaves the integral unchanged.
    """
    scalar_t = np.ndim(t_values) == 0
    ts = np.atleast_1d(np.asarray(t_values, dtype=float))
    if base is None:
        base = np.asarray(f(contour.nodes))
    out = []
    for t in ts:
        value = np.tensordot(contour.weights * np.exp(-1j * t * contour.nodes), base, axes=(0, 0))
        if half_period and t != 0:
            shift = np.pi / t
            nodes, weights = contour.shifted_rule(shift)
            moved = nodes - shift
            keep = (np.abs(moved) >= contour.lambda_min) & (np.abs(moved) <= contour.top)
            shifted = np.asarray(f(moved[keep]))
            second = np.tensordot(weights[keep] * np.exp(-1j * t * nodes[keep]), shifted,
                                  axes=(0, 0))
            value = 0.5 * (value - second)
        out.append(prefactor * value)
    out = np.asarray(out)
    return out[0] if scalar_t else out


def _relative_change(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


# --- Probes and kernels -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbeSet:
    x: np.ndarray    # (P, 2)
    y: np.ndarray    # (P, 2)

    def __post_init__(self):
        if np.shape(self.x) != np.shape(self.y) or np.shape(self.x)[-1:] != (2,):
            raise ValidationError("Probe points must be matching (P, 2) arrays")

    @property
    def P(self) -> int:
        return len(self.x)

    @cached_property
    def separations(self):
        return separation(self.x, self.y)

    def swapped(self) -> "ProbeSet":
        return ProbeSet(self.y.copy(), self.x.copy())

    @property
    def max_distance(self) -> float:
        return float(np.max(self.separations[0])) if self.P else 0.0


def build_probes(rho_max: float, rho_step: float = 1.0, direction=(1.0, 0.0),
                 families=("anchored", "centered")) -> ProbeSet:
    """
    Pairs along a ray: anchored (0, ρe) and centered (-ρe/2, ρe/2). With an
    even number of Gauss nodes per axis the line x2 = 0 carries no grid node.
    """
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    rho = np.arange(0.0, rho_max + 0.5 * rho_step, rho_step)
    xs, ys = [], []
    for family in families:
        if family == "anchored":
            xs.append(np.zeros((len(rho), 2)))
            ys.append(rho[:, None] * e)
        elif family == "centered":
            r = rho[rho > 0]
            xs.append(-0.5 * r[:, None] * e)
            ys.append(0.5 * r[:, None] * e)
        else:
            raise ValidationError(f"Unknown probe family '{family}'")
    return ProbeSet(np.concatenate(xs), np.concatenate(ys))


@dataclass(eq=False)
class EvolutionKernel:
    t: float
    blocks: np.ndarray          # (P, 2, 2)
    probes: ProbeSet
    provenance: str

    @property
    def x(self):
        return self.probes.x

    @property
    def y(self):
        return self.probes.y

    def supnorm(self, gamma: float = 0.0) -> float:
        return weighted_supnorm(self, gamma)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.blocks)))

    def minus(self, other, provenance: str) -> "EvolutionKernel":
        return EvolutionKernel(self.t, self.blocks - other.blocks, self.probes, provenance)


@dataclass(eq=False)
class FiniteRankTerm:
    t: float
    blocks: np.ndarray
    probes: ProbeSet
    rank: int
    inner: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=complex))

    @property
    def x(self):
        return self.probes.x

    @property
    def y(self):
        return self.probes.y

    def supnorm(self, gamma: float = 0.0) -> float:
        return weighted_supnorm(self, gamma)


def _pair_contract(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Diagonal 2×2 blocks of left @ right, for left (2P, K) and right (K, 2P)."""
    P = left.shape[0] // 2
    return np.einsum('pak,kpb->pab', left.reshape(P, 2, -1), right.reshape(-1, P, 2))


def _map(fn, items, serial: bool, max_workers: int | None):
    if serial:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(fn, items))


# --- Free evolution ---------------------------------------------------------

def _mu0_coefficients(lams, r, cutoff: CutoffSpec | None):
    """(a, b) of μ0 for every λ in lams and radius in r, shape (n, P, 2)."""
    lams = np.asarray(lams, dtype=float)
    chi = np.ones_like(lams) if cutoff is None else np.asarray(smooth_cutoff(lams, cutoff))
    z = np.abs(lams)[:, None] * np.asarray(r, dtype=float)[None, :]
    a = 0.5j * (chi * np.abs(lams))[:, None] * bessel_j(0, z)
    b = -0.5 * (chi * lams)[:, None] * bessel_j(1, z)
    return np.stack([a, b], axis=-1)


def free_evolution(t, x, y, cutoff: CutoffSpec, contour: LambdaContour | None = None,
                   half_period: bool = True, check_resolution: bool = True) -> np.ndarray:
    """
    e^{-itD0}χ(D0)(x, y) = (1/2πi) ∫ e^{-itλ} μ0(λ)(x, y) dλ for points of
    shape (..., 2); returns blocks of shape t.shape + points.shape[:-1] + (2, 2).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r, e = separation(x, y)
    shape = r.shape
    r, e = r.reshape(-1), e.reshape(-1, 2)
    ts = np.asarray(t, dtype=float)
    if contour is None:
        contour = build_contour(cutoff, float(np.max(np.abs(ts))), float(np.max(r, initial=0.0)))

    def integrate(c):
        return stone_integral(lambda lams: _mu0_coefficients(lams, r, cutoff), ts, c, half_period)

    coeffs = integrate(contour)
    if check_resolution:
        finer = integrate(contour.refined())
        change = _relative_change(coeffs, finer)
        if change > RESOLUTION_TOL:
            raise ResolutionError(f"Free evolution changed by {change:.2e} under node doubling")
        coeffs = finer
    blocks = radial_block(coeffs[..., 0], coeffs[..., 1], e)
    return blocks.reshape(ts.shape + shape + (2, 2))


def free_kernel(t_values, probes: ProbeSet, cutoff: CutoffSpec,
                contour: LambdaContour | None = None, half_period: bool = True,
                check_resolution: bool = True) -> list:
    ts = np.atleast_1d(np.asarray(t_values, dtype=float))
    blocks = free_evolution(ts, probes.x, probes.y, cutoff, contour, half_period, check_resolution)
    return [EvolutionKernel(float(t), blocks[i], probes, "free") for i, t in enumerate(ts)]


def free_kernel_supnorm(t: float, cutoff: CutoffSpec, gamma: float = 0.0,
                        r_max: float | None = None, r_step: float = 0.5) -> float:
    """
    sup over x, y of |K_t(x, y)| ⟨x⟩^{-γ}⟨y⟩^{-γ}. The kernel is radial, so the
    sup runs over r = |x - y| with the weight minimized along the segment.
    """
    if r_max is None:
        r_max = abs(t) + 40.0 / cutoff.lambda1
    r = np.arange(0.0, r_max + r_step, r_step)
    contour = build_contour(cutoff, t, r_max)
    coeffs = stone_integral(lambda lams: _mu0_coefficients(lams, r, cutoff), t, contour,
                            half_period=True)
    norms = block_norm(coeffs[:, 0], coeffs[:, 1])
    s = np.linspace(0.0, 0.5, 33)[None, :] * r[:, None]
    placement = np.min(bracket_radius(s) * bracket_radius(r[:, None] - s), axis=1)
    return float(np.max(norms * placement ** (-gamma)))


# --- Spectral density -------------------------------------------------------

def _check_off_grid(points: np.ndarray, fp: FactoredPotential):
    d = np.linalg.norm(points[:, None, :] - fp.grid.nodes[None, :, :], axis=-1)
    if np.any(d < 1e-12):
        raise ValidationError("Probe points must not coincide with grid nodes")


def _cross_resolvents(lam: float, left: np.ndarray, right: np.ndarray, weight: np.ndarray,
                      weight_side: str) -> dict:
    """
    R0±(λ)(a_i, b_j) between two point sets as block matrices, with √w applied
    on the grid side. Both signs come from one Hankel evaluation.
    """
    r, e = separation(left[:, None, :], right[None, :, :])
    coeffs = dirac_radial_pair(lam, r)
    sw = weight[None, :, None, None] if weight_side == "right" else weight[:, None, None, None]
    return {s: blocks_to_matrix(radial_block(*coeffs[s], e) * sw) for s in (1, -1)}


def spectral_density(lam: float, fp: FactoredPotential, bundle: InversionBundle | None = None,
                     probes: ProbeSet | None = None, terms: str = "full"):
    """
    [R_V+ - R_V-](λ) from
        R_V = R0 - R0 V R0 + R0 V R0 V R0 - R0 V R0 v* M^{-1} v R0 V R0.
    On probe pairs returns blocks (P, 2, 2); otherwise a BlockOperator on the
    grid. terms="born" keeps the first three summands.
    """
    lam = float(lam)
    if lam == 0:
        raise DomainError("spectral_density needs lambda != 0")
    if terms not in ("full", "born"):
        raise ValidationError(f"Unknown term selection '{terms}'")
    grid = fp.grid
    full = terms == "full" and not fp.is_zero
    if full and bundle is None:
        raise ValidationError("spectral_density needs an InversionBundle for M(λ)^{-1}")

    if probes is None:
        density = assemble(KernelSpec("MU0", lam=lam), grid).matrix
        if fp.is_zero:
            return BlockOperator(density, grid, "density", lam)
        R = assemble_resolvent_pair(lam, grid)
        for s in (1, -1):
            Rgg = R[s].matrix
            RV = pointwise_right(Rgg, fp.V)
            RVR = RV @ Rgg
            piece = -RVR + RV @ RVR
            if full:
                Minv = bundle.invert_M(s, lam, resolvent=Rgg).matrix
                left = pointwise_right(RVR, fp.v_adjoint)
                right = pointwise_left(fp.v, RVR)
                piece = piece - left @ Minv @ right
            density = density + s * piece
        return BlockOperator(density, grid, "density", lam)

    r, e = probes.separations
    coeffs = _mu0_coefficients([lam], r, None)[0]
    density = radial_block(coeffs[:, 0], coeffs[:, 1], e)
    if fp.is_zero:
        return density
    _check_off_grid(probes.x, fp)
    _check_off_grid(probes.y, fp)
    sw = np.sqrt(grid.weights)
    Rxg = _cross_resolvents(lam, probes.x, grid.nodes, sw, "right")
    Rgy = _cross_resolvents(lam, grid.nodes, probes.y, sw, "left")
    R = assemble_resolvent_pair(lam, grid)
    for s in (1, -1):
        Rgg = R[s].matrix
        W = pointwise_right(Rxg[s], fp.V)
        Y = pointwise_left(fp.V, Rgy[s])
        WR = W @ Rgg
        piece = -_pair_contract(W, Rgy[s]) + _pair_contract(WR, Y)
        if full:
            Minv = bundle.invert_M(s, lam, resolvent=Rgg).matrix
            left = pointwise_right(WR, fp.v_adjoint) @ Minv
            right = pointwise_left(fp.v, Rgg @ Y)
            piece = piece - _pair_contract(left, right)
        density = density + s * piece
    return density


# --- Perturbed evolution ----------------------------------------------------

def _low_energy(t_values, fp: FactoredPotential, bundle, contour: LambdaContour,
                probes: ProbeSet, cutoff: CutoffSpec, terms: str, half_period: bool,
                serial: bool, max_workers: int | None) -> np.ndarray:
    def density_at(lam):
        chi = float(smooth_cutoff(lam, cutoff))
        if chi == 0.0:
            return np.zeros((probes.P, 2, 2), dtype=complex)
        logger.debug("Spectral density at lambda = %+.4e", lam)
        return chi * spectral_density(lam, fp, bundle, probes, terms)

    def densities(lams):
        return np.asarray(_map(density_at, list(np.asarray(lams, dtype=float)), serial,
                               max_workers)).reshape(len(lams), probes.P, 2, 2)

    return stone_integral(densities, t_values, contour, half_period)


def evolve_low(t_values, fp: FactoredPotential, report: ThresholdReport | None,
               contour: LambdaContour, probes: ProbeSet, cutoff: CutoffSpec,
               bundle: InversionBundle | None = None, terms: str = "full",
               half_period: bool = True, check_resolution: bool = False,
               serial: bool = False, max_workers: int | None = None) -> list:
    """
    e^{-itH}χ(H)(x, y) on the probe pairs for every t, from one pass of
    spectral densities over the contour. Node-doubling verification is
    optional because it doubles the cost.
    """
    ts = np.atleast_1d(np.asarray(t_values, dtype=float))
    if bundle is None and not fp.is_zero and terms == "full":
        if report is None:
            raise ValidationError("evolve_low needs a ThresholdReport or an InversionBundle")
        bundle = InversionBundle(report, fp)
    logger.info("Stone integral over %d nodes for %d times (%s terms)", contour.size, len(ts),
                terms)
    args = (fp, bundle, contour, probes, cutoff, terms, half_period, serial, max_workers)
    values = _low_energy(ts, *args)
    if check_resolution:
        finer = _low_energy(ts, fp, bundle, contour.refined(), *args[3:])
        change = _relative_change(values, finer)
        if change > RESOLUTION_TOL:
            raise ResolutionError(f"Evolution changed by {change:.2e} under node doubling")
    provenance = "born" if terms == "born" else "stone_low_energy"
    return [EvolutionKernel(float(t), values[i], probes, provenance) for i, t in enumerate(ts)]


def born_evolution(t_values, fp: FactoredPotential, contour: LambdaContour, probes: ProbeSet,
                   cutoff: CutoffSpec, **kwargs) -> list:
    """Stone integral of the first three Born terms of R_V."""
    return evolve_low(t_values, fp, None, contour, probes, cutoff, terms="born", **kwargs)


# --- Finite-rank term -------------------------------------------------------

def _ft_outer_factors(bundle: InversionBundle, probes: ProbeSet):
    """G00 V G00 v* Φ on x-probes (2P, k) and Φ* v G00 V G00 on y-probes (k, 2P)."""
    fp, grid = bundle.fp, bundle.grid
    sw = np.sqrt(grid.weights)
    A00 = bundle.report.operators['G00'].matrix
    Gxg = blocks_to_matrix(expansion_kernel("G00", probes.x[:, None, :], grid.nodes[None, :, :])
                           * sw[None, :, None, None])
    Ggy = blocks_to_matrix(expansion_kernel("G00", grid.nodes[:, None, :], probes.y[None, :, :])
                           * sw[:, None, None, None])
    Phi = bundle.basis
    Lx = pointwise_right(pointwise_right(Gxg, fp.V) @ A00, fp.v_adjoint) @ Phi
    Ry = Phi.conj().T @ pointwise_left(fp.v, A00 @ pointwise_left(fp.V, Ggy))
    return Lx, Ry


def _tail_inner(bundle: InversionBundle, lambda_min: float) -> np.ndarray:
    """∫_{|λ|<λmin} of the even inner factor, using its λ^{-1} log^{-2}λ profile."""
    return 2.0 * bundle.ft_inner(lambda_min) * lambda_min * abs(np.log(lambda_min))


def compute_Ft(t_values, bundle: InversionBundle, probes: ProbeSet, cutoff: CutoffSpec,
               contour: LambdaContour | None = None, tail: bool = True,
               half_period: bool = True) -> list:
    """
    F_t = -(1/2πi) ∫ e^{-itλ}χ(λ) G00VG00 v*S1 [(A+^{-1} - A-^{-1})/λ] S1 v G00VG00 dλ,
    the part of the low-energy evolution that decays only like 1/log t. Zero
    unless a p-wave resonance is present.
    """
    ts = np.atleast_1d(np.asarray(t_values, dtype=float))
    report = bundle.report
    P = probes.P
    if report.rank_Q == 0:
        return [FiniteRankTerm(float(t), np.zeros((P, 2, 2), dtype=complex), probes, 0)
                for t in ts]
    _check_off_grid(probes.x, bundle.fp)
    _check_off_grid(probes.y, bundle.fp)
    if contour is None:
        contour = build_contour(cutoff, float(np.max(np.abs(ts))), lambda_min=1e-300)
    Lx, Ry = _ft_outer_factors(bundle, probes)

    def inner(lams):
        return np.asarray([float(smooth_cutoff(lam, cutoff)) * bundle.ft_inner(lam)
                           for lam in np.asarray(lams, dtype=float)])

    inner_t = -stone_integral(inner, ts, contour, half_period)
    if tail:
        inner_t = inner_t - STONE_FACTOR * _tail_inner(bundle, contour.lambda_min)[None]
    terms = []
    for i, t in enumerate(ts):
        C = inner_t[i]
        full = Lx @ C @ Ry
        sv = linalg.svdvals(full)
        rank = int(np.sum(sv > 1e-10 * sv[0])) if sv.size and sv[0] > 0 else 0
        terms.append(FiniteRankTerm(float(t), _pair_contract(Lx @ C, Ry), probes, rank, C))
    logger.info("F_t computed for %d times (rank(Q) = %d)", len(ts), report.rank_Q)
    return terms


def evolution_minus_Ft(t_values, fp: FactoredPotential, report: ThresholdReport,
                       contour: LambdaContour, probes: ProbeSet, cutoff: CutoffSpec,
                       bundle: InversionBundle | None = None, **kwargs) -> list:
    """evolve_low minus F_t, both on the same contour."""
    if bundle is None:
        bundle = InversionBundle(report, fp)
    kernels = evolve_low(t_values, fp, report, contour, probes, cutoff, bundle=bundle, **kwargs)
    finite = compute_Ft(t_values, bundle, probes, cutoff, contour=contour, tail=False,
                        half_period=kwargs.get('half_period', True))
    return [k.minus(f, "stone_low_energy_minus_Ft") for k, f in zip(kernels, finite)]


# --- Model integral ---------------------------------------------------------

def log_model_integral(t: float, cutoff: CutoffSpec, lambda_min: float = 1e-12,
                       ratio: float = 1.3, points_per_period: int = 16) -> complex:
    """
    ∫ e^{-itλ} χ(λ) / (λ log²|λ|) dλ as a principal value. The integrand is
    odd, so this is -2i ∫_0 sin(tλ) χ(λ) / (λ log²λ) dλ.
    """
    if cutoff.support >= 1.0:
        raise DomainError("log_model_integral needs supp χ inside |λ| < 1")
    contour = build_contour(cutoff, t, lambda_min=lambda_min, ratio=ratio,
                            points_per_period=points_per_period)
    positive = contour.nodes > 0
    lam, w = contour.nodes[positive], contour.weights[positive]
    chi = np.asarray(smooth_cutoff(lam, cutoff))
    return complex(-2j * np.sum(w * np.sin(t * lam) * chi / (lam * np.log(lam) ** 2)))


# --- Lattice oracle ---------------------------------------------------------

@dataclass(frozen=True)
class PeriodicBox:
    half_width: float
    points: int
    potential_radius: float | None = None

    def __post_init__(self):
        if self.points < 4 or self.points % 2:
            raise ValidationError(f"Oracle box needs an even number of points, got {self.points}")
        if self.half_width <= 0:
            raise ValidationError("Oracle box half-width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)


def _potential_radius(spec: PotentialSpec, box: PeriodicBox) -> float:
    if box.potential_radius is not None:
        return box.potential_radius
    if spec.family == "zero" or spec.coupling == 0 or not np.any(spec.amplitude):
        return 0.0
    return 6.0 * spec.width


def band_function(band: str, t: float, cutoff: CutoffSpec, epsilon: float = 0.01):
    if band not in BANDS:
        raise ValidationError(f"Unknown band '{band}'")

    def f(E):
        E = np.asarray(E, dtype=float)
        phase = np.exp(-1j * t * E)
        if band == "full":
            return phase
        chi = np.asarray(smooth_cutoff(E, cutoff))
        if band == "low":
            return phase * chi
        return phase * (1.0 - chi) * (1.0 + E ** 2) ** (-1.0 - 0.5 * epsilon)

    return f


class LatticeModel:
    """
    H = α·ξ (exact Fourier multiplier on the periodic lattice) + V, states
    indexed by (ix·M + iy)·2 + spinor component.
    """

    def __init__(self, spec: PotentialSpec, box: PeriodicBox):
        self.spec = spec
        self.box = box
        M = box.points
        self.M = M
        X, Y = np.meshgrid(box.axis, box.axis, indexing='ij')
        self.nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
        self.V = spec.sample(self.nodes)
        xi = 2.0 * np.pi * np.fft.fftfreq(M, d=box.spacing)
        K1, K2 = np.meshgrid(xi, xi, indexing='ij')
        self.symbol = np.zeros((M, M, 2, 2), dtype=complex)
        self.symbol[..., 0, 1] = K1 - 1j * K2
        self.symbol[..., 1, 0] = K1 + 1j * K2
        self.radius = _potential_radius(spec, box)
        self.spectral_bound = (np.sqrt(2.0) * np.pi / box.spacing
                               + float(np.max(np.linalg.norm(self.V, ord=2, axis=(1, 2)))))

    @property
    def dimension(self) -> int:
        return 2 * self.M * self.M

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """H ψ for ψ of shape (dimension, c), via FFT."""
        M = self.M
        shaped = psi.reshape(M, M, 2, -1)
        hat = np.fft.fft2(shaped, axes=(0, 1))
        hat = np.einsum('xyab,xybc->xyac', self.symbol, hat)
        out = np.fft.ifft2(hat, axes=(0, 1))
        out = out + np.einsum('nab,nbc->nac', self.V, shaped.reshape(M * M, 2, -1)).reshape(
            out.shape)
        return out.reshape(psi.shape)

    def dense_matrix(self) -> np.ndarray:
        M = self.M
        F = np.fft.fft(np.eye(M), axis=0) / np.sqrt(M)
        xi = 2.0 * np.pi * np.fft.fftfreq(M, d=self.box.spacing)
        D1 = F.conj().T @ (xi[:, None] * F)
        eye = np.eye(M)
        H = np.kron(np.kron(D1, eye), ALPHA1) + np.kron(np.kron(eye, D1), ALPHA2)
        idx = np.arange(M * M)
        for a in range(2):
            for b in range(2):
                H[2 * idx + a, 2 * idx + b] += self.V[:, a, b]
        return 0.5 * (H + H.conj().T)

    @cached_property
    def eigensystem(self):
        logger.info("Diagonalizing the lattice Hamiltonian (dimension %d)", self.dimension)
        return linalg.eigh(self.dense_matrix())

    def bound_state_mask(self, window: float, concentration: float = 0.9) -> np.ndarray:
        """Eigenvectors with |E| < window carrying most of their weight near the potential."""
        E, W = self.eigensystem
        near = np.linalg.norm(self.nodes, axis=-1) <= 2.0 * max(self.radius, self.box.spacing)
        inside = np.repeat(near, 2)
        weight = np.sum(np.abs(W[inside]) ** 2, axis=0)
        return (np.abs(E) < window) & (weight > concentration)

    def evolution_matrix(self, t: float, band: str = "full", cutoff: CutoffSpec | None = None,
                         epsilon: float = 0.01, pac_filter: bool = False) -> np.ndarray:
        E, W = self.eigensystem
        if band != "full" and cutoff is None:
            raise ValidationError(f"Band '{band}' needs a cutoff")
        f = band_function(band, t, cutoff, epsilon)(E)
        if pac_filter and band == "low":
            f = np.where(self.bound_state_mask(cutoff.support), 0.0, f)
        return (W * f[None, :]) @ W.conj().T

    def chebyshev_apply(self, f, columns: np.ndarray, tol: float = 1e-12,
                        max_degree: int = 1 << 15, min_degree: int = 64) -> np.ndarray:
        """f(H) @ columns by a Chebyshev expansion on [-E_s, E_s]."""
        scale = 1.01 * self.spectral_bound

        def scaled(u):
            return f(scale * u)

        degree = min_degree
        while True:
            coeffs = (chebyshev.chebinterpolate(lambda u: np.real(scaled(u)), degree)
                      + 1j * chebyshev.chebinterpolate(lambda u: np.imag(scaled(u)), degree))
            if np.max(np.abs(coeffs[-8:])) < tol * np.max(np.abs(coeffs)):
                break
            degree *= 2
            if degree > max_degree:
                raise ResolutionError(f"Chebyshev expansion needs more than {max_degree} terms")
        logger.debug("Chebyshev expansion with %d terms", degree + 1)
        previous = columns.astype(complex)
        current = self.apply(previous) / scale
        result = coeffs[0] * previous + coeffs[1] * current
        for c in coeffs[2:]:
            previous, current = current, 2.0 * self.apply(current) / scale - previous
            result = result + c * current
        return result

    def lattice_index(self, points: np.ndarray) -> np.ndarray:
        h = self.box.spacing
        j = np.rint((np.asarray(points, dtype=float) + self.box.half_width) / h).astype(int)
        lattice = -self.box.half_width + h * j
        if np.any(np.abs(lattice - points) > 1e-9 * h) or np.any((j < 0) | (j >= self.M)):
            raise ValidationError("Oracle probes must be lattice points inside the box")
        return j[:, 0] * self.M + j[:, 1]


def oracle_evolution(t_values, spec: PotentialSpec, box: PeriodicBox, cutoff: CutoffSpec,
                     probes: ProbeSet, band: str = "low", method: str = "eigh",
                     pac_filter: bool = True, epsilon: float = 0.01,
                     model: LatticeModel | None = None) -> list:
    """
    f(H)(x, y) on the periodic lattice with f = e^{-itE}χ(E) (low),
    e^{-itE}(1-χ)⟨E⟩^{-2-ε} (high) or e^{-itE} (full).
    """
    if method not in ORACLE_METHODS:
        raise ValidationError(f"Unknown oracle method '{method}'")
    ts = np.atleast_1d(np.asarray(t_values, dtype=float))
    model = model or LatticeModel(spec, box)
    t_max = float(np.max(np.abs(ts)))
    if box.half_width <= model.radius + t_max:
        raise CausalityError(f"Box half-width {box.half_width} does not exceed "
                             f"potential radius {model.radius} + t_max {t_max}")
    h2 = box.spacing ** 2
    src = model.lattice_index(probes.y)
    dst = model.lattice_index(probes.x)
    sources, column_of = np.unique(src, return_inverse=True)
    columns = np.zeros((model.dimension, 2 * len(sources)), dtype=complex)
    for k, j in enumerate(sources):
        columns[2 * j, 2 * k] = 1.0 / h2
        columns[2 * j + 1, 2 * k + 1] = 1.0 / h2
    kernels = []
    for t in ts:
        if method == "eigh":
            E, W = model.eigensystem
            f = band_function(band, t, cutoff, epsilon)(E)
            if pac_filter and band == "low":
                f = np.where(model.bound_state_mask(cutoff.support), 0.0, f)
            evolved = W @ (f[:, None] * (W.conj().T @ columns))
        else:
            evolved = model.chebyshev_apply(band_function(band, t, cutoff, epsilon), columns)
        rows = evolved.reshape(model.M * model.M, 2, len(sources), 2)
        blocks = rows[dst, :, column_of, :]
        kernels.append(EvolutionKernel(float(t), blocks, probes, f"oracle_{band}"))
    logger.info("Oracle (%s, band %s) evaluated for %d times", method, band, len(ts))
    return kernels
