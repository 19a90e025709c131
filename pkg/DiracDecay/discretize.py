"""
Discretization of L²(ℝ², ℂ²):
- Tensor Gauss–Legendre grids on [-L, L]².
- Potential specifications and the pointwise factorization V = v* U v.
- Nyström assembly of integral kernels into BlockOperators.
- Weighted kernel sup-norms, composition, spectral differentiation.

BlockOperator matrices are stored in symmetric quadrature coordinates,
    A_ij = sqrt(w_i) K(x_i, x_j) sqrt(w_j)   (2×2 blocks, index 2i + a),
so that composition is a plain matrix product, self-adjoint kernels give
Hermitian matrices and eigenvectors are L²-normalized coordinates
c_i = sqrt(w_i) f(x_i). `nodal_matrix()` returns the entry form
K(x_i, x_j) w_j acting on nodal values.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from .errors import DomainError, ValidationError
from .freeops import (ALPHA1, ALPHA2, IDENTITY, EXPANSION_TAGS, CutoffSpec, alpha_dot,
                      bracket, dirac_radial, dirac_radial_pair, expansion_radial, mu0_radial,
                      schrodinger_radial)
from .specfun import branch_sign, g_pm, sign_value

logger = logging.getLogger(__name__)

# SpinorField: complex array of shape (N, 2) holding nodal values on a Grid2.
SpinorField = np.ndarray

KERNEL_TAGS = EXPANSION_TAGS + ("R0", "RD", "MU0")
LOG_SINGULAR_TAGS = ("G10", "G0")


# --- Grids ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid2:
    nodes: np.ndarray          # (N, 2)
    weights: np.ndarray        # (N,)
    L: float
    n_per_axis: int
    axis_nodes: np.ndarray
    axis_weights: np.ndarray

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def sqrt_weights(self) -> np.ndarray:
        """Weights repeated per spinor component, shape (2N,)."""
        return np.repeat(np.sqrt(self.weights), 2)

    @cached_property
    def cell_half_widths(self) -> np.ndarray:
        # half of the Gauss weight along each axis: the node's quadrature cell
        wx = np.repeat(self.axis_weights, self.n_per_axis)
        wy = np.tile(self.axis_weights, self.n_per_axis)
        return 0.5 * np.stack([wx, wy], axis=-1)

    @cached_property
    def separations(self):
        """(r, e) for every node pair, shapes (N, N) and (N, N, 2)."""
        d = self.nodes[:, None, :] - self.nodes[None, :, :]
        r = np.sqrt(np.sum(d ** 2, axis=-1))
        safe = np.where(r > 0, r, 1.0)
        return r, d / safe[..., None]

    @cached_property
    def radius_table(self):
        """Distinct off-diagonal radii and the inverse map, for kernel reuse."""
        r, _ = self.separations
        mask = ~np.eye(self.N, dtype=bool)
        keys, first, inverse = np.unique(np.round(r[mask], 12), return_index=True,
                                         return_inverse=True)
        return r[mask][first], inverse, mask

    def same_as(self, other: "Grid2") -> bool:
        return other is self or (self.N == other.N and self.L == other.L
                                 and np.array_equal(self.nodes, other.nodes))

    def integrate(self, values) -> complex:
        """∫ f over the box for nodal values of shape (N, ...)."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def l2_norm(self, field_values: SpinorField) -> float:
        return float(np.sqrt(np.real(self.integrate(np.sum(np.abs(field_values) ** 2, axis=-1)))))

    def to_coordinates(self, field_values: SpinorField) -> np.ndarray:
        """Nodal values → symmetric coordinates (2N,)."""
        return (np.sqrt(self.weights)[:, None] * field_values).reshape(-1)

    def from_coordinates(self, coords: np.ndarray) -> SpinorField:
        return np.asarray(coords).reshape(self.N, 2) / np.sqrt(self.weights)[:, None]


def build_grid(n_per_axis: int, L: float) -> Grid2:
    """Tensor-product Gauss–Legendre grid on [-L, L]²; node index i = ix·n + iy."""
    if int(n_per_axis) != n_per_axis or n_per_axis < 8 or n_per_axis % 2:
        raise ValidationError(f"n_per_axis must be an even integer >= 8, got {n_per_axis}")
    if not np.isfinite(L) or L <= 0:
        raise ValidationError(f"Box half-width L must be positive, got {L}")
    n = int(n_per_axis)
    t, w = leggauss(n)
    t = 0.5 * (t - t[::-1])  # exact mirror symmetry
    w = 0.5 * (w + w[::-1])
    x, wx = L * t, L * w
    X, Y = np.meshgrid(x, x, indexing='ij')
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    weights = np.outer(wx, wx).ravel()
    logger.debug("Built %dx%d Gauss-Legendre grid on [-%g, %g]^2", n, n, L, L)
    return Grid2(nodes=nodes, weights=weights, L=float(L), n_per_axis=n,
                 axis_nodes=x, axis_weights=wx)


def frame_quadrature(grid: Grid2, outer_halfwidth: float, n: int = 16, levels: int = 3):
    """
    Quadrature of the square annulus between the grid box and [-R, R]²,
    split into `levels` geometrically growing frames of four rectangles each.
    Returns (points (M, 2), weights (M,)).
    """
    if outer_halfwidth <= grid.L:
        raise DomainError("Outer half-width must exceed the grid half-width")
    edges = np.geomspace(grid.L, outer_halfwidth, levels + 1)
    t, w = leggauss(n)
    points, weights = [], []

    def rectangle(x0, x1, y0, y1):
        xs = 0.5 * (x1 - x0) * t + 0.5 * (x1 + x0)
        ys = 0.5 * (y1 - y0) * t + 0.5 * (y1 + y0)
        X, Y = np.meshgrid(xs, ys, indexing='ij')
        points.append(np.stack([X.ravel(), Y.ravel()], axis=-1))
        weights.append(np.outer(0.5 * (x1 - x0) * w, 0.5 * (y1 - y0) * w).ravel())

    for inner, outer in zip(edges[:-1], edges[1:]):
        rectangle(-outer, outer, inner, outer)
        rectangle(-outer, outer, -outer, -inner)
        rectangle(-outer, -inner, -inner, inner)
        rectangle(inner, outer, -inner, inner)
    return np.concatenate(points), np.concatenate(weights)


# --- Potentials -------------------------------------------------------------

POTENTIAL_FAMILIES = ("zero", "gaussian_matrix", "polynomial")


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    family: str = "gaussian_matrix"
    amplitude: np.ndarray = field(default_factory=lambda: -np.eye(2, dtype=complex))
    width: float = 1.0
    decay_exponent: float = 3.0
    coupling: float = 1.0

    def __post_init__(self):
        if self.family not in POTENTIAL_FAMILIES:
            raise ValidationError(f"Unknown potential family '{self.family}'")
        amp = np.asarray(self.amplitude, dtype=complex)
        if amp.shape != (2, 2):
            raise ValidationError("Potential amplitude must be a 2x2 matrix")
        if np.max(np.abs(amp - amp.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(amp))):
            raise ValidationError("Potential amplitude must be Hermitian")
        object.__setattr__(self, 'amplitude', amp)
        if self.width <= 0 or self.decay_exponent <= 0:
            raise ValidationError("Potential width and decay exponent must be positive")

    def with_coupling(self, s: float) -> "PotentialSpec":
        return replace(self, coupling=float(s))

    def profile(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.family == "zero":
            return np.zeros(points.shape[:-1])
        if self.family == "gaussian_matrix":
            return np.exp(-np.sum(points ** 2, axis=-1) / self.width ** 2)
        return bracket(points) ** (-self.decay_exponent)

    def sample(self, points) -> np.ndarray:
        """V(x) blocks of shape (..., 2, 2)."""
        prof = self.profile(points)
        return self.coupling * prof[..., None, None] * self.amplitude


@dataclass(frozen=True, eq=False)
class FactoredPotential:
    grid: Grid2
    V: np.ndarray      # (N, 2, 2)
    v: np.ndarray      # (N, 2, 2)
    U: np.ndarray      # (N, 2) signature entries in {-1, +1}

    @property
    def U_blocks(self) -> np.ndarray:
        out = np.zeros(self.U.shape + (2,), dtype=complex)
        out[:, 0, 0] = self.U[:, 0]
        out[:, 1, 1] = self.U[:, 1]
        return out

    @property
    def v_adjoint(self) -> np.ndarray:
        return np.conj(np.swapaxes(self.v, -1, -2))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.v)

    def scaled(self, s: float) -> "FactoredPotential":
        """Factorization of s·V for s > 0 (v → sqrt(s) v, U unchanged)."""
        if s <= 0:
            raise DomainError("Coupling scale must be positive")
        return FactoredPotential(grid=self.grid, V=s * self.V, v=np.sqrt(s) * self.v, U=self.U)


def factor_samples(V: np.ndarray, zero_tol: float = 1e-14):
    """
    Pointwise V = B* diag(ζ) B with v = diag(|ζ|^{1/2}) B and U = diag(sign ζ);
    a zero eigenvalue gets U = +1 and a zero row of v.
    """
    V = np.asarray(V, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(V)))) if V.size else 1.0
    asym = np.max(np.abs(V - np.conj(np.swapaxes(V, -1, -2)))) if V.size else 0.0
    if asym > 1e-12 * scale:
        raise ValidationError(f"Potential sample is not Hermitian (defect {asym:.3e})")
    zeta, W = np.linalg.eigh(V)
    B = np.conj(np.swapaxes(W, -1, -2))
    small = np.abs(zeta) <= zero_tol * scale
    eta = np.where(small, 0.0, np.sqrt(np.abs(zeta)))
    U = np.where(small | (zeta > 0), 1.0, -1.0)
    v = eta[..., :, None] * B
    rebuilt = np.conj(np.swapaxes(v, -1, -2)) @ (U[..., :, None] * v)
    err = np.max(np.abs(rebuilt - V)) if V.size else 0.0
    if err > 1e-12 * scale:
        raise ValidationError(f"Factorization defect {err:.3e} exceeds tolerance")
    return v, U


def factor_potential(spec: PotentialSpec, grid: Grid2) -> FactoredPotential:
    V = spec.sample(grid.nodes)
    v, U = factor_samples(V)
    if not np.any(v):
        logger.info("Potential vanishes on the grid; using v = 0, U = I")
    return FactoredPotential(grid=grid, V=V, v=v, U=U)


# --- Pointwise block helpers ------------------------------------------------

def pointwise_left(blocks: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """blockdiag(blocks) @ mat for mat of shape (2N, ...)."""
    N = blocks.shape[0]
    m = np.asarray(mat).reshape((N, 2) + np.shape(mat)[1:])
    out = np.einsum('nab,nb...->na...', blocks, m)
    return out.reshape(np.shape(mat))


def pointwise_right(mat: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """mat @ blockdiag(blocks) for mat of shape (M, 2N)."""
    N = blocks.shape[0]
    M = np.shape(mat)[0]
    m = np.asarray(mat).reshape(M, N, 2)
    return np.einsum('mna,nab->mnb', m, blocks).reshape(M, 2 * N)


def block_diagonal(blocks: np.ndarray) -> np.ndarray:
    N = blocks.shape[0]
    out = np.zeros((2 * N, 2 * N), dtype=complex)
    idx = np.arange(N)
    for a in range(2):
        for b in range(2):
            out[2 * idx + a, 2 * idx + b] = blocks[:, a, b]
    return out


def blocks_to_matrix(blocks: np.ndarray) -> np.ndarray:
    """(N, M, 2, 2) blocks → (2N, 2M) matrix."""
    N, M = blocks.shape[:2]
    return np.ascontiguousarray(np.transpose(blocks, (0, 2, 1, 3))).reshape(2 * N, 2 * M)


def matrix_to_blocks(mat: np.ndarray) -> np.ndarray:
    n2, m2 = mat.shape
    return np.transpose(mat.reshape(n2 // 2, 2, m2 // 2, 2), (0, 2, 1, 3))


def block_norms(blocks: np.ndarray) -> np.ndarray:
    """Spectral norms of 2×2 blocks (..., 2, 2) in closed form."""
    fro2 = np.sum(np.abs(blocks) ** 2, axis=(-2, -1))
    det = blocks[..., 0, 0] * blocks[..., 1, 1] - blocks[..., 0, 1] * blocks[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2 ** 2 - 4.0 * np.abs(det) ** 2, 0.0))
    return np.sqrt(0.5 * (fro2 + disc))


# --- Block operators --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockOperator:
    matrix: np.ndarray
    grid: Grid2
    tag: str = ""
    lam: float | None = None

    @classmethod
    def from_kernel_blocks(cls, grid: Grid2, blocks: np.ndarray, tag: str = "custom",
                           lam: float | None = None) -> "BlockOperator":
        sw = np.sqrt(grid.weights)
        scaled = blocks * (sw[:, None] * sw[None, :])[..., None, None]
        return cls(blocks_to_matrix(scaled), grid, tag, lam)

    @property
    def N(self) -> int:
        return self.grid.N

    def nodal_matrix(self) -> np.ndarray:
        sw = self.grid.sqrt_weights
        return self.matrix / sw[:, None] * sw[None, :]

    def kernel_blocks(self) -> np.ndarray:
        sw = np.sqrt(self.grid.weights)
        return matrix_to_blocks(self.matrix) / (sw[:, None] * sw[None, :])[..., None, None]

    def apply(self, values: SpinorField) -> SpinorField:
        coords = self.grid.to_coordinates(np.asarray(values, dtype=complex))
        return self.grid.from_coordinates(self.matrix @ coords)

    def adjoint(self) -> "BlockOperator":
        return replace(self, matrix=self.matrix.conj().T, tag=f"{self.tag}^*")

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_self_adjoint(self, tol: float = 1e-10) -> bool:
        return self.hermiticity_defect() < tol

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        return operator_compose(self, other)

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        _check_same_grid(self, other)
        return BlockOperator(self.matrix + other.matrix, self.grid, f"({self.tag}+{other.tag})")

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        _check_same_grid(self, other)
        return BlockOperator(self.matrix - other.matrix, self.grid, f"({self.tag}-{other.tag})")

    def scaled(self, factor: complex) -> "BlockOperator":
        return replace(self, matrix=factor * self.matrix)


def _check_same_grid(A: BlockOperator, B: BlockOperator):
    if not A.grid.same_as(B.grid):
        raise ValidationError("Grid mismatch between block operators")


def operator_compose(A: BlockOperator, B: BlockOperator) -> BlockOperator:
    _check_same_grid(A, B)
    return BlockOperator(A.matrix @ B.matrix, A.grid, f"{A.tag}*{B.tag}")


def identity_operator(grid: Grid2) -> BlockOperator:
    return BlockOperator(np.eye(2 * grid.N, dtype=complex), grid, "I")


def multiplication_operator(grid: Grid2, blocks: np.ndarray, tag: str = "mult") -> BlockOperator:
    return BlockOperator(block_diagonal(np.asarray(blocks, dtype=complex)), grid, tag)


# --- Assembly ---------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Kernel tag plus parameters. R0: Schrödinger resolvent (scalar), RD: Dirac
    resolvent, MU0: spectral density; the expansion tags take no parameters."""
    tag: str
    sign: int = 1
    lam: float | None = None
    cutoff: CutoffSpec | None = None

    def __post_init__(self):
        if self.tag not in KERNEL_TAGS:
            raise ValidationError(f"Unknown kernel tag '{self.tag}'")
        object.__setattr__(self, 'sign', sign_value(self.sign))
        if self.tag in ("R0", "RD", "MU0") and self.lam is None:
            raise ValidationError(f"Kernel {self.tag} needs a lambda")


def kernel_radial(kernel: KernelSpec, r):
    """(a, b) coefficients of the kernel at radii r > 0."""
    if kernel.tag == "R0":
        a = schrodinger_radial(kernel.sign, kernel.lam, r)
        return a, np.zeros_like(a)
    if kernel.tag == "RD":
        return dirac_radial(kernel.sign, kernel.lam, r)
    if kernel.tag == "MU0":
        return mu0_radial(kernel.lam, r, kernel.cutoff)
    return expansion_radial(kernel.tag, r)


def log_cell_integral(a, b):
    """∫∫ log|z| over [-a, a] × [-b, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    phi = 0.5 * (a * b * np.log(a ** 2 + b ** 2) - 3.0 * a * b
                 + a ** 2 * np.arctan(b / a) + b ** 2 * np.arctan(a / b))
    return 4.0 * phi


def diagonal_blocks(kernel: KernelSpec, grid: Grid2) -> np.ndarray:
    """
    Cell integrals of the kernel over each node's own quadrature cell.
    Odd parts (α·(x-y) terms) integrate to zero on the symmetric cell; the
    logarithm is integrated exactly.
    """
    w = grid.weights
    hw = grid.cell_half_widths
    c_log = -log_cell_integral(hw[:, 0], hw[:, 1]) / (2.0 * np.pi)
    tag = kernel.tag
    if tag in LOG_SINGULAR_TAGS:
        scalar = c_log
    elif tag == "G11":
        scalar = w
    elif tag == "R0":
        scalar = g_pm(kernel.sign, kernel.lam) * w + c_log
    elif tag == "RD":
        sigma = int(branch_sign(kernel.sign, kernel.lam))
        lam = float(kernel.lam)
        scalar = lam * (g_pm(sigma, abs(lam)) * w + c_log)
    elif tag == "MU0":
        a0, _ = mu0_radial(kernel.lam, 0.0, kernel.cutoff)
        scalar = a0 * w
    else:
        scalar = np.zeros_like(w)
    return np.asarray(scalar, dtype=complex)[:, None, None] * IDENTITY


def assemble(kernel: KernelSpec | str, grid: Grid2, left_weight: np.ndarray | None = None,
             right_weight: np.ndarray | None = None) -> BlockOperator:
    """
    Nyström matrix of left(x) K(x, y) right(y). Off-diagonal blocks carry the
    quadrature weights, diagonal blocks are cell integrals of the kernel.
    """
    if isinstance(kernel, str):
        kernel = KernelSpec(kernel)
    radii, _, _ = grid.radius_table
    a_u, b_u = kernel_radial(kernel, radii)
    return _assemble_radial(a_u, b_u, kernel, grid, left_weight, right_weight)


def _assemble_radial(a_u, b_u, kernel: KernelSpec, grid: Grid2, left_weight=None,
                     right_weight=None) -> BlockOperator:
    radii, inverse, mask = grid.radius_table
    _, e = grid.separations
    N = grid.N
    a = np.zeros((N, N), dtype=complex)
    b = np.zeros((N, N), dtype=complex)
    a[mask] = np.broadcast_to(a_u, radii.shape)[inverse]
    b[mask] = np.broadcast_to(b_u, radii.shape)[inverse]
    sw = np.sqrt(grid.weights)
    ww = sw[:, None] * sw[None, :]
    blocks = (a * ww)[..., None, None] * IDENTITY
    if np.any(b):
        blocks += (b * ww)[..., None, None] * alpha_dot(e)
    idx = np.arange(N)
    blocks[idx, idx] = diagonal_blocks(kernel, grid)
    if left_weight is not None:
        blocks = np.einsum('iab,ijbc->ijac', left_weight, blocks)
    if right_weight is not None:
        blocks = np.einsum('ijab,jbc->ijac', blocks, right_weight)
    return BlockOperator(blocks_to_matrix(blocks), grid, kernel.tag, kernel.lam)


def assemble_resolvent_pair(lam: float, grid: Grid2) -> dict:
    """Dirac resolvents R0(λ) for both signs, {+1: op, -1: op}."""
    radii, _, _ = grid.radius_table
    coeffs = dirac_radial_pair(lam, radii)
    return {s: _assemble_radial(*coeffs[s], KernelSpec("RD", s, lam), grid) for s in (1, -1)}


# --- Norms ------------------------------------------------------------------

def weighted_supnorm(K, gamma: float) -> float:
    """
    sup over sampled pairs of |K(x, y)| ⟨x⟩^{-γ} ⟨y⟩^{-γ}. Accepts a
    BlockOperator (node pairs) or any object with `blocks`, `x`, `y`.
    """
    if not np.isfinite(gamma):
        raise DomainError("gamma must be finite")
    if isinstance(K, BlockOperator):
        blocks = K.kernel_blocks()
        wx = bracket(K.grid.nodes) ** (-gamma)
        weight = wx[:, None] * wx[None, :]
    else:
        blocks = np.asarray(K.blocks)
        weight = bracket(K.x) ** (-gamma) * bracket(K.y) ** (-gamma)
    return float(np.max(block_norms(blocks) * weight))


# --- Differentiation --------------------------------------------------------

def differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    """Derivative of the polynomial interpolant through the nodes (barycentric form)."""
    x = np.asarray(nodes, dtype=float)
    scale = max(np.max(np.abs(x)), 1e-300)
    t = x / scale
    diff = t[:, None] - t[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    D = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -np.sum(D, axis=1))
    return D / scale


def spectral_derivative(grid: Grid2, values: np.ndarray, axis: int) -> np.ndarray:
    n = grid.n_per_axis
    D = differentiation_matrix(grid.axis_nodes)
    shaped = np.asarray(values).reshape((n, n) + np.shape(values)[1:])
    out = np.moveaxis(np.tensordot(D, np.moveaxis(shaped, axis, 0), axes=(1, 0)), 0, axis)
    return out.reshape(np.shape(values))


def apply_dirac(grid: Grid2, values: SpinorField) -> SpinorField:
    """D0 ψ = -i(α1 ∂1 + α2 ∂2) ψ by spectral differentiation."""
    d1 = spectral_derivative(grid, values, 0)
    d2 = spectral_derivative(grid, values, 1)
    return -1j * (d1 @ ALPHA1.T + d2 @ ALPHA2.T)


# --- Quadrature properties --------------------------------------------------

def spatial_integral(grid: Grid2, x, y, k: float, l: float, beta: float) -> float:
    """∫ ⟨z⟩^{-β} |x - z|^{-k} |z - y|^{-l} dz by grid quadrature (x, y off-grid)."""
    z = grid.nodes
    rx = np.linalg.norm(z - np.asarray(x, dtype=float), axis=-1)
    ry = np.linalg.norm(z - np.asarray(y, dtype=float), axis=-1)
    if np.any(rx == 0) or np.any(ry == 0):
        raise DomainError("spatial_integral needs x, y off the grid nodes")
    return float(np.sum(grid.weights * bracket(z) ** (-beta) * rx ** (-k) * ry ** (-l)))


def lippmann_schwinger_resolvent(sign, lam: float, fp: FactoredPotential) -> BlockOperator:
    """Dense solution of (I + R0 V) R_V = R0 on the grid."""
    grid = fp.grid
    R0 = assemble(KernelSpec("RD", sign, lam), grid).matrix
    system = np.eye(2 * grid.N, dtype=complex) + pointwise_right(R0, fp.V)
    RV = linalg.solve(system, R0)
    return BlockOperator(RV, grid, "RV", lam)
