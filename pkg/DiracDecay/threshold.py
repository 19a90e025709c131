"""
Zero-energy threshold analysis for H = D0 + V with V = v* U v:
- T = U + v G00 v*, the kernel projection S1 and its splitting S1 = Q + S2.
- Classification (regular / p_resonance / eigenvalue / mixed) with the
  resonance functions ψ = -G00 v* φ and their residual and tail diagnostics.
- Inversion of A(λ), B(λ) and M(λ) = U + v R0(λ) v* near λ = 0 through the
  Jensen–Nenciu lemma and the Feshbach formula.
- The zero-energy eigenprojection P0, the quadratic-form identity and
  coupling tuning that produces non-regular instances.

Kernel-space work is done in the coordinates of an orthonormal basis of
range(S1), ordered [Q | S2].
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .discretize import (BlockOperator, FactoredPotential, Grid2, PotentialSpec, SpinorField,
                         apply_dirac, assemble, block_diagonal, factor_potential, frame_quadrature,
                         KernelSpec, multiplication_operator, pointwise_left, pointwise_right)
from .errors import (AmbiguousKernelError, DomainError, IllConditionedError, InconsistencyError,
                     LambdaTooLargeError, NoEigenspaceError, NotFoundError, NotInvertibleError,
                     PreconditionError)
from .freeops import expansion_kernel
from .specfun import g_branch, sign_value

logger = logging.getLogger(__name__)

CLASSIFICATIONS = ("regular", "p_resonance", "eigenvalue", "mixed")
TUNE_TARGETS = ("any", "resonance", "eigenvalue")


@dataclass(frozen=True)
class Tolerances:
    kernel_rel: float = 1e-6      # |eig T| < kernel_rel · σ_max(T) counts as kernel
    gap_factor: float = 10.0
    s2_rel: float = 1e-6          # relative to ‖∫ v* v‖
    cond_max: float = 1e12
    moment_rel: float = 1e-4      # ∫ v*φ = 0 test for the form identity
    residual_max: float = 0.05


@dataclass(eq=False)
class ThresholdReport:
    classification: str
    rank_S1: int
    rank_S2: int
    sigma_min_T: float
    sigma_max_T: float
    tolerance: float
    basis_S1: list = field(default_factory=list)             # φ, nodal values, [Q | S2]
    resonance_functions: list = field(default_factory=list)  # ψ = -G00 v* φ
    residuals: list = field(default_factory=list)            # ‖(D0 + V)ψ‖ / ‖ψ‖
    moments: list = field(default_factory=list)              # |∫ v* φ|
    tail_ratios: list = field(default_factory=list)
    coupling: float | None = None
    coords: np.ndarray | None = field(default=None, repr=False)
    operators: dict = field(default_factory=dict, repr=False)

    @property
    def rank_Q(self) -> int:
        return self.rank_S1 - self.rank_S2

    @property
    def coords_Q(self) -> np.ndarray:
        return self.coords[:, :self.rank_Q]

    @property
    def coords_S2(self) -> np.ndarray:
        return self.coords[:, self.rank_Q:]

    def projector(self, part: str = "S1") -> BlockOperator:
        """Orthogonal projection onto range(S1), range(Q) or range(S2)."""
        basis = {'S1': self.coords, 'Q': self.coords_Q, 'S2': self.coords_S2}.get(part)
        if basis is None:
            raise DomainError(f"Unknown kernel part '{part}'")
        return _projector(self.operators['T'].grid, basis, part)

    def summary(self) -> dict:
        return {
            'classification': self.classification,
            'rank_S1': int(self.rank_S1),
            'rank_S2': int(self.rank_S2),
            'sigma_min_T': float(self.sigma_min_T),
            'sigma_max_T': float(self.sigma_max_T),
            'kernel_tolerance': float(self.tolerance),
            'coupling': None if self.coupling is None else float(self.coupling),
            'residuals': [float(r) for r in self.residuals],
            'moments': [float(m) for m in self.moments],
            'tail_ratios': [float(t) for t in self.tail_ratios],
        }


def classification_from_ranks(rank_S1: int, rank_S2: int) -> str:
    if rank_S1 == 0:
        return "regular"
    if rank_S2 == 0:
        return "p_resonance"
    if rank_S1 == rank_S2:
        return "eigenvalue"
    return "mixed"


# --- T and its kernel ---------------------------------------------------------

def coupling_operator(fp: FactoredPotential, G00: BlockOperator | None = None) -> np.ndarray:
    """v G00 v* as a dense symmetric-coordinate matrix."""
    if G00 is None:
        G00 = assemble("G00", fp.grid)
    return pointwise_left(fp.v, pointwise_right(G00.matrix, fp.v_adjoint))


def build_T(fp: FactoredPotential, grid: Grid2, G00: BlockOperator | None = None) -> BlockOperator:
    if G00 is None:
        G00 = assemble("G00", grid)
    U = multiplication_operator(grid, fp.U_blocks, "U")
    matrix = U.matrix + coupling_operator(fp, G00)
    T = BlockOperator(matrix, grid, "T", 0.0)
    logger.debug("Assembled T (hermiticity defect %.2e)", T.hermiticity_defect())
    return T


def kernel_basis(T: BlockOperator, tol: float | None = None, gap_factor: float = 10.0,
                 rel: float = 1e-6):
    """Orthonormal eigenvectors of T with |eigenvalue| < tol, plus the spectrum."""
    evals, evecs = linalg.eigh(T.matrix)
    sigma_max = float(np.max(np.abs(evals))) if evals.size else 0.0
    if tol is None:
        tol = rel * sigma_max
    mags = np.abs(evals)
    ambiguous = (mags >= tol) & (mags < gap_factor * tol)
    if np.any(ambiguous):
        raise AmbiguousKernelError(
            f"Eigenvalues of T inside the gap [{tol:.3e}, {gap_factor * tol:.3e}]",
            eigenvalues=evals[ambiguous])
    return evecs[:, mags < tol], evals, tol


def projection_basis(P: BlockOperator) -> np.ndarray:
    evals, evecs = linalg.eigh(0.5 * (P.matrix + P.matrix.conj().T))
    return evecs[:, evals > 0.5]


def _projector(grid: Grid2, basis: np.ndarray, tag: str) -> BlockOperator:
    return BlockOperator(basis @ basis.conj().T, grid, tag)


def riesz_projection_S1(T: BlockOperator, tol: float | None = None, gap_factor: float = 10.0):
    basis, _, _ = kernel_basis(T, tol, gap_factor)
    return _projector(T.grid, basis, "S1"), basis.shape[1]


def moments(basis: np.ndarray, fp: FactoredPotential) -> np.ndarray:
    """∫ v* φ for each basis column (symmetric coordinates), shape (2, k)."""
    grid = fp.grid
    vstar = pointwise_left(fp.v_adjoint, basis).reshape(grid.N, 2, -1)
    return np.einsum('n,nak->ak', np.sqrt(grid.weights), vstar)


def split_kernel(basis: np.ndarray, fp: FactoredPotential, tolerances: Tolerances = Tolerances()):
    """Splits range(S1) into range(Q) and range(S2) = kernel of S1 v G11 v* S1."""
    k = basis.shape[1]
    if k == 0:
        return basis, basis
    m = moments(basis, fp)
    gram = m.conj().T @ m
    mu, Y = linalg.eigh(gram)
    vv = np.einsum('n,nab->ab', fp.grid.weights, np.conj(np.swapaxes(fp.v, -1, -2)) @ fp.v)
    tol = tolerances.s2_rel * max(float(np.max(linalg.eigvalsh(vv))), 1e-300)
    ambiguous = (mu >= tol) & (mu < tolerances.gap_factor * tol)
    if np.any(ambiguous):
        raise AmbiguousKernelError("Ambiguous S2 splitting", eigenvalues=mu[ambiguous])
    in_s2 = mu < tol
    rotated = basis @ Y
    q_basis, s2_basis = rotated[:, ~in_s2], rotated[:, in_s2]
    if q_basis.shape[1] > 2:
        raise InconsistencyError(f"rank(Q) = {q_basis.shape[1]} > 2; refine the grid")
    return q_basis, s2_basis


def build_S2(S1: BlockOperator, fp: FactoredPotential, tolerances: Tolerances = Tolerances()):
    q_basis, s2_basis = split_kernel(projection_basis(S1), fp, tolerances)
    return _projector(S1.grid, s2_basis, "S2"), _projector(S1.grid, q_basis, "Q")


# --- Classification -----------------------------------------------------------

def resonance_function(G00: BlockOperator, fp: FactoredPotential, phi_coords: np.ndarray):
    """ψ = -G00 v* φ as nodal values."""
    coords = -G00.matrix @ pointwise_left(fp.v_adjoint, phi_coords)
    return fp.grid.from_coordinates(coords)


def dirac_residual(grid: Grid2, fp: FactoredPotential, psi: SpinorField) -> float:
    """‖(D0 + V)ψ‖ / ‖ψ‖ with D0 applied spectrally."""
    r = apply_dirac(grid, psi) + np.einsum('nab,nb->na', fp.V, psi)
    norm = grid.l2_norm(psi)
    return grid.l2_norm(r) / norm if norm > 0 else 0.0


def resonance_profile(points, moment) -> np.ndarray:
    """-iα·x/(2π⟨x⟩²) m, the leading large-|x| term of a p-wave resonance."""
    points = np.asarray(points, dtype=float)
    r2 = 1.0 + np.sum(points ** 2, axis=-1)
    block = expansion_kernel("G21", points, np.zeros(2)) / (-2.0)  # = iα·x
    return -np.einsum('nab,b->na', block, moment) / (2.0 * np.pi * r2[:, None])


def tail_ratio(grid: Grid2, psi: SpinorField, moment=None) -> float:
    """
    Mass over the outer half-box (|x|_∞ > L/2). With a moment, the ratio of the
    tail mass of ψ minus its resonance profile to that of ψ; without one, the
    fraction of the mass of ψ lying in the tail.
    """
    outer = np.max(np.abs(grid.nodes), axis=-1) > grid.L / 2
    density = np.sum(np.abs(psi) ** 2, axis=-1)
    tail = np.sum(grid.weights[outer] * density[outer])
    if moment is None:
        total = np.sum(grid.weights * density)
        return float(tail / total) if total > 0 else 0.0
    remainder = psi - resonance_profile(grid.nodes, moment)
    rem = np.sum(grid.weights[outer] * np.sum(np.abs(remainder[outer]) ** 2, axis=-1))
    return float(rem / tail) if tail > 0 else 0.0


def classify(spec: PotentialSpec, grid: Grid2, tolerances: Tolerances = Tolerances(),
             fp: FactoredPotential | None = None) -> ThresholdReport:
    if fp is None:
        fp = factor_potential(spec, grid)
    G00 = assemble("G00", grid)
    T = build_T(fp, grid, G00)
    basis, evals, tol = kernel_basis(T, None, tolerances.gap_factor, tolerances.kernel_rel)
    q_basis, s2_basis = split_kernel(basis, fp, tolerances)
    coords = np.hstack([q_basis, s2_basis])
    mags = np.abs(evals)
    report = ThresholdReport(
        classification=classification_from_ranks(coords.shape[1], s2_basis.shape[1]),
        rank_S1=coords.shape[1], rank_S2=s2_basis.shape[1],
        sigma_min_T=float(np.min(mags)), sigma_max_T=float(np.max(mags)), tolerance=tol,
        coupling=float(spec.coupling), coords=coords,
        operators={'G00': G00, 'T': T, 'fp': fp})
    m = moments(coords, fp) if coords.shape[1] else np.zeros((2, 0))
    for j in range(coords.shape[1]):
        phi = grid.from_coordinates(coords[:, j])
        psi = resonance_function(G00, fp, coords[:, j])
        mismatch = grid.l2_norm(reconstruct_phi(psi, fp) - phi) / max(grid.l2_norm(phi), 1e-300)
        if mismatch > tolerances.residual_max:
            raise InconsistencyError(f"U v ψ misses φ_{j} by {mismatch:.3e}")
        report.basis_S1.append(phi)
        report.resonance_functions.append(psi)
        report.residuals.append(dirac_residual(grid, fp, psi))
        report.moments.append(float(np.linalg.norm(m[:, j])))
        in_q = j < report.rank_Q
        report.tail_ratios.append(tail_ratio(grid, psi, m[:, j] if in_q else None))
    logger.info("Threshold: %s (rank S1 = %d, rank S2 = %d, sigma_min = %.3e)",
                report.classification, report.rank_S1, report.rank_S2, report.sigma_min_T)
    return report


def reconstruct_phi(psi: SpinorField, fp: FactoredPotential) -> SpinorField:
    """φ = U v ψ, the inverse of ψ = -G00 v* φ on ker T."""
    vpsi = np.einsum('nab,nb->na', fp.v, psi)
    return fp.U * vpsi


# --- Jensen–Nenciu inversion -------------------------------------------------

def _inverse(matrix: np.ndarray, cond_max: float, what: str, lam=None, exc=IllConditionedError):
    cond = np.linalg.cond(matrix) if matrix.size else 1.0
    if not np.isfinite(cond) or cond > cond_max:
        if exc is IllConditionedError:
            raise IllConditionedError(f"{what} has condition number {cond:.3e}", lam, cond)
        raise exc(f"{what} has condition number {cond:.3e}")
    return linalg.inv(matrix)


def jn_invert(M: np.ndarray, S: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """
    M^{-1} = (M+S)^{-1} + (M+S)^{-1} S B^{-1} S (M+S)^{-1} with
    B = S - S (M+S)^{-1} S inverted on range(S).
    """
    M = np.asarray(M, dtype=complex)
    S = np.asarray(S, dtype=complex)
    X = _inverse(M + S, 1.0 / rcond, "M + S", exc=NotInvertibleError)
    if not np.any(S):
        return X
    u, s, _ = linalg.svd(S)
    P = u[:, s > rcond * s[0]]
    B = S - S @ X @ S
    C = P.conj().T @ B @ P
    C_inv = _inverse(C, 1.0 / rcond, "B on range(S); M is not invertible", exc=NotInvertibleError)
    return X + X @ P @ C_inv @ (P.conj().T @ S @ X)


@dataclass(frozen=True, eq=False)
class SubspaceOperator:
    """Operator on range(S1) given by a k×k matrix in an orthonormal basis."""
    basis: np.ndarray
    matrix: np.ndarray

    def ambient(self) -> np.ndarray:
        return self.basis @ self.matrix @ self.basis.conj().T


class InversionBundle:
    """
    Cached inverses near the threshold for one factored potential:
    T1 = (T + S1)^{-1}, A(λ)^{-1} on range(S1), M(λ)^{-1}, and the measured
    remainders E2, E3, E4.
    """

    def __init__(self, report: ThresholdReport, fp: FactoredPotential,
                 tolerances: Tolerances = Tolerances()):
        self.report = report
        self.fp = fp
        self.grid = fp.grid
        self.tolerances = tolerances
        self.basis = report.coords
        self.k = report.rank_S1
        self.k_q = report.rank_Q
        self.T = report.operators['T'].matrix
        self.S1 = self.basis @ self.basis.conj().T
        self.T1 = _inverse(self.T + self.S1, tolerances.cond_max, "T + S1")
        G10 = assemble("G10", self.grid)
        self.vG10v = pointwise_left(fp.v, pointwise_right(G10.matrix, fp.v_adjoint))
        self.c10 = self.basis.conj().T @ self.vG10v @ self.basis
        m = moments(self.basis, fp) if self.k else np.zeros((2, 0))
        self.c11 = m.conj().T @ m
        self.A_inv = {}
        self.M_inv = {}
        self.error_terms = {}

    # -- M(λ) ------------------------------------------------------------------
    def m_matrix(self, sign, lam: float, resolvent: np.ndarray | None = None) -> np.ndarray:
        if resolvent is None:
            resolvent = assemble(KernelSpec("RD", sign, lam), self.grid).matrix
        R0 = resolvent
        return (block_diagonal(self.fp.U_blocks)
                + pointwise_left(self.fp.v, pointwise_right(R0, self.fp.v_adjoint)))

    def m_expansion_error(self, sign, lam: float, resolvent: np.ndarray | None = None) -> float:
        """‖M(λ) - T‖, of order λ log λ."""
        return float(np.linalg.norm(self.m_matrix(sign, lam, resolvent) - self.T, 2))

    # -- A(λ) ------------------------------------------------------------------
    def a_matrix(self, sign, lam: float) -> np.ndarray:
        return g_branch(sign, lam) * self.c11 + self.c10

    def q_block_coefficients(self):
        """(c1, c2) on range(Q) with QAQ = c1 g(λ) + c2; 1 × 1 when rank(Q) = 1."""
        if self.k_q == 0:
            raise DomainError("q_block_coefficients needs rank(Q) >= 1")
        q = slice(0, self.k_q)
        return self.c11[q, q], self.c10[q, q]

    def invert_A(self, sign, lam: float) -> SubspaceOperator:
        if self.k == 0:
            raise PreconditionError("A(λ) lives on range(S1), which is trivial")
        key = (sign_value(sign), float(lam))
        if key in self.A_inv:
            return self.A_inv[key]
        q, s2 = slice(0, self.k_q), slice(self.k_q, self.k)
        cond_max = self.tolerances.cond_max
        a22 = self.c10[s2, s2]
        if self.k_q == 0:
            inv = _inverse(a22, cond_max, "S2 v G10 v* S2", lam)
        else:
            A = self.a_matrix(sign, lam)
            c1, c2 = self.q_block_coefficients()
            qaq = g_branch(sign, lam) * c1 + c2
            if self.k_q == self.k:
                inv = _inverse(qaq, cond_max, "Q A Q", exc=LambdaTooLargeError)
            else:
                a22_inv = _inverse(a22, cond_max, "S2 v G10 v* S2", lam)
                a12, a21 = A[q, s2], A[s2, q]
                schur = qaq - a12 @ a22_inv @ a21
                a = _inverse(schur, cond_max, "Q-block Schur complement", exc=LambdaTooLargeError)
                inv = np.zeros((self.k, self.k), dtype=complex)
                inv[q, q] = a
                inv[q, s2] = -a @ a12 @ a22_inv
                inv[s2, q] = -a22_inv @ a21 @ a
                inv[s2, s2] = a22_inv @ a21 @ a @ a12 @ a22_inv + a22_inv
        result = SubspaceOperator(self.basis, inv)
        self.A_inv[key] = result
        return result

    # -- M(λ)^{-1} ---------------------------------------------------------------
    def invert_M(self, sign, lam: float, diagnostics: bool = False, cache: bool = False,
                 resolvent: np.ndarray | None = None) -> BlockOperator:
        """M(λ)^{-1}. Pass `resolvent` to reuse an assembled R0(λ) matrix; results
        are only memoised with cache=True (each is a dense 2N × 2N matrix)."""
        key = (sign_value(sign), float(lam))
        if key in self.M_inv and not diagnostics:
            return self.M_inv[key]
        cond_max = self.tolerances.cond_max
        M = self.m_matrix(sign, lam, resolvent)
        terms = {}
        if self.k == 0:
            M_inv = _inverse(M, cond_max, "M(λ)", lam)
        else:
            X = _inverse(M + self.S1, cond_max, "M(λ) + S1", lam)
            Bk = np.eye(self.k) - self.basis.conj().T @ X @ self.basis
            Bk_inv = _inverse(Bk, cond_max, "B(λ) on range(S1)", lam)
            M_inv = X + X @ self.basis @ Bk_inv @ self.basis.conj().T @ X
            if diagnostics:
                A_inv = self.invert_A(sign, lam)
                leading = A_inv.ambient() / lam
                terms['E3'] = float(np.linalg.norm(Bk_inv - A_inv.matrix / lam, 2))
                terms['E4'] = float(np.linalg.norm(M_inv - leading, 2))
                g = g_branch(sign, lam)
                vG11v = self.basis_free_vG11v()
                expansion = (self.T1 - lam * g * self.T1 @ vG11v @ self.T1
                             - lam * self.T1 @ self.vG10v @ self.T1)
                terms['E2'] = float(np.linalg.norm(X - expansion, 2))
        terms['residual'] = float(np.max(np.abs(M @ M_inv - np.eye(M.shape[0]))))
        if diagnostics:
            terms['M_minus_T'] = self.m_expansion_error(sign, lam, resolvent)
            cond = np.linalg.cond(M)
            if cond < cond_max:
                terms['dense_mismatch'] = float(np.max(np.abs(linalg.inv(M) - M_inv)))
            logger.debug("invert_M(%+d, %.3e): %s", key[0], lam, terms)
        result = BlockOperator(M_inv, self.grid, "Minv", lam)
        if cache:
            self.M_inv[key] = result
        self.error_terms[key] = terms
        return result

    def basis_free_vG11v(self) -> np.ndarray:
        """v G11 v* as a dense matrix: rank two, J J* with (J c)(x) = v(x) c."""
        grid = self.grid
        J = (np.sqrt(grid.weights)[:, None, None] * self.fp.v).reshape(2 * grid.N, 2)
        return J @ J.conj().T

    # -- F_t inner factor ---------------------------------------------------------
    def ft_inner(self, lam: float) -> np.ndarray:
        """(A+(λ)^{-1} - A-(λ)^{-1}) / λ in kernel coordinates."""
        return (self.invert_A(+1, lam).matrix - self.invert_A(-1, lam).matrix) / lam


# --- Eigenprojection and the form identity ----------------------------------

def eigenspace_forms(report: ThresholdReport, fp: FactoredPotential):
    """
    (Ψ, form, gram) on range(S2): the columns of Ψ are ψ_a = -G00 v* φ_a in
    grid coordinates, form = S2 v G10 v* S2 and gram = ⟨ψ_a, ψ_b⟩ on the grid.
    """
    if report.rank_S2 == 0:
        raise NoEigenspaceError("No zero-energy eigenvalue: rank S2 = 0")
    G00 = report.operators.get('G00') or assemble("G00", fp.grid)
    vstar = pointwise_left(fp.v_adjoint, report.coords_S2)
    Psi = -(G00.matrix @ vstar)
    form = vstar.conj().T @ assemble("G10", fp.grid).matrix @ vstar
    form = 0.5 * (form + form.conj().T)
    return Psi, form, Psi.conj().T @ Psi


def projector_defect(form: np.ndarray, gram: np.ndarray) -> float:
    """‖F^{-1/2} gram F^{-1/2} - I‖; bounds |tr P0 - rank S2| / rank S2 and vanishes
    exactly when the grid Gram reproduces the G10 form."""
    w, V = linalg.eigh(form)
    if w[0] <= 0:
        raise InconsistencyError(f"S2 v G10 v* S2 is not positive (min eigenvalue {w[0]:.3e})")
    half = (V / np.sqrt(w)) @ V.conj().T
    return float(np.linalg.norm(half @ gram @ half - np.eye(len(w)), 2))


def eigenprojection_P0(report: ThresholdReport, fp: FactoredPotential, inner: str = "G10",
                       budget: float = 0.05) -> BlockOperator:
    """
    P0 = G00 v* S2 [S2 v G10 v* S2]^{-1} S2 v G00 on the grid.

    P0² - P0 = Ψ F^{-1} (gram - F) F^{-1} Ψ^H, so P0 is a projector exactly as
    far as the grid resolves the quadratic-form identity; a defect above
    `budget` is logged. inner="gram" puts the grid Gram in the middle instead,
    the orthogonal projector onto span ψ.
    """
    Psi, form, gram = eigenspace_forms(report, fp)
    if inner == "G10":
        middle = form
        defect = projector_defect(form, gram)
        if defect > budget:
            logger.warning("P0: grid Gram departs from the G10 form by %.3e; refine the grid",
                           defect)
    elif inner == "gram":
        middle = gram
    else:
        raise DomainError(f"Unknown inner form '{inner}'")
    P0 = Psi @ linalg.solve(middle, Psi.conj().T, assume_a='her')
    return BlockOperator(P0, fp.grid, "P0")


def _psi_at(points, fp: FactoredPotential, phi: SpinorField) -> np.ndarray:
    """-∫ G00(x, y) v*(y) φ(y) dy at off-grid points."""
    grid = fp.grid
    source = grid.weights[:, None] * np.einsum('nab,nb->na', fp.v_adjoint, phi)
    out = np.zeros((len(points), 2), dtype=complex)
    for start in range(0, len(points), 512):
        chunk = points[start:start + 512]
        blocks = expansion_kernel("G00", chunk[:, None, :], grid.nodes[None, :, :])
        out[start:start + 512] = -np.einsum('pnab,nb->pa', blocks, source)
    return out


def verify_form_identity(phi: SpinorField, fp: FactoredPotential, grid: Grid2,
                         tolerances: Tolerances = Tolerances(), outer_factor: float = 8.0,
                         G00: BlockOperator | None = None):
    """
    lhs = ‖G00 v* φ‖² over ℝ² (grid box, graded outer frames and an r^{-4}
    tail estimate), rhs = ⟨v* φ, G10 v* φ⟩ on the grid.
    """
    coords = grid.to_coordinates(phi)
    moment = moments(coords[:, None], fp)[:, 0]
    vv = np.einsum('n,nab->ab', grid.weights, np.conj(np.swapaxes(fp.v, -1, -2)) @ fp.v)
    scale = np.sqrt(max(float(np.max(linalg.eigvalsh(vv))), 1e-300)) * grid.l2_norm(phi)
    if np.linalg.norm(moment) > tolerances.moment_rel * scale:
        raise PreconditionError(f"∫ v*φ = {np.linalg.norm(moment):.3e}: φ is not in range(S2)")
    if G00 is None:
        G00 = assemble("G00", grid)
    psi_grid = resonance_function(G00, fp, coords)
    lhs = float(np.real(grid.integrate(np.sum(np.abs(psi_grid) ** 2, axis=-1))))
    R = outer_factor * grid.L
    points, weights = frame_quadrature(grid, R)
    psi_frame = _psi_at(points, fp, phi)
    dens = np.sum(np.abs(psi_frame) ** 2, axis=-1)
    lhs += float(np.sum(weights * dens))
    radii = np.linalg.norm(points, axis=-1)
    rim = radii > 0.9 * R
    lhs += float(np.pi * np.median(dens[rim] * radii[rim] ** 4) / R ** 2)
    G10 = assemble("G10", grid)
    vstar = pointwise_left(fp.v_adjoint, coords)
    rhs = complex(vstar.conj() @ (G10.matrix @ vstar))
    return lhs, rhs


# --- Coupling tuning ------------------------------------------------------------

def _coupling_pencil(spec: PotentialSpec, grid: Grid2):
    fp = factor_potential(spec.with_coupling(1.0), grid)
    G00 = assemble("G00", grid)
    K = coupling_operator(fp, G00)
    K = 0.5 * (K + K.conj().T)
    U = fp.U.reshape(-1)
    return fp, G00, U, K


def scan_sigma_min(spec: PotentialSpec, grid: Grid2, s_values) -> np.ndarray:
    _, _, U, K = _coupling_pencil(spec, grid)
    return np.array([np.min(np.abs(linalg.eigvalsh(np.diag(U) + s * K))) for s in s_values])


def _crossing_candidates(U: np.ndarray, K: np.ndarray, s_min: float, s_max: float):
    # U + sK singular  <=>  U K φ = -(1/s) φ   (U² = I)
    mu = linalg.eigvals(U[:, None] * K)
    real = np.abs(mu.imag) <= 1e-8 * np.maximum(np.abs(mu), 1e-300)
    mu = mu.real[real & (mu.real < 0)]
    s = np.unique(np.round(-1.0 / mu, 12))
    return s[(s >= s_min) & (s <= s_max)]


def tune_coupling(spec: PotentialSpec, grid: Grid2, s_range=(0.1, 50.0), tol: float = 1e-8,
                  target: str = "any", tolerances: Tolerances = Tolerances()):
    """
    Coupling s* in s_range at which T(s) = U + s v G00 v* is singular.
    Crossings are seeded from the real spectrum of the pencil and polished by
    Brent's method on the sorted eigenvalue that changes sign; the first one
    whose classification matches `target` is returned with its report.
    """
    if target not in TUNE_TARGETS:
        raise DomainError(f"Unknown tuning target '{target}'")
    s_min, s_max = map(float, s_range)
    if not 0 < s_min < s_max:
        raise DomainError("s_range must be an ordered positive interval")
    fp, G00, U, K = _coupling_pencil(spec, grid)
    Umat = np.diag(U).astype(complex)

    def spectrum(s):
        return linalg.eigvalsh(Umat + s * K)

    candidates = _crossing_candidates(U, K, s_min, s_max)
    logger.info("Coupling scan: %d candidate crossings in [%g, %g]", len(candidates), s_min, s_max)
    for s_c in candidates:
        bracket = None
        for delta in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
            lo, hi = s_c * (1 - delta), s_c * (1 + delta)
            n_lo, n_hi = int(np.sum(spectrum(lo) < 0)), int(np.sum(spectrum(hi) < 0))
            if n_lo != n_hi:
                bracket = (lo, hi, n_lo if n_hi > n_lo else n_lo - 1)
                break
        if bracket is None:
            logger.debug("Candidate s = %.6g has no inertia change; skipped", s_c)
            continue
        lo, hi, idx = bracket
        s_star = optimize.brentq(lambda s: spectrum(s)[idx], lo, hi,
                                 xtol=1e-15 * s_c, rtol=4 * np.finfo(float).eps, maxiter=200)
        sigma = float(np.min(np.abs(spectrum(s_star))))
        if sigma > tol:
            logger.warning("Crossing near s = %.6g only reached sigma_min = %.3e", s_star, sigma)
            continue
        report = classify(spec.with_coupling(s_star), grid, tolerances, fp=fp.scaled(s_star))
        matches = (target == "any"
                   or (target == "resonance" and report.rank_Q > 0)
                   or (target == "eigenvalue" and report.classification == "eigenvalue"))
        if matches:
            logger.info("Tuned coupling s* = %.12g (%s)", s_star, report.classification)
            return s_star, report
    raise NotFoundError(f"No '{target}' crossing of T(s) in [{s_min}, {s_max}]")
