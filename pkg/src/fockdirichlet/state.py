"""Gibbs states, KMS inner products, L_p functionals and modular flow.

The state is rho = exp(-beta H)/Z with the eigendecomposition of H cached, so
arbitrary complex powers rho^z are cheap.  When H is diagonal in the
computational basis (every product-state scenario) the powers stay diagonal
and everything reduces to elementwise scaling; that fast path is detected at
construction.

Conventions, fixed here and assumed everywhere downstream:

  <f, g>      = Tr(rho^(1/2) f* rho^(1/2) g)        (KMS inner product)
  alpha_z(X)  = rho^(iz) X rho^(-iz)                 (modular flow)

so for H = N (single mode): alpha_z(A) = exp(i beta z) A, and the modular
eigenvalue convention is alpha_{i/2}(X) = exp(xi) X, i.e. xi = -beta/2 for
X = A.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .fock import LatticeConfig, LatticeOperator, _prune

# |Im z| guard for modular flow (configurable per state)
DEFAULT_GUARD = 1.0
CONDITION_LIMIT = 1e12


class ConditionWarning(UserWarning):
    pass


@dataclass
class GibbsState:
    """rho = exp(-beta H)/Z with cached eigendecomposition of H."""

    lattice: LatticeConfig
    beta: float
    energies: np.ndarray            # eigenvalues of H
    eigvecs: np.ndarray | None      # None when H is diagonal (fast path)
    log_Z: float
    product: bool = False           # H is a sum of single-site terms
    guard: float = DEFAULT_GUARD

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def diagonal(self) -> bool:
        return self.eigvecs is None

    @property
    def log_p(self) -> np.ndarray:
        """Log eigenvalues of rho."""
        return -self.beta * self.energies - self.log_Z

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_p)

    def power_diag(self, z: complex) -> np.ndarray:
        """Eigenvalues of rho^z (in the H eigenbasis)."""
        return np.exp(z * self.log_p)

    def power(self, z: complex):
        """rho^z as a sparse (diagonal case) or dense matrix."""
        d = self.power_diag(z)
        if self.diagonal:
            return sp.diags(d).tocsr()
        V = self.eigvecs
        return (V * d[None, :]) @ V.conj().T

    @property
    def rho(self):
        return self.power(1.0)

    @property
    def sqrt_rho(self):
        return self.power(0.5)

    def to_eigenbasis(self, m) -> np.ndarray:
        m = m.toarray() if sp.issparse(m) else np.asarray(m)
        if self.diagonal:
            return m
        V = self.eigvecs
        return V.conj().T @ m @ V

    def from_eigenbasis(self, m) -> np.ndarray:
        if self.diagonal:
            return m
        V = self.eigvecs
        return V @ m @ V.conj().T


def gibbs_state(H, beta: float, *, lattice: LatticeConfig | None = None,
                product: bool | None = None, guard: float = DEFAULT_GUARD,
                herm_tol: float = 1e-12) -> GibbsState:
    """Build the Gibbs state of a Hermitian lattice Hamiltonian.

    The partition constant is handled in the shifted log domain, so extreme
    beta * spectrum products do not overflow.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if isinstance(H, LatticeOperator):
        lattice = H.lattice
        m = H.matrix
    else:
        if lattice is None:
            raise ValueError("lattice required when H is a bare matrix")
        m = sp.csr_matrix(H)
    scale = max(sp.linalg.norm(m), 1.0)
    if sp.linalg.norm(m - m.conj().T) > herm_tol * scale:
        raise ValueError("Hamiltonian is not Hermitian within tolerance")

    off = m - sp.diags(m.diagonal())
    if off.nnz == 0 or sp.linalg.norm(off) <= 1e-14 * scale:
        energies = np.real(m.diagonal().copy())
        eigvecs = None
        diag = True
    else:
        energies, eigvecs = np.linalg.eigh(m.toarray())
        diag = False
    log_Z = float(logsumexp(-beta * energies))
    if product is None:
        product = diag
    return GibbsState(lattice=lattice, beta=beta, energies=np.asarray(energies, float),
                      eigvecs=eigvecs, log_Z=log_Z, product=product, guard=guard)


@dataclass
class KmsMetric:
    """The sesquilinear form <f, g> = Tr(rho^(1/2) f* rho^(1/2) g)."""

    state: GibbsState

    def inner(self, f, g) -> complex:
        fm = f.matrix if isinstance(f, LatticeOperator) else sp.csr_matrix(f)
        gm = g.matrix if isinstance(g, LatticeOperator) else sp.csr_matrix(g)
        if fm.shape != gm.shape or fm.shape[0] != self.state.dim:
            raise ValueError("operator dimensions do not match the state")
        if self.state.diagonal:
            s = np.exp(0.5 * self.state.log_p)
            # Tr(S f* S g) = sum_ij conj(f_ij) s_i s_j g_ij
            w = fm.conj().multiply(gm).tocoo()
            return complex(np.sum(w.data * s[w.row] * s[w.col]))
        r = self.state.power(0.5)
        return complex(np.trace(r @ fm.conj().T.toarray() @ r @ gm.toarray()))

    def norm(self, f) -> float:
        v = self.inner(f, f)
        return float(np.sqrt(max(v.real, 0.0)))

    def expectation(self, f) -> complex:
        """omega(f) = Tr(rho f)."""
        fm = f.matrix if isinstance(f, LatticeOperator) else sp.csr_matrix(f)
        if self.state.diagonal:
            p = self.state.probabilities
            return complex(np.sum(p * fm.diagonal()))
        return complex(np.trace(self.state.power(1.0) @ fm.toarray()))

    def variance(self, f) -> float:
        """||f - omega(f)||^2 in this metric."""
        v = self.inner(f, f).real - abs(self.expectation(f)) ** 2
        return float(max(v, 0.0))

    # --- vectorized-operator (superoperator) geometry -------------------
    # column-stacking vec: <f, g> = vec(f)^dag G vec(g) with
    # G = (rho^(1/2))^T kron rho^(1/2).

    def gram_weights(self) -> np.ndarray:
        """Diagonal of G in the H eigenbasis ordering (diagonal states only)."""
        if not self.state.diagonal:
            raise ValueError("gram_weights is only available for diagonal states")
        s = np.exp(0.5 * self.state.log_p)
        return np.kron(s, s)  # w[i + D*j] = s_i s_j with column stacking

    def vec_inner(self, x: np.ndarray, y: np.ndarray) -> complex:
        if self.state.diagonal:
            w = self.gram_weights()
            return complex(np.vdot(x, w * y))
        D = self.state.dim
        r = self.state.power(0.5)
        Y = y.reshape(D, D, order="F")
        return complex(np.vdot(x, (r @ Y @ r).reshape(-1, order="F")))

    def half_weight_matrices(self):
        """(M, Minv) with G^(1/2) vec(F) = vec(M F M) and M = rho^(1/4)."""
        M = self.state.power(0.25)
        Minv = self.state.power(-0.25)
        return M, Minv


def kms_inner(f, g, metric: KmsMetric) -> complex:
    return metric.inner(f, g)


def lp_norm(f, state: GibbsState, p: int, s: float) -> float:
    """||f||_{omega,p,s} = (Tr |rho^((1-s)/p) f rho^(s/p)|^p)^(1/p)."""
    if not (isinstance(p, (int, np.integer)) and p >= 1):
        raise ValueError(f"p must be an integer >= 1, got {p}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    fm = f.toarray() if isinstance(f, LatticeOperator) else np.asarray(
        f.toarray() if sp.issparse(f) else f)
    left = state.power((1.0 - s) / p)
    right = state.power(s / p)
    left = left.toarray() if sp.issparse(left) else left
    right = right.toarray() if sp.issparse(right) else right
    sv = np.linalg.svd(left @ fm @ right, compute_uv=False)
    return float(np.sum(sv ** p) ** (1.0 / p))


def modular_flow(X, state: GibbsState, z: complex) -> LatticeOperator:
    """alpha_z(X) = rho^(iz) X rho^(-iz), guarded on the imaginary strip."""
    if abs(np.imag(z)) > state.guard + 1e-12:
        raise ValueError(f"|Im z| = {abs(np.imag(z))} exceeds guard strip "
                         f"{state.guard}")
    lattice = X.lattice if isinstance(X, LatticeOperator) else state.lattice
    Xm = X.matrix if isinstance(X, LatticeOperator) else sp.csr_matrix(X)
    logu = 1j * z * state.log_p  # rho^{iz} eigenvalues = exp(logu)
    spread = np.max(logu.real) - np.min(logu.real)
    if spread > np.log(CONDITION_LIMIT):
        warnings.warn(
            f"modular flow at z={z}: eigenvalue ratio exp({spread:.1f}) "
            "exceeds 1e12 after powering", ConditionWarning, stacklevel=2)
    if state.diagonal:
        u = np.exp(logu)
        coo = Xm.tocoo()
        data = coo.data * u[coo.row] / u[coo.col]
        out = sp.csr_matrix((data, (coo.row, coo.col)), shape=Xm.shape)
    else:
        Xe = state.to_eigenbasis(Xm)
        u = np.exp(logu)
        out = sp.csr_matrix(state.from_eigenbasis((u[:, None] / u[None, :]) * Xe))
    support = X.support if (isinstance(X, LatticeOperator) and state.product) \
        else frozenset(range(lattice.n_sites))
    label = f"alpha_{z}({X.label})" if isinstance(X, LatticeOperator) else ""
    return LatticeOperator(_prune(out), support, lattice, label)


@dataclass
class ModularFlow:
    """Callable wrapper around modular_flow for a fixed state."""

    state: GibbsState

    def __call__(self, X, z: complex) -> LatticeOperator:
        return modular_flow(X, self.state, z)


def eigen_detect(X, state: GibbsState, tol: float = 1e-9) -> float | None:
    """Detect xi with alpha_{i/2}(X) = exp(xi) X, else None.

    xi is recovered as the log of the Rayleigh ratio <X, alpha_{i/2}(X)>_F /
    <X, X>_F and accepted only when the residual stays below tol * ||X||_F.
    """
    Xm = X.matrix if isinstance(X, LatticeOperator) else sp.csr_matrix(X)
    nrm = sp.linalg.norm(Xm)
    if nrm == 0:
        raise ValueError("eigen_detect requires a nonzero operator")
    Y = modular_flow(X, state, 0.5j).matrix
    c = complex((Xm.conj().multiply(Y)).sum() / nrm ** 2)
    if sp.linalg.norm(Y - c * Xm) > tol * nrm:
        return None
    if c.real <= 0 or abs(c.imag) > tol * abs(c):
        return None
    return float(np.log(c.real))


def decompose_modular(X, state: GibbsState, *, cluster_tol: float = 1e-9,
                      max_components: int = 64):
    """Split X into modular eigencomponents under the given state.

    In the H eigenbasis the entry (i, j) of X evolves with frequency
    omega_ij = -(h_i - h_j), i.e. alpha_t(X_ij) = exp(i beta omega_ij t) X_ij.
    Entries are bucketed by omega within cluster_tol; the returned list holds
    (component operator, omega) pairs with X = sum of components.
    """
    lattice = X.lattice
    Xe = state.to_eigenbasis(X.matrix)
    Xe = sp.coo_matrix(Xe)
    if Xe.nnz:
        # rotation noise would otherwise seed spurious frequency buckets
        floor = 1e-13 * np.max(np.abs(Xe.data))
        mask = np.abs(Xe.data) > floor
        Xe = sp.coo_matrix((Xe.data[mask], (Xe.row[mask], Xe.col[mask])),
                           shape=Xe.shape)
    if Xe.nnz == 0:
        return []
    h = state.energies
    omega = -(h[Xe.row] - h[Xe.col])
    order = np.argsort(omega, kind="stable")
    buckets: list[tuple[float, list[int]]] = []
    for idx in order:
        w = omega[idx]
        if buckets and abs(w - buckets[-1][0]) <= cluster_tol:
            buckets[-1][1].append(idx)
        else:
            buckets.append((float(w), [idx]))
    if len(buckets) > max_components:
        raise ValueError(
            f"direction {X.label!r} splits into {len(buckets)} modular "
            f"components (limit {max_components}); no usable finite "
            "eigendecomposition under this state")
    comps = []
    for w, idxs in buckets:
        idxs = np.asarray(idxs)
        m = sp.csr_matrix((Xe.data[idxs], (Xe.row[idxs], Xe.col[idxs])),
                          shape=Xe.shape)
        m_full = sp.csr_matrix(state.from_eigenbasis(m.toarray())) \
            if not state.diagonal else m
        comps.append((LatticeOperator(_prune(m_full), X.support, lattice,
                                      f"{X.label}[w={w:.3g}]"), w))
    return comps
