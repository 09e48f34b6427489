"""Truncated bosonic ladder operators on finite lattices.

Each lattice site carries a single oscillator mode truncated at occupation
n_max, so the many-body space is the tensor product of (n_max+1)-dimensional
factors.  Sites are serialized in row-major order of their coordinates and
the Kronecker factors follow that order (site 0 is the leftmost factor).

The hard cutoff makes the creation operator annihilate the top level, which
violates [A, A+] = 1 on exactly one level: the defect is the rank-one
operator -(n_max+1) * |n_max><n_max|.  Identities that hold exactly in
infinite dimensions therefore hold here only on a "clean" subspace away from
the cutoff; `clean_projector` / `total_sector_projector` build the projectors
used to state those residuals, and `TruncationReport` records the defect.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

# entries smaller than this are dropped after operator products
PRUNE_TOL = 1e-15


def _as_tuple(x) -> tuple:
    return x if isinstance(x, tuple) else (x,)


@dataclass(frozen=True)
class LatticeConfig:
    """Finite lattice of truncated oscillator modes.

    geometry is one of "chain" (open 1D), "cycle" (periodic 1D) or "box"
    (open d-dimensional block).  Neighbours are pairs at l1 distance
    0 < dist <= neighbor_radius.
    """

    dims: int
    extent: int | Sequence[int]
    geometry: str = "chain"
    neighbor_radius: float = 1.0
    n_max: int = 1

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.geometry not in ("chain", "cycle", "box"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry in ("chain", "cycle") and self.dims != 1:
            raise ValueError(f"{self.geometry} geometry requires dims=1")
        if self.neighbor_radius <= 0:
            raise ValueError("neighbor_radius must be positive")

    @property
    def extents(self) -> tuple[int, ...]:
        if isinstance(self.extent, int):
            return (self.extent,) * self.dims
        return tuple(self.extent)

    @property
    def sites(self) -> tuple[tuple[int, ...], ...]:
        # row-major order of coordinates
        return tuple(itertools.product(*(range(e) for e in self.extents)))

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.extents))

    @property
    def local_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_sites

    def site_index(self, site) -> int:
        site = _as_tuple(site)
        try:
            return self.sites.index(site)
        except ValueError:
            raise ValueError(f"site {site} not in lattice") from None

    def distance(self, i, j) -> int:
        """l1 lattice distance, wrapped around for the cycle."""
        i, j = _as_tuple(i), _as_tuple(j)
        if self.geometry == "cycle":
            L = self.extents[0]
            d = abs(i[0] - j[0])
            return min(d, L - d)
        return sum(abs(a - b) for a, b in zip(i, j))

    def neighbor_pairs(self) -> list[tuple[int, int]]:
        """Unordered neighbour pairs (site indices, i < j)."""
        out = []
        for a in range(self.n_sites):
            for b in range(a + 1, self.n_sites):
                if 0 < self.distance(self.sites[a], self.sites[b]) <= self.neighbor_radius:
                    out.append((a, b))
        return out

    def ordered_neighbor_pairs(self) -> list[tuple[int, int]]:
        """All ordered neighbour pairs (j, k), j != k."""
        pairs = self.neighbor_pairs()
        return pairs + [(b, a) for (a, b) in pairs]

    def occupations(self) -> np.ndarray:
        """(dim, n_sites) table of occupation numbers per basis state."""
        d = self.local_dim
        idx = np.arange(self.dim)
        occ = np.empty((self.dim, self.n_sites), dtype=np.int64)
        for k in range(self.n_sites - 1, -1, -1):
            occ[:, k] = idx % d
            idx = idx // d
        return occ

    def estimate_bytes(self, superoperator: bool = False) -> int:
        """Rough dense-equivalent memory footprint used by the budget guard."""
        D = self.dim
        n = D * D * (D * D if superoperator else 1)
        return 16 * n


def _prune(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    if m.nnz:
        m.data[np.abs(m.data) < PRUNE_TOL] = 0.0
        m.eliminate_zeros()
    return m


@dataclass
class LatticeOperator:
    """Sparse operator on the lattice Fock space with site-support tracking.

    `support` lists the site indices the operator may act on nontrivially;
    it acts as the identity on all other modes.  Support is propagated as a
    superset under sums and products, which keeps the bookkeeping safe.
    """

    matrix: sp.csr_matrix
    support: frozenset[int]
    lattice: LatticeConfig
    label: str = ""

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.support = frozenset(self.support)
        if self.matrix.shape != (self.lattice.dim, self.lattice.dim):
            raise ValueError("matrix shape does not match lattice dimension")

    def dag(self) -> "LatticeOperator":
        return LatticeOperator(self.matrix.conj().T.tocsr(), self.support,
                               self.lattice, f"({self.label})*")

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm(self) -> float:
        """Operator (spectral) norm."""
        return float(np.linalg.norm(self.toarray(), 2))

    def fro_norm(self) -> float:
        return float(sp.linalg.norm(self.matrix))

    def trace(self) -> complex:
        return complex(self.matrix.diagonal().sum())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        d = self.matrix - self.matrix.conj().T
        scale = max(sp.linalg.norm(self.matrix), 1.0)
        return sp.linalg.norm(d) <= tol * scale

    def _wrap(self, m, support, label):
        return LatticeOperator(_prune(m), support, self.lattice, label)

    def __add__(self, other):
        if isinstance(other, LatticeOperator):
            return self._wrap(self.matrix + other.matrix,
                              self.support | other.support,
                              f"{self.label}+{other.label}")
        return self._wrap(self.matrix + other * sp.identity(self.lattice.dim, format="csr"),
                          self.support, self.label)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, LatticeOperator):
            return self._wrap(self.matrix - other.matrix,
                              self.support | other.support,
                              f"{self.label}-{other.label}")
        return self + (-other)

    def __neg__(self):
        return self._wrap(-self.matrix, self.support, f"-{self.label}")

    def __mul__(self, c):
        return self._wrap(self.matrix * c, self.support, self.label)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, other: "LatticeOperator") -> "LatticeOperator":
        return self._wrap(self.matrix @ other.matrix,
                          self.support | other.support,
                          f"{self.label}{other.label}")


def commutator(x: LatticeOperator, y: LatticeOperator) -> LatticeOperator:
    return x @ y - y @ x


def build_mode_ops(n_max: int):
    """Single-mode ladder matrices (A, A+, N) truncated at n_max.

    A e_n = sqrt(n) e_{n-1}; A+ e_n = sqrt(n+1) e_{n+1} for n < n_max and
    A+ e_{n_max} = 0; N = A+ A = diag(0..n_max).
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    d = n_max + 1
    v = np.sqrt(np.arange(1, d))
    A = sp.diags(v, 1, shape=(d, d), dtype=complex).tocsr()
    Adag = sp.diags(v, -1, shape=(d, d), dtype=complex).tocsr()
    N = sp.diags(np.arange(d, dtype=float), 0, dtype=complex).tocsr()
    return A, Adag, N


@dataclass(frozen=True)
class TruncationReport:
    """Measured violation of the CCR at the cutoff level."""

    n_max: int
    defect_norm: float
    clean_dim: int
    rank_one: bool

    @classmethod
    def measure(cls, n_max: int) -> "TruncationReport":
        A, Adag, _ = build_mode_ops(n_max)
        defect = (A @ Adag - Adag @ A - sp.identity(n_max + 1)).toarray()
        # the defect should be -(n_max+1) * |top><top|
        expected = np.zeros_like(defect)
        expected[n_max, n_max] = -(n_max + 1)
        rank_one = bool(np.allclose(defect, expected, atol=1e-13))
        return cls(n_max=n_max,
                   defect_norm=float(np.linalg.norm(defect, 2)),
                   clean_dim=n_max,
                   rank_one=rank_one)


def identity_operator(lattice: LatticeConfig) -> LatticeOperator:
    return LatticeOperator(sp.identity(lattice.dim, format="csr", dtype=complex),
                           frozenset(), lattice, "I")


def embed(op, sites, lattice: LatticeConfig, label: str = "") -> LatticeOperator:
    """Embed a multi-mode operator acting on `sites` (in the given order),
    extended by the identity on all remaining modes.

    `op` must be a (d^k, d^k) matrix with d = n_max + 1 and k = len(sites);
    its i-th Kronecker factor corresponds to the i-th listed site.
    """
    site_idx = [s if isinstance(s, int) and not isinstance(s, bool)
                else lattice.site_index(s) for s in sites]
    if len(set(site_idx)) != len(site_idx):
        raise ValueError(f"duplicate sites in {sites}")
    for s in site_idx:
        if not 0 <= s < lattice.n_sites:
            raise ValueError(f"site index {s} outside lattice")
    d = lattice.local_dim
    k = len(site_idx)
    op = sp.csr_matrix(op)
    if op.shape != (d ** k, d ** k):
        raise ValueError(f"operator dimension {op.shape} does not match "
                         f"{k} modes of local dimension {d}")
    n_rest = lattice.n_sites - k
    full = sp.kron(op, sp.identity(d ** n_rest, format="csr"), format="csr")
    # permute modes from [sites..., rest...] into lattice order
    order = site_idx + [s for s in range(lattice.n_sites) if s not in site_idx]
    perm = _mode_permutation(order, lattice.n_sites, d)
    P = sp.csr_matrix((np.ones(lattice.dim), (perm, np.arange(lattice.dim))),
                      shape=(lattice.dim, lattice.dim))
    out = P @ full @ P.T
    return LatticeOperator(_prune(out), frozenset(site_idx), lattice, label)


def _mode_permutation(order: list[int], n_sites: int, d: int) -> np.ndarray:
    """perm[i_old] = i_new where mode `order[k]` holds digit k of i_old."""
    D = d ** n_sites
    idx = np.arange(D)
    digits = []
    for k in range(n_sites - 1, -1, -1):
        digits.append(idx % d)
        idx = idx // d
    digits = digits[::-1]  # digits[k] = digit of mode k in [sites..., rest...] order
    new_index = np.zeros(D, dtype=np.int64)
    for k, mode in enumerate(order):
        new_index += digits[k] * d ** (n_sites - 1 - mode)
    return new_index


def site_operator(lattice: LatticeConfig, kind: str, site) -> LatticeOperator:
    """Embedded single-site ladder operator; kind in {'a', 'adag', 'n'}."""
    A, Adag, N = build_mode_ops(lattice.n_max)
    op = {"a": A, "adag": Adag, "n": N}[kind]
    s = site if isinstance(site, int) else lattice.site_index(site)
    name = {"a": f"A_{s}", "adag": f"A*_{s}", "n": f"N_{s}"}[kind]
    return embed(op, [s], lattice, name)


def mollify(site, epsilon: float, lattice: LatticeConfig):
    """Bounded ladder pair a = (1 + eps * N^(1/2))^(-1) A at one site."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    A, _, _ = build_mode_ops(lattice.n_max)
    scale = 1.0 / (1.0 + epsilon * np.sqrt(np.arange(lattice.n_max + 1)))
    a1 = sp.diags(scale) @ A
    s = site if isinstance(site, int) else lattice.site_index(site)
    a = embed(a1, [s], lattice, f"a_{s}")
    return a, a.dag()


def clean_projector(lattice: LatticeConfig, margin: int) -> sp.csr_matrix:
    """Diagonal projector onto basis states with every site occupation
    <= n_max - margin."""
    occ = lattice.occupations()
    keep = np.all(occ <= lattice.n_max - margin, axis=1).astype(float)
    return sp.diags(keep).tocsr()


def total_sector_projector(lattice: LatticeConfig, max_total: int) -> sp.csr_matrix:
    """Diagonal projector onto basis states of total occupation <= max_total."""
    occ = lattice.occupations()
    keep = (occ.sum(axis=1) <= max_total).astype(float)
    return sp.diags(keep).tocsr()


def compressed(op: LatticeOperator | sp.spmatrix | np.ndarray,
               projector: sp.spmatrix) -> np.ndarray:
    """Dense P M P restricted to the kept rows/columns of a diagonal projector."""
    m = op.matrix if isinstance(op, LatticeOperator) else sp.csr_matrix(op)
    keep = np.flatnonzero(projector.diagonal() > 0.5)
    return m.toarray()[np.ix_(keep, keep)]


def clean_residual(op, projector) -> float:
    """Spectral norm of the projector-compressed operator."""
    block = compressed(op, projector)
    if block.size == 0:
        return 0.0
    return float(np.linalg.norm(block, 2))
