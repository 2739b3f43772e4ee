"""Transfer matrices, modulus-ordered spectra and Riesz projections.

The 2L x 2L transfer matrix propagates solution pairs of the three-term
eigenvalue recursion by one site; its eigenvalues z_1(E), ..., z_2L(E), kept
in non-decreasing modulus order, drive every limit-spectrum formula.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import numkernel as nk
from .errors import DegenerateSplit, SingularMatrix
from .operators import BoundaryTriple, CoefficientTriple

DEGENERACY_TOL = 1e-8
TIE_TOL = 1e-6


def transfer_matrix(coeffs: CoefficientTriple, E: complex) -> np.ndarray:
    """[[ (E - V) T^{-1}, -R ], [ T^{-1}, 0 ]]."""
    L = coeffs.L
    Tinv = nk.inverse(coeffs.T)
    out = np.zeros((2 * L, 2 * L), dtype=np.complex128)
    out[:L, :L] = (E * np.eye(L) - coeffs.V) @ Tinv
    out[:L, L:] = -coeffs.R
    out[L:, :L] = Tinv
    return out


def boundary_transfer_matrix(boundary: BoundaryTriple, E: complex) -> np.ndarray:
    """Same shape as the bulk transfer matrix, built from (A, B, C)."""
    L = boundary.L
    try:
        Binv = nk.inverse(boundary.B)
    except SingularMatrix as exc:
        raise SingularMatrix(f"B is singular: {exc}") from exc
    out = np.zeros((2 * L, 2 * L), dtype=np.complex128)
    out[:L, :L] = (E * np.eye(L) - boundary.C) @ Binv
    out[:L, L:] = -boundary.A
    out[L:, :L] = Binv
    return out


def _tie_break_order(values: np.ndarray, tie_tol: float) -> Tuple[np.ndarray, Tuple[Tuple[int, ...], ...]]:
    """Sort by modulus; within modulus ties, by argument in [0, 2pi) then by
    real part. Returns the ordering and the tie groups (in output indexing).

    Tie detection scales with the pair's own modulus, not the global maximum,
    so widely separated decaying/growing branches never collapse into one
    group at large energy.
    """
    moduli = np.abs(values)
    order = np.argsort(moduli, kind="stable")
    sorted_m = moduli[order]
    groups = []
    start = 0
    for i in range(1, len(order) + 1):
        if (i == len(order)
                or sorted_m[i] - sorted_m[i - 1] > tie_tol * (1.0 + sorted_m[i])):
            groups.append((start, i))
            start = i
    final = []
    tie_groups = []
    for a, b in groups:
        idx = order[a:b]
        if b - a > 1:
            args = np.mod(np.angle(values[idx]), 2 * np.pi)
            sub = np.lexsort((values[idx].real, args))
            idx = idx[sub]
            tie_groups.append(tuple(range(a, b)))
        final.extend(idx.tolist())
    return np.array(final), tuple(tie_groups)


def _pairwise_degenerate(values: np.ndarray, tol: float) -> np.ndarray:
    """Boolean matrix of eigenvalue pairs closer than tol at the pair's own
    modulus scale."""
    gap = np.abs(values[:, None] - values[None, :])
    scale = 1.0 + np.maximum(np.abs(values)[:, None], np.abs(values)[None, :])
    close = gap < tol * scale
    np.fill_diagonal(close, False)
    return close


@dataclass(frozen=True)
class TransferSpectrum:
    """Modulus-ordered eigendata of the transfer matrix at one energy."""
    energy: complex
    values: np.ndarray          # (2L,), |z_j| non-decreasing
    right_vectors: np.ndarray   # (2L, 2L) columns, aligned to the ordering
    left_vectors: np.ndarray    # (2L, 2L) columns, biorthogonal
    moduli: np.ndarray
    degenerate: bool
    tie_groups: Tuple[Tuple[int, ...], ...]
    degeneracy_tol: float = DEGENERACY_TOL

    @property
    def L(self) -> int:
        return self.values.size // 2

    @property
    def left_rows(self) -> np.ndarray:
        return self.left_vectors.conj().T

    def degeneracy_clusters(self, tol: Optional[float] = None) -> list:
        """Index clusters of nearly equal eigenvalues (union-find by gap)."""
        n = self.values.size
        close = _pairwise_degenerate(self.values,
                                     self.degeneracy_tol if tol is None else tol)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(n):
            for j in range(i + 1, n):
                if close[i, j]:
                    parent[find(i)] = find(j)
        clusters = {}
        for i in range(n):
            clusters.setdefault(find(i), []).append(i)
        return [tuple(v) for v in clusters.values() if len(v) > 1]


def ordered_spectrum(coeffs: CoefficientTriple, E: complex,
                     degeneracy_tol: float = DEGENERACY_TOL,
                     tie_tol: float = TIE_TOL) -> TransferSpectrum:
    """Eigendecomposition of the transfer matrix, modulus-ordered."""
    M = transfer_matrix(coeffs, E)
    dec = nk.eigenpairs(M, degeneracy_tol=degeneracy_tol)
    order, tie_groups = _tie_break_order(dec.values, tie_tol)
    values = dec.values[order]
    right = dec.right_vectors[:, order]
    left = dec.left_vectors[:, order]
    degenerate = bool(np.any(_pairwise_degenerate(values, degeneracy_tol)))
    return TransferSpectrum(E, values, right, left, np.abs(values),
                            degenerate, tie_groups, degeneracy_tol)


def _check_split(spec: TransferSpectrum, members: Sequence[int],
                 allow_tie_split: bool) -> None:
    mem = set(members)
    for cluster in spec.degeneracy_clusters():
        inside = mem.intersection(cluster)
        if inside and len(inside) < len(cluster):
            raise DegenerateSplit(
                f"index set splits degenerate cluster {cluster} at E = {spec.energy}")
    if not allow_tie_split:
        for group in spec.tie_groups:
            inside = mem.intersection(group)
            if inside and len(inside) < len(group):
                raise DegenerateSplit(
                    f"index set splits modulus tie group {group} at E = {spec.energy}")


def riesz_projection(spec: TransferSpectrum, members: Sequence[int],
                     allow_tie_split: bool = False) -> np.ndarray:
    """Spectral projector onto the selected eigenvalue branches.

    ``members`` uses 0-based branch indices into the modulus ordering. Equals
    the contour-integral Riesz projection for simple spectrum.
    """
    n = spec.values.size
    members = sorted(set(int(i) for i in members))
    if members and (members[0] < 0 or members[-1] >= n):
        raise ValueError(f"branch indices out of range: {members}")
    _check_split(spec, members, allow_tie_split)
    if not members:
        return np.zeros((n, n), dtype=np.complex128)
    idx = np.array(members)
    return spec.right_vectors[:, idx] @ spec.left_rows[idx, :]


def riesz_projection_contour(coeffs: CoefficientTriple, E: complex,
                             center: complex, radius: float,
                             nodes: int = 512) -> np.ndarray:
    """Trapezoid-rule contour integral of the resolvent on a circle.

    Retained as a cross-check of the eigenvector construction.
    """
    M = transfer_matrix(coeffs, E)
    n = M.shape[0]
    eye = np.eye(n, dtype=np.complex128)
    acc = np.zeros((n, n), dtype=np.complex128)
    for k in range(nodes):
        zk = center + radius * np.exp(2j * np.pi * k / nodes)
        acc += (zk - center) * np.linalg.inv(zk * eye - M)
    return acc / nodes


def match_branches(spec_a: TransferSpectrum, spec_b: TransferSpectrum) -> np.ndarray:
    """Permutation pi with z_i(A) -> z_pi[i](B), minimizing total displacement
    by optimal assignment (covers the greedy-ambiguous cases uniformly)."""
    cost = np.abs(spec_a.values[:, None] - spec_b.values[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm
