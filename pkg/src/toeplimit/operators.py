"""Finite operators, symbol evaluation, spectra and the brute-force oracles.

The operator family is block tridiagonal with bulk blocks (R, T, V) and a
corner perturbation (A, B, C): C replaces the top-left diagonal block, A sits
in the top-right corner and B in the bottom-left corner.
"""
from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .errors import OnCurve, SingularMatrix, ZeroArgument

RANK_TOL = 1e-10
WINDING_START_SAMPLES = 512
WINDING_MAX_SAMPLES = 1 << 16


@dataclass(frozen=True)
class CoefficientTriple:
    """Bulk blocks: R (sub-diagonal), T (super-diagonal), V (diagonal)."""
    R: np.ndarray
    T: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        R = nk.as_cmatrix(self.R)
        T = nk.as_cmatrix(self.T)
        V = nk.as_cmatrix(self.V)
        L = R.shape[0]
        for name, m in (("R", R), ("T", T), ("V", V)):
            if m.shape != (L, L):
                raise ValueError(f"{name} must be {L}x{L}, got {m.shape}")
        # R and T must be invertible for the transfer-matrix machinery.
        for name, m in (("R", R), ("T", T)):
            try:
                nk.inverse(m)
            except SingularMatrix as exc:
                raise SingularMatrix(f"{name} is singular: {exc}") from exc
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "V", V)

    @property
    def L(self) -> int:
        return self.R.shape[0]

    def reversed(self) -> "CoefficientTriple":
        """Swap R and T, i.e. pass to the reversed symbol."""
        return CoefficientTriple(self.T, self.R, self.V)


def numerical_rank(m: np.ndarray, tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(nk.as_cmatrix(m), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


@dataclass(frozen=True)
class BoundaryTriple:
    """Corner blocks: A (top-right), B (bottom-left), C (top-left diagonal)."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    rank_A: int = field(init=False)

    def __post_init__(self):
        A = nk.as_cmatrix(self.A)
        B = nk.as_cmatrix(self.B)
        C = nk.as_cmatrix(self.C)
        L = A.shape[0]
        for name, m in (("A", A), ("B", B), ("C", C)):
            if m.shape != (L, L):
                raise ValueError(f"{name} must be {L}x{L}, got {m.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "rank_A", numerical_rank(A))

    @property
    def L(self) -> int:
        return self.A.shape[0]

    @classmethod
    def circulant(cls, coeffs: CoefficientTriple) -> "BoundaryTriple":
        return cls(coeffs.R, coeffs.T, coeffs.V)

    @classmethod
    def open(cls, coeffs: CoefficientTriple) -> "BoundaryTriple":
        z = np.zeros_like(coeffs.V)
        return cls(z, z, coeffs.V)

    @classmethod
    def boundary(cls, C) -> "BoundaryTriple":
        C = nk.as_cmatrix(C)
        z = np.zeros_like(C)
        return cls(z, z, C)

    def classify(self, coeffs: CoefficientTriple) -> str:
        """Which of the special corner cases these blocks realize."""
        if (np.array_equal(self.A, coeffs.R) and np.array_equal(self.B, coeffs.T)
                and np.array_equal(self.C, coeffs.V)):
            return "circulant"
        if not self.A.any() and not self.B.any():
            return "open" if np.array_equal(self.C, coeffs.V) else "boundary"
        try:
            nk.inverse(self.B)
            return "perturbed"
        except SingularMatrix:
            return "custom"


def eval_symbol(coeffs: CoefficientTriple, z: complex) -> np.ndarray:
    """The symbol R/z + V + T*z."""
    if z == 0:
        raise ZeroArgument("symbol undefined at z = 0")
    return coeffs.R / z + coeffs.V + coeffs.T * z


def assemble_operator(coeffs: CoefficientTriple, boundary: BoundaryTriple,
                      N: int) -> np.ndarray:
    """The NL x NL block tridiagonal matrix with corner blocks A, B, C."""
    if N < 3:
        raise ValueError("N >= 3 required so corner blocks stay off the band")
    L = coeffs.L
    H = np.zeros((N * L, N * L), dtype=np.complex128)
    for n in range(N):
        H[n * L:(n + 1) * L, n * L:(n + 1) * L] = coeffs.V
    for n in range(N - 1):
        H[n * L:(n + 1) * L, (n + 1) * L:(n + 2) * L] = coeffs.T
        H[(n + 1) * L:(n + 2) * L, n * L:(n + 1) * L] = coeffs.R
    H[:L, :L] = boundary.C
    H[:L, (N - 1) * L:] = boundary.A
    H[(N - 1) * L:, :L] = boundary.B
    return H


def finite_spectrum(m: np.ndarray) -> np.ndarray:
    """Eigenvalue multiset of a dense matrix."""
    return np.linalg.eigvals(nk.as_cmatrix(m))


def circulant_spectrum_fft(coeffs: CoefficientTriple, N: int) -> np.ndarray:
    """Circulant spectrum via Fourier block-diagonalization: the union of the
    L x L symbol spectra at the N-th roots of unity."""
    z = np.exp(2j * np.pi * np.arange(1, N + 1) / N)
    stack = (coeffs.R[None, :, :] / z[:, None, None]
             + coeffs.V[None, :, :]
             + coeffs.T[None, :, :] * z[:, None, None])
    return np.linalg.eigvals(stack).ravel()


def winding_number(coeffs: CoefficientTriple, E: complex,
                   samples: int = WINDING_START_SAMPLES) -> int:
    """Winding of theta -> det(H(e^{i theta}) - E) around 0.

    Uses summed phase increments with adaptive doubling of the sample count
    until the rounded integer is stable.
    """
    samples = max(samples, 256)
    L = coeffs.L
    eye = np.eye(L, dtype=np.complex128)
    previous = None
    n = samples
    while True:
        theta = 2 * np.pi * np.arange(n) / n
        z = np.exp(1j * theta)
        stack = (coeffs.R[None] / z[:, None, None] + coeffs.V[None]
                 + coeffs.T[None] * z[:, None, None] - E * eye[None])
        d = np.linalg.det(stack)
        mag = np.abs(d)
        if np.min(mag) < 1e-12 * max(np.max(mag), 1e-300):
            raise OnCurve(f"symbol determinant vanishes near E = {E}")
        phases = np.angle(d)
        inc = np.diff(np.concatenate([phases, phases[:1]]))
        inc = (inc + np.pi) % (2 * np.pi) - np.pi
        total = float(np.sum(inc)) / (2 * np.pi)
        wind = round(total)
        residual = abs(total - wind)
        jump = float(np.max(np.abs(inc)))
        if residual < 0.1 and jump < 0.9 * np.pi and (previous == wind or n >= WINDING_MAX_SAMPLES):
            if residual >= 0.1:
                raise OnCurve(f"phase residual {residual:.3f} too large at E = {E}")
            return int(wind)
        if n >= WINDING_MAX_SAMPLES:
            raise OnCurve(f"winding did not stabilize at E = {E}")
        previous = wind if (residual < 0.1 and jump < 0.9 * np.pi) else None
        n *= 2


def charpoly_direct(coeffs: CoefficientTriple, boundary: BoundaryTriple,
                    N: int, E: complex) -> complex:
    """Brute-force det(H_N - E) via the dense assembled operator."""
    H = assemble_operator(coeffs, boundary, N)
    return nk.determinant(H - E * np.eye(H.shape[0], dtype=np.complex128))
