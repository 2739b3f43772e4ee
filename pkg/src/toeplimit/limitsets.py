"""Extraction of limit-spectrum sets from complex-plane grid scans.

The continuous sets are level sets of ordered transfer-eigenvalue moduli:
unit-modulus crossings for the Sigma-type sets, equal-modulus branch
crossings for the Lambda-type sets. Outliers are zeros of the dominant
q-function, Newton-refined from grid minima.
"""
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import numkernel as nk
from .errors import NoConvergence, SingularMatrix
from .operators import BoundaryTriple, CoefficientTriple, winding_number
from .transfer import (DEGENERACY_TOL, TIE_TOL, _pairwise_degenerate,
                       boundary_transfer_matrix, ordered_spectrum,
                       transfer_matrix)
from .widom import q_hat, q_perturbed

EXCLUSION_FACTOR = 3.0
SEED_QUANTILE = 0.05
SEED_FACTOR = 10.0
ACCEPT_RESIDUAL = 1e-10
UNIT_COND_TOL = 1e-6


@dataclass(frozen=True)
class Region:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise ValueError("degenerate region")


@dataclass
class ScanGrid:
    """Per-node transfer-spectrum summaries on a rectangular grid.

    Arrays are indexed [iy, ix]; ``values`` holds the modulus-ordered
    eigenvalues (labeling within modulus ties is by plain sort order here,
    which is immaterial for the modulus-based set logic).
    """
    coeffs: CoefficientTriple
    region: Region
    re: np.ndarray                # (nx,)
    im: np.ndarray                # (ny,)
    values: np.ndarray            # (ny, nx, 2L)
    moduli: np.ndarray            # (ny, nx, 2L)
    degenerate: np.ndarray        # (ny, nx) bool
    masked: np.ndarray            # (ny, nx) bool, failed nodes
    h: float
    degeneracy_tol: float = DEGENERACY_TOL
    tie_tol: float = TIE_TOL

    @property
    def L(self) -> int:
        return self.values.shape[2] // 2

    @property
    def nx(self) -> int:
        return self.re.size

    @property
    def ny(self) -> int:
        return self.im.size

    def energy(self, ix: int, iy: int) -> complex:
        return complex(self.re[ix], self.im[iy])

    @property
    def energies(self) -> np.ndarray:
        return self.re[None, :] + 1j * self.im[:, None]

    @property
    def valid(self) -> np.ndarray:
        return ~(self.degenerate | self.masked)

    def dominant_count(self, r: int) -> np.ndarray:
        """Per-node cardinality of {1-based j >= L-r+1 : |z_j| > 1}."""
        L = self.L
        return np.sum(self.moduli[:, :, max(L - r, 0):] > 1.0, axis=2)

    def growing_count(self) -> np.ndarray:
        """Per-node count of |z_j| > 1, the winding-identity counterpart."""
        return np.sum(self.moduli > 1.0, axis=2)


@dataclass
class Arc:
    label: str                    # Sigma | Sigma_r | Lambda | Lambda_r
    r: Optional[int]
    points: np.ndarray            # complex polyline vertices
    crossing_index: Optional[int] = None   # 1-based j for Sigma-type arcs
    flagged_points: int = 0       # hypothesis-violation count


@dataclass
class Outlier:
    label: str                    # Gamma_C | Gamma_r
    point: complex
    residual: float
    status: str                   # converged | unconverged


@dataclass
class LimitSpectrumResult:
    arcs: List[Arc]
    outliers: List[Outlier]
    metadata: Dict

    def to_json_dict(self) -> Dict:
        return {
            "arcs": [{"label": a.label, "r": a.r,
                      "crossing_index": a.crossing_index,
                      "flagged_points": a.flagged_points,
                      "points": [[float(p.real), float(p.imag)]
                                 for p in a.points]}
                     for a in self.arcs],
            "outliers": [{"label": o.label, "re": float(o.point.real),
                          "im": float(o.point.imag),
                          "residual": float(o.residual), "status": o.status}
                         for o in self.outliers],
            "metadata": self.metadata,
        }

    def write_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)

    def write_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("set_label,r,re,im,aux\n")
            for a in self.arcs:
                for p in a.points:
                    fh.write(f"{a.label},{'' if a.r is None else a.r},"
                             f"{p.real:.17g},{p.imag:.17g},"
                             f"{'' if a.crossing_index is None else a.crossing_index}\n")
            for o in self.outliers:
                fh.write(f"{o.label},,{o.point.real:.17g},{o.point.imag:.17g},"
                         f"{o.residual:.6g}\n")


def model_hash(coeffs: CoefficientTriple,
               boundary: Optional[BoundaryTriple] = None) -> str:
    digest = hashlib.sha256()
    for m in (coeffs.R, coeffs.T, coeffs.V):
        digest.update(np.ascontiguousarray(m).tobytes())
    if boundary is not None:
        for m in (boundary.A, boundary.B, boundary.C):
            digest.update(np.ascontiguousarray(m).tobytes())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# grid scan


def _batched_transfer(coeffs: CoefficientTriple, energies: np.ndarray) -> np.ndarray:
    """Stacked transfer matrices for a flat array of energies."""
    L = coeffs.L
    n = energies.size
    Tinv = nk.inverse(coeffs.T)
    out = np.zeros((n, 2 * L, 2 * L), dtype=np.complex128)
    out[:, :L, :L] = (energies[:, None, None] * np.eye(L) - coeffs.V) @ Tinv
    out[:, :L, L:] = -coeffs.R
    out[:, L:, :L] = Tinv
    return out


def _batched_eigvals(stack: np.ndarray, workers: Optional[int]) -> np.ndarray:
    if not workers or workers <= 1 or stack.shape[0] < 256:
        return np.linalg.eigvals(stack)
    chunks = np.array_split(np.arange(stack.shape[0]), workers * 4)
    out = np.empty(stack.shape[:2], dtype=np.complex128)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for idx, vals in zip(chunks, pool.map(
                lambda c: np.linalg.eigvals(stack[c]), chunks)):
            out[idx] = vals
    return out


def scan_grid(coeffs: CoefficientTriple, region: Region, nx: int, ny: int,
              degeneracy_tol: float = DEGENERACY_TOL,
              tie_tol: float = TIE_TOL,
              workers: Optional[int] = None) -> ScanGrid:
    if nx < 16 or ny < 16:
        raise ValueError("nx, ny >= 16 required")
    re = np.linspace(region.re_min, region.re_max, nx)
    im = np.linspace(region.im_min, region.im_max, ny)
    h = max(re[1] - re[0], im[1] - im[0])
    energies = (re[None, :] + 1j * im[:, None]).ravel()
    stack = _batched_transfer(coeffs, energies)
    masked = np.zeros(energies.size, dtype=bool)
    try:
        vals = _batched_eigvals(stack, workers)
    except np.linalg.LinAlgError:
        # rare: fall back to per-node solves, masking failures
        vals = np.zeros((energies.size, 2 * coeffs.L), dtype=np.complex128)
        for i in range(energies.size):
            try:
                vals[i] = np.linalg.eigvals(stack[i])
            except np.linalg.LinAlgError:
                masked[i] = True
    order = np.argsort(np.abs(vals), axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    moduli = np.abs(vals)
    gap = np.abs(vals[:, :, None] - vals[:, None, :])
    scale = 1.0 + np.maximum(moduli[:, :, None], moduli[:, None, :])
    eye = np.eye(vals.shape[1], dtype=bool)
    degenerate = np.any((gap < degeneracy_tol * scale) & ~eye, axis=(1, 2))
    shape = (ny, nx)
    return ScanGrid(coeffs, region, re, im,
                    vals.reshape(shape + (2 * coeffs.L,)),
                    moduli.reshape(shape + (2 * coeffs.L,)),
                    degenerate.reshape(shape), masked.reshape(shape), float(h),
                    degeneracy_tol, tie_tol)


def sigma_periodic(coeffs: CoefficientTriple, theta_samples: int = 512) -> np.ndarray:
    """Point cloud of the periodic limit spectrum: symbol eigenvalues on the
    unit circle."""
    if theta_samples < 64:
        raise ValueError("theta_samples >= 64 required")
    z = np.exp(2j * np.pi * np.arange(theta_samples) / theta_samples)
    stack = (coeffs.R[None] / z[:, None, None] + coeffs.V[None]
             + coeffs.T[None] * z[:, None, None])
    return np.linalg.eigvals(stack).ravel()


# ---------------------------------------------------------------------------
# marching squares for sign-changing scalar fields


def _interp(p0: complex, p1: complex, f0: float, f1: float) -> complex:
    t = f0 / (f0 - f1)
    return p0 + t * (p1 - p0)


def _marching_squares(field: np.ndarray, valid: np.ndarray,
                      re: np.ndarray, im: np.ndarray,
                      midpoint_eval: Optional[Callable[[complex], float]] = None
                      ) -> List[Tuple[complex, complex]]:
    """Zero-level segments of a nodal scalar field, one pass per cell.

    Saddle cells (4 sign changes) are resolved by one midpoint evaluation
    when a callback is given, else by the corner average.
    """
    ny, nx = field.shape
    segments = []
    for iy in range(ny - 1):
        for ix in range(nx - 1):
            if not (valid[iy, ix] and valid[iy, ix + 1]
                    and valid[iy + 1, ix] and valid[iy + 1, ix + 1]):
                continue
            f = (field[iy, ix], field[iy, ix + 1],
                 field[iy + 1, ix + 1], field[iy + 1, ix])
            p = (complex(re[ix], im[iy]), complex(re[ix + 1], im[iy]),
                 complex(re[ix + 1], im[iy + 1]), complex(re[ix], im[iy + 1]))
            signs = [v > 0 for v in f]
            if all(signs) or not any(signs):
                continue
            crossings = []
            for k in range(4):
                k2 = (k + 1) % 4
                if signs[k] != signs[k2]:
                    crossings.append((k, _interp(p[k], p[k2], f[k], f[k2])))
            if len(crossings) == 2:
                segments.append((crossings[0][1], crossings[1][1]))
            elif len(crossings) == 4:
                center = 0.25 * sum(p)
                if midpoint_eval is not None:
                    fc = midpoint_eval(center)
                else:
                    fc = 0.25 * sum(f)
                # connect each crossing to the neighbor consistent with the
                # center sign
                pts = dict(crossings)
                if (fc > 0) == signs[0]:
                    segments.append((pts[0], pts[1]))
                    segments.append((pts[2], pts[3]))
                else:
                    segments.append((pts[3], pts[0]))
                    segments.append((pts[1], pts[2]))
    return segments


def _assemble_polylines(segments: Sequence[Tuple[complex, complex]],
                        tol: float) -> List[np.ndarray]:
    """Chain segments sharing endpoints (within tol) into polylines."""
    if not segments:
        return []

    def key(pt: complex):
        return (round(pt.real / tol), round(pt.imag / tol))

    adjacency: Dict[Tuple[int, int], List[int]] = {}
    for i, (a, b) in enumerate(segments):
        adjacency.setdefault(key(a), []).append(i)
        adjacency.setdefault(key(b), []).append(i)
    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        a, b = segments[start]
        chain = [a, b]
        for head in (1, 0):
            while True:
                tip = chain[-1] if head else chain[0]
                nxt = None
                for i in adjacency.get(key(tip), []):
                    if not used[i]:
                        nxt = i
                        break
                if nxt is None:
                    break
                used[nxt] = True
                sa, sb = segments[nxt]
                other = sb if abs(sa - tip) < abs(sb - tip) else sa
                if head:
                    chain.append(other)
                else:
                    chain.insert(0, other)
        polylines.append(np.array(chain))
    return polylines


# ---------------------------------------------------------------------------
# Sigma-type arcs (unit-modulus level sets)


def _sorted_moduli_at(coeffs: CoefficientTriple, E: complex) -> np.ndarray:
    return np.sort(np.abs(np.linalg.eigvals(transfer_matrix(coeffs, E))))


def sigma_r(scan: ScanGrid, r: int) -> List[Arc]:
    """Arcs where some |z_j(E)| = 1 with 1-based crossing index
    j >= L - r + 1.

    Transversal crossings come from one marching-squares pass per admissible
    ordered branch. Fold crossings, where two branches reach the unit circle
    together and the sorted field touches zero without a sign change (the
    scalar slit is the canonical case), come from the equal-modulus pair
    detector filtered to common modulus 1.
    """
    L = scan.L
    if not 0 <= r <= L:
        raise ValueError("0 <= r <= L required")
    valid = scan.valid
    label = "Sigma" if r == L else "Sigma_r"
    # single-crossing hypothesis: two ordered moduli near 1 at one node
    near_one = np.abs(scan.moduli - 1.0) < scan.tie_tol
    violations = int(np.sum(np.sum(near_one, axis=2) > 1))
    arcs = []
    for j in range(L - r + 1, 2 * L + 1):
        field = scan.moduli[:, :, j - 1] - 1.0

        def mid(E, jj=j):
            return float(_sorted_moduli_at(scan.coeffs, E)[jj - 1] - 1.0)

        segments = _marching_squares(field, valid, scan.re, scan.im, mid)
        for line in _assemble_polylines(segments, scan.h * 1e-6):
            arcs.append(Arc(label, r, line, crossing_index=j,
                            flagged_points=violations))
    unit_tol = scan.h / 10

    def on_unit_circle(mods, a):
        return abs(mods[a] - 1.0) < unit_tol and abs(mods[a + 1] - 1.0) < unit_tol

    for ju in range(max(L - r + 1, 2), 2 * L + 1):
        fold = _lambda_pair_arcs(scan, ju - 2, ju - 1, label, r,
                                 point_filter=on_unit_circle)
        for arc in fold:
            arc.crossing_index = ju
        arcs.extend(fold)
    return arcs


# ---------------------------------------------------------------------------
# Lambda-type arcs (equal-modulus branch crossings)


def _match(vals_a: np.ndarray, vals_b: np.ndarray) -> np.ndarray:
    cost = np.abs(vals_a[:, None] - vals_b[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm


def _edge_crossing(scan: ScanGrid, a: int, b: int, Ea: complex, Eb: complex,
                   vals_a: np.ndarray, vals_b: np.ndarray) -> Optional[complex]:
    """Detect and refine a modulus crossing of ordered branches (a, b) along
    the edge Ea -> Eb via branch matching and bisection."""
    perm = _match(vals_a, vals_b)
    rank_b = np.argsort(np.argsort(np.abs(vals_b), kind="stable"), kind="stable")
    if rank_b[perm[a]] <= rank_b[perm[b]]:
        return None

    base = vals_a

    def continued_gap(E: complex) -> float:
        vals = np.linalg.eigvals(transfer_matrix(scan.coeffs, E))
        p = _match(base, vals)
        return float(np.abs(vals[p[a]]) - np.abs(vals[p[b]]))

    lo, hi = 0.0, 1.0
    g_lo = float(np.abs(vals_a[a]) - np.abs(vals_a[b]))
    if g_lo > 0:
        return None
    tol = 0.01  # fraction of the edge length = h/100
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g = continued_gap(Ea + mid * (Eb - Ea))
        if g <= 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    return Ea + t * (Eb - Ea)


def _lambda_pair_arcs(scan: ScanGrid, a: int, b: int, label: str,
                      r: Optional[int],
                      unit_conditions: bool = False,
                      point_filter: Optional[Callable] = None) -> List[Arc]:
    """Arcs of |z_a| = |z_b| (0-based consecutive ordered branches) by
    branch-matched edge crossings assembled through cell adjacency."""
    ny, nx = scan.ny, scan.nx
    valid = scan.valid
    moduli = scan.moduli
    values = scan.values
    gap_pair = moduli[:, :, b] - moduli[:, :, a]
    crossings: Dict[Tuple[str, int, int], complex] = {}
    flagged = 0

    def consider(kind, iy, ix, iy2, ix2):
        if not (valid[iy, ix] and valid[iy2, ix2]):
            return
        va, vb = values[iy, ix], values[iy2, ix2]
        # an order swap needs the pair gap to close somewhere on the edge;
        # bound branch movement by nearest-neighbor eigenvalue displacement
        move = float(np.max(np.min(np.abs(va[:, None] - vb[None, :]), axis=1)))
        if min(gap_pair[iy, ix], gap_pair[iy2, ix2]) > 2 * move + 1e-12:
            return
        Ea, Eb = scan.energy(ix, iy), scan.energy(ix2, iy2)
        pt = _edge_crossing(scan, a, b, Ea, Eb, va, vb)
        if pt is not None:
            crossings[(kind, iy, ix)] = pt

    for iy in range(ny):
        for ix in range(nx - 1):
            consider("h", iy, ix, iy, ix + 1)
    for iy in range(ny - 1):
        for ix in range(nx):
            consider("v", iy, ix, iy + 1, ix)

    # filter by the unit-modulus side conditions of the rank-r definition
    def passes(pt: complex) -> bool:
        nonlocal flagged
        mods = _sorted_moduli_at(scan.coeffs, pt)
        if a - 1 >= 0 and mods[a] - mods[a - 1] < scan.tie_tol * (1 + mods[a]):
            flagged += 1
        if point_filter is not None:
            return bool(point_filter(mods, a))
        if not unit_conditions:
            return True
        if mods[a] < 1.0 - UNIT_COND_TOL:
            return False
        if a - 1 >= 0 and mods[a - 1] > 1.0 + UNIT_COND_TOL:
            return False
        return True

    crossings = {k: v for k, v in crossings.items() if passes(v)}

    # collect the crossing points cell by cell and connect pairs
    segments = []
    for iy in range(ny - 1):
        for ix in range(nx - 1):
            cell = []
            for ekey in (("h", iy, ix), ("h", iy + 1, ix),
                         ("v", iy, ix), ("v", iy, ix + 1)):
                if ekey in crossings:
                    cell.append(crossings[ekey])
            if len(cell) == 2:
                segments.append((cell[0], cell[1]))
            elif len(cell) > 2:
                cell = sorted(cell, key=lambda p: (p.real, p.imag))
                while len(cell) >= 2:
                    p0 = cell.pop(0)
                    nearest = min(range(len(cell)), key=lambda i: abs(cell[i] - p0))
                    segments.append((p0, cell.pop(nearest)))
    arcs = [Arc(label, r, line, flagged_points=flagged)
            for line in _assemble_polylines(segments, scan.h * 1e-6)]
    return arcs


def lambda_gap_mask(scan: ScanGrid, a: int, b: int,
                    threshold: float = 1e-3) -> np.ndarray:
    """Diagnostic fallback for the branch-matched detector: nodes where the
    ordered-modulus gap |z_b| - |z_a| is below threshold*(1 + |z_b|). The gap
    itself is one-signed, so this marks near-crossings, not crossings."""
    gap = scan.moduli[:, :, b] - scan.moduli[:, :, a]
    return scan.valid & (gap < threshold * (1.0 + scan.moduli[:, :, b]))


def lambda_open(scan: ScanGrid) -> List[Arc]:
    """|z_L| = |z_{L+1}| arcs (1-based), the open-boundary limit curve."""
    L = scan.L
    return _lambda_pair_arcs(scan, L - 1, L, "Lambda", None, False)


def lambda_r(scan: ScanGrid, r: int) -> List[Arc]:
    """|z_{L-r}| = |z_{L-r+1}| >= 1 arcs with |z_{L-r-1}| <= 1 (1-based);
    empty by definition at r = L."""
    L = scan.L
    if not 0 <= r <= L:
        raise ValueError("0 <= r <= L required")
    if r == L:
        return []
    return _lambda_pair_arcs(scan, L - r - 1, L - r, "Lambda_r", r, True)


# ---------------------------------------------------------------------------
# outliers


def refine_zero(f: Callable[[complex], complex], seed: complex,
                h0: float, scale: float = 1.0,
                max_iter: int = 50) -> Tuple[complex, float, str]:
    """Newton iteration with a central-difference derivative.

    Returns (point, |f(point)|, status); unconverged seeds are reported, not
    discarded.
    """
    z = complex(seed)
    h = float(h0)
    fz = f(z)
    for _ in range(max_iter):
        if not (np.isfinite(z) and np.isfinite(fz)):
            # hit an invalid evaluation (degenerate spectrum, overflow);
            # report the seed as unconverged rather than wandering off
            return complex(seed), np.inf, "unconverged"
        if abs(fz) < 1e-12 * scale:
            return z, abs(fz), "converged"
        df = (f(z + h) - f(z - h)) / (2 * h)
        if df == 0:
            h *= 0.5
            if h < 1e-13:
                break
            continue
        step = fz / df
        z = z - step
        fz = f(z)
        if abs(step) < 1e-13:
            break
        h = max(min(h, 0.5 * abs(step) + 1e-12), 1e-9)
    if not (np.isfinite(z) and np.isfinite(fz)):
        return complex(seed), np.inf, "unconverged"
    status = "converged" if abs(fz) < 1e-12 * scale else "unconverged"
    return z, abs(fz), status


def _batched_ordered_eig(coeffs: CoefficientTriple, energies: np.ndarray):
    """Stacked modulus-ordered eigen-triples (values, right, left-rows)."""
    stack = _batched_transfer(coeffs, energies)
    vals, right = np.linalg.eig(stack)
    order = np.argsort(np.abs(vals), axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    idx = order[:, None, :]
    right = np.take_along_axis(right, np.broadcast_to(idx, right.shape), axis=2)
    left_rows = np.linalg.inv(right)
    return vals, right, left_rows


def _local_minima_mask(mag: np.ndarray, valid: np.ndarray,
                       threshold: float) -> np.ndarray:
    ny, nx = mag.shape
    padded = np.full((ny + 2, nx + 2), np.inf)
    padded[1:-1, 1:-1] = np.where(valid, mag, np.inf)
    center = padded[1:-1, 1:-1]
    is_min = np.ones((ny, nx), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            # strict: a constant plateau (e.g. q identically 1 where the
            # dominant index set is empty) must not seed anything
            is_min &= center < padded[1 + dy:ny + 1 + dy, 1 + dx:nx + 1 + dx]
    # the inf padding would promote every boundary node; keep interior only
    is_min[0, :] = is_min[-1, :] = False
    is_min[:, 0] = is_min[:, -1] = False
    return is_min & valid & (mag < threshold)


def _arc_distance(point: complex, arcs: Sequence[Arc]) -> float:
    best = np.inf
    for arc in arcs:
        if arc.points.size:
            best = min(best, float(np.min(np.abs(arc.points - point))))
    return best


def _refine_outliers(field: np.ndarray, scan: ScanGrid,
                     f: Callable[[complex], complex], label: str,
                     arcs: Sequence[Arc],
                     exclusion_radius: Optional[float],
                     seed_quantile: float,
                     seed_factor: float) -> List[Outlier]:
    valid = scan.valid
    if exclusion_radius is None:
        exclusion_radius = EXCLUSION_FACTOR * scan.h
    finite = field[valid & np.isfinite(field)]
    if finite.size == 0:
        return []
    scale = float(np.median(finite))
    threshold = seed_factor * float(np.quantile(finite, seed_quantile))
    seeds_mask = _local_minima_mask(field, valid, threshold)
    energies = scan.energies
    outliers: List[Outlier] = []
    for iy, ix in zip(*np.nonzero(seeds_mask)):
        seed = complex(energies[iy, ix])
        point, residual, status = refine_zero(f, seed, scan.h / 10, scale=scale)
        in_region = (scan.region.re_min - scan.h <= point.real <= scan.region.re_max + scan.h
                     and scan.region.im_min - scan.h <= point.imag <= scan.region.im_max + scan.h)
        if not in_region:
            # left the scan window: either a zero outside scope or a diverged
            # Newton run from a shallow minimum; not a reportable outlier
            continue
        # residual and exclusion filters apply regardless of Newton status;
        # "unconverged" then only marks points that reached the residual bar
        # without meeting the step criterion
        if residual > ACCEPT_RESIDUAL * scale:
            continue
        if _arc_distance(point, arcs) <= exclusion_radius:
            continue
        if any(abs(point - o.point) < scan.h / 10 for o in outliers):
            continue
        outliers.append(Outlier(label, point, residual, status))
    return outliers


def outliers_open(coeffs: CoefficientTriple, C, scan: ScanGrid,
                  arcs: Optional[Sequence[Arc]] = None,
                  exclusion_radius: Optional[float] = None,
                  seed_quantile: float = SEED_QUANTILE,
                  seed_factor: float = SEED_FACTOR) -> List[Outlier]:
    """Zeros of the dominant open-boundary q-function off the Lambda arcs."""
    C = nk.as_cmatrix(C)
    L = scan.L
    members = list(range(L, 2 * L))   # 1-based {L+1, ..., 2L}
    energies = scan.energies.ravel()
    vals, right, left_rows = _batched_ordered_eig(coeffs, energies)
    proj = right[:, :, members] @ left_rows[:, members, :]
    col = np.concatenate([
        energies[:, None, None] * np.eye(L) - C[None],
        np.broadcast_to(np.eye(L, dtype=np.complex128), (energies.size, L, L)),
    ], axis=1)
    block = (proj @ col)[:, L:, :]
    field = np.abs(np.linalg.det(block)).reshape(scan.ny, scan.nx)

    def f(E: complex) -> complex:
        spec = ordered_spectrum(coeffs, E, scan.degeneracy_tol, scan.tie_tol)
        q = q_hat(spec, C, members)
        return q.value if q.valid else complex(np.nan)

    if arcs is None:
        arcs = lambda_open(scan)
    return _refine_outliers(field, scan, f, "Gamma_C", arcs,
                            exclusion_radius, seed_quantile, seed_factor)


def _dominant_members(moduli: np.ndarray, L: int, r: int) -> Tuple[int, ...]:
    """0-based index set {j : j >= L-r, |z_j| > 1} (1-based j >= L-r+1)."""
    return tuple(j for j in range(L - r, 2 * L) if moduli[j] > 1.0)


def outliers_perturbed(coeffs: CoefficientTriple, boundary: BoundaryTriple,
                       scan: ScanGrid,
                       arcs: Optional[Sequence[Arc]] = None,
                       exclusion_radius: Optional[float] = None,
                       seed_quantile: float = SEED_QUANTILE,
                       seed_factor: float = SEED_FACTOR) -> List[Outlier]:
    """Zeros of q over the energy-dependent dominant index set, off the
    Sigma_r and Lambda_r arcs."""
    L = scan.L
    r = boundary.rank_A
    Binv = nk.inverse(boundary.B)   # raises SingularMatrix early
    energies = scan.energies.ravel()
    vals, right, left_rows = _batched_ordered_eig(coeffs, energies)
    moduli = np.abs(vals)
    # boundary transfer matrices, batched
    n = energies.size
    Tbd = np.zeros((n, 2 * L, 2 * L), dtype=np.complex128)
    Tbd[:, :L, :L] = (energies[:, None, None] * np.eye(L) - boundary.C) @ Binv
    Tbd[:, :L, L:] = -boundary.A
    Tbd[:, L:, :L] = Binv
    # group nodes by dominant-set pattern and evaluate q per group
    patterns = moduli > 1.0
    patterns[:, :max(L - r, 0)] = False
    field = np.empty(n)
    eye = np.eye(2 * L, dtype=np.complex128)
    codes = patterns.dot(1 << np.arange(2 * L))
    for code in np.unique(codes):
        sel = codes == code
        members = np.nonzero(patterns[np.argmax(sel)])[0]
        proj = right[sel][:, :, members] @ left_rows[sel][:, members, :]
        q = np.linalg.det(proj @ Tbd[sel] - (eye[None] - proj))
        field[sel] = np.abs(q)
    field = field.reshape(scan.ny, scan.nx)

    def f(E: complex) -> complex:
        spec = ordered_spectrum(coeffs, E, scan.degeneracy_tol, scan.tie_tol)
        members = _dominant_members(spec.moduli, L, r)
        q = q_perturbed(spec, boundary, members)
        return q.value if q.valid else complex(np.nan)

    if arcs is None:
        arcs = sigma_r(scan, r) + lambda_r(scan, r)
    return _refine_outliers(field, scan, f, "Gamma_r", arcs,
                            exclusion_radius, seed_quantile, seed_factor)


def omega_r_membership(coeffs: CoefficientTriple, E: complex, r: int) -> bool:
    """E lies in the open set whose topological boundary is the rank-r
    continuous spectrum: winding number > -r."""
    return winding_number(coeffs, E) > -r


def compute_limit_sets(coeffs: CoefficientTriple,
                       boundary: Optional[BoundaryTriple],
                       region: Region, nx: int, ny: int, r: Optional[int] = None,
                       workers: Optional[int] = None) -> LimitSpectrumResult:
    """One-stop pipeline: scan, arcs and outliers for the given model."""
    scan = scan_grid(coeffs, region, nx, ny, workers=workers)
    L = coeffs.L
    arcs: List[Arc] = []
    outliers: List[Outlier] = []
    if boundary is None:
        arcs.extend(sigma_r(scan, L))
    else:
        case = boundary.classify(coeffs)
        if case in ("open", "boundary"):
            arcs.extend(lambda_open(scan))
            arcs.extend(sigma_r(scan, L))
            outliers.extend(outliers_open(coeffs, boundary.C, scan,
                                          arcs=[a for a in arcs
                                                if a.label == "Lambda"]))
        else:
            rr = boundary.rank_A if r is None else r
            sig = sigma_r(scan, rr)
            lam = lambda_r(scan, rr)
            arcs.extend(sig)
            arcs.extend(lam)
            outliers.extend(outliers_perturbed(coeffs, boundary, scan,
                                               arcs=sig + lam))
    metadata = {
        "model_hash": model_hash(coeffs, boundary),
        "region": [region.re_min, region.re_max, region.im_min, region.im_max],
        "nx": nx, "ny": ny, "h": scan.h, "r": r,
        "degeneracy_tol": scan.degeneracy_tol, "tie_tol": scan.tie_tol,
        "masked_nodes": int(np.sum(scan.masked)),
        "degenerate_nodes": int(np.sum(scan.degenerate)),
    }
    return LimitSpectrumResult(arcs, outliers, metadata)
