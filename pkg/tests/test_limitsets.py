import json

import numpy as np
import pytest

from toeplimit.limitsets import (Region, compute_limit_sets, lambda_gap_mask,
                                 lambda_open, lambda_r, omega_r_membership,
                                 outliers_open, outliers_perturbed,
                                 refine_zero, scan_grid, sigma_periodic,
                                 sigma_r)
from toeplimit.operators import BoundaryTriple, CoefficientTriple

REGION = Region(-3, 3, -3, 3)


@pytest.fixture(scope="module")
def scalar_scan(scalar_model):
    return scan_grid(scalar_model, REGION, 96, 96)


@pytest.fixture(scope="module")
def demo_scan(demo_model):
    return scan_grid(demo_model, REGION, 128, 128)


@pytest.fixture(scope="module")
def demo_rev_scan(demo_reversed):
    return scan_grid(demo_reversed, REGION, 128, 128)


def arc_points(arcs):
    pts = [a.points for a in arcs if a.points.size]
    return np.concatenate(pts) if pts else np.array([], dtype=complex)


def test_region_validation():
    with pytest.raises(ValueError):
        Region(1.0, 1.0, -1.0, 1.0)


def test_scan_grid_shapes_and_product(scalar_scan):
    assert scalar_scan.values.shape == (96, 96, 2)
    # det T^E = det R / det T = 1, so the modulus product is 1 at every node
    prod = np.prod(scalar_scan.moduli, axis=2)
    assert np.allclose(prod, 1.0, atol=1e-9)
    assert scalar_scan.masked.sum() == 0


def test_scan_grid_rejects_small_grids(scalar_model):
    with pytest.raises(ValueError):
        scan_grid(scalar_model, REGION, 8, 8)


def test_scan_grid_demo_smoke(demo_scan):
    frac = demo_scan.masked.mean()
    assert frac < 0.001
    assert demo_scan.values.shape == (128, 128, 4)


def test_dominant_and_growing_counts(scalar_scan):
    counts = scalar_scan.growing_count()
    # off the segment [-2, 2] exactly one branch grows; product of moduli is 1
    far = counts[0, 0]
    assert far == 1
    assert scalar_scan.dominant_count(1).max() <= 2


def test_sigma_periodic_scalar(scalar_model):
    cloud = sigma_periodic(scalar_model, 256)
    assert np.max(np.abs(cloud.imag)) < 1e-12
    assert np.min(cloud.real) == pytest.approx(-2.0, abs=1e-3)
    assert np.max(cloud.real) == pytest.approx(2.0, abs=1e-3)
    with pytest.raises(ValueError):
        sigma_periodic(scalar_model, 8)


def test_sigma_periodic_ellipse():
    co = CoefficientTriple([[1.0]], [[2.0]], [[7.0]])
    cloud = sigma_periodic(co, 512)
    theta = np.arctan2(cloud.imag, (cloud.real - 7) / 3)
    expected = 7 + 3 * np.cos(theta) + 1j * np.sin(theta)
    assert np.max(np.abs(cloud - expected)) < 1e-9


def test_scalar_sigma_is_segment(scalar_scan):
    pts = arc_points(sigma_r(scalar_scan, 1))
    assert pts.size > 20
    assert np.max(np.abs(pts.imag)) < 2 * scalar_scan.h
    assert np.min(pts.real) < -1.9 and np.max(pts.real) > 1.9
    assert np.max(np.abs(pts.real)) < 2.0 + 2 * scalar_scan.h


def test_scalar_lambda_is_segment(scalar_scan):
    pts = arc_points(lambda_open(scalar_scan))
    assert pts.size > 20
    assert np.max(np.abs(pts.imag)) < 2 * scalar_scan.h
    assert np.min(pts.real) < -1.9 and np.max(pts.real) > 1.9


def test_sigma_r_range_checks(scalar_scan):
    with pytest.raises(ValueError):
        sigma_r(scalar_scan, 5)
    with pytest.raises(ValueError):
        lambda_r(scalar_scan, -1)


def test_lambda_r_at_full_rank_empty(demo_scan):
    assert lambda_r(demo_scan, 2) == []


def test_sigma_r_subset_of_periodic_cloud(demo_model, demo_scan):
    cloud = sigma_periodic(demo_model, 1024)
    for r in (1, 2):
        pts = arc_points(sigma_r(demo_scan, r))
        assert pts.size
        dist = np.abs(pts[:, None] - cloud[None, :]).min(axis=1)
        assert np.max(dist) <= 2 * demo_scan.h


def test_demo_sigma1_equals_sigma_lambda1_empty(demo_scan):
    sigma = arc_points(sigma_r(demo_scan, 2))
    sigma1 = arc_points(sigma_r(demo_scan, 1))
    cost = np.abs(sigma[:, None] - sigma1[None, :])
    hausdorff = max(cost.min(axis=1).max(), cost.min(axis=0).max())
    assert hausdorff <= 2 * demo_scan.h
    assert arc_points(lambda_r(demo_scan, 1)).size == 0


def test_demo_reversed_lambda1_nonempty(demo_rev_scan):
    assert arc_points(lambda_r(demo_rev_scan, 1)).size > 10


def test_lambda_gap_mask_marks_near_crossings(scalar_scan):
    mask = lambda_gap_mask(scalar_scan, 0, 1, threshold=0.2)
    on_axis = np.abs(scalar_scan.energies.imag) < scalar_scan.h
    near_seg = on_axis & (np.abs(scalar_scan.energies.real) < 1.9)
    assert mask[near_seg & scalar_scan.valid].mean() > 0.9
    assert not mask[0, 0]  # far corner is nowhere near a crossing


def test_refine_zero_linear_and_quadratic():
    point, res, status = refine_zero(lambda z: z - 2, 2.3, 0.01)
    assert status == "converged" and abs(point - 2) < 1e-10
    point, res, status = refine_zero(lambda z: (z - 1 - 1j) ** 2,
                                     1.2 + 0.9j, 0.01)
    assert abs(point - (1 + 1j)) < 1e-5


def test_outliers_open_demo(demo_model, demo_scan):
    C = np.array([[0.1, -0.3], [1.0, 2.0j]])
    lam = lambda_open(demo_scan)
    outs = outliers_open(demo_model, C, demo_scan, arcs=lam)
    assert len(outs) == 2
    for o in outs:
        assert o.status == "converged"
        assert o.residual < 1e-10
    # stability under grid refinement
    fine = scan_grid(demo_model, REGION, 192, 192)
    outs_fine = outliers_open(demo_model, C, fine, arcs=lambda_open(fine))
    assert len(outs_fine) == 2
    match = [min(abs(a.point - b.point) for b in outs_fine) for a in outs]
    assert max(match) < 1e-6


def test_outliers_respect_exclusion(demo_model, demo_scan):
    C = np.array([[0.1, -0.3], [1.0, 2.0j]])
    lam = lambda_open(demo_scan)
    outs = outliers_open(demo_model, C, demo_scan, arcs=lam)
    lam_pts = arc_points(lam)
    for o in outs:
        assert np.min(np.abs(lam_pts - o.point)) > 3 * demo_scan.h


def test_outliers_open_scalar_empty(scalar_model, scalar_scan):
    outs = outliers_open(scalar_model, [[0.0]], scalar_scan)
    assert outs == []


def test_outliers_perturbed_scalar_circulant_empty(scalar_model, scalar_scan):
    bd = BoundaryTriple.circulant(scalar_model)
    outs = outliers_perturbed(scalar_model, bd, scalar_scan)
    assert outs == []


def test_omega_membership(scalar_model):
    assert omega_r_membership(scalar_model, 10.0 + 5.0j, 1)
    assert not omega_r_membership(scalar_model, 3.0, 0)


def test_omega_membership_constant_off_arcs(scalar_model, scalar_scan):
    # for r = 1 every energy off the segment is a member (one growing branch);
    # for r = 0 none is, so the indicator never flips along off-axis paths
    pts = arc_points(sigma_r(scalar_scan, 1))
    probes = [complex(x, y) for x in (-1.5, 0.3, 1.7) for y in (-1.0, 0.02, 1.0)]
    for E in probes:
        assert omega_r_membership(scalar_model, E, 1)
        assert not omega_r_membership(scalar_model, E, 0)
    # the arcs sit where the indicator boundary must be: on the real segment
    assert np.min(np.abs(pts - 0.5)) < 2 * scalar_scan.h


def test_compute_limit_sets_and_serialization(tmp_path, demo_model):
    bd = BoundaryTriple.boundary(np.array([[0.1, -0.3], [1.0, 2.0j]]))
    result = compute_limit_sets(demo_model, bd, REGION, 96, 96)
    assert any(a.label == "Sigma" for a in result.arcs)
    assert any(a.label == "Lambda" for a in result.arcs)
    assert len(result.outliers) == 2
    jpath = tmp_path / "r.json"
    cpath = tmp_path / "r.csv"
    result.write_json(str(jpath))
    result.write_csv(str(cpath))
    data = json.loads(jpath.read_text())
    assert set(data) == {"arcs", "outliers", "metadata"}
    assert len(data["outliers"]) == 2
    assert data["metadata"]["model_hash"]
    header = cpath.read_text().splitlines()[0]
    assert header == "set_label,r,re,im,aux"


def test_compute_limit_sets_circulant_only_sigma(scalar_model):
    result = compute_limit_sets(scalar_model, None, REGION, 64, 64)
    assert all(a.label == "Sigma" for a in result.arcs)
    assert result.outliers == []
