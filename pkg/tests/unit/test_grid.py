"""Tests for grids, cell sets, null sets and dyadic cubes."""

import numpy as np
import pytest

from stefan_lab.core.errors import DomainError
from stefan_lab.core.grid import (
    CellSet, DomainSpec, NullSet, ScalarField, boundary_cells, build_domain, dyadic_decompose,
    interior_cells, label_components, rasterize_null_set,
)

MIDLINE = ((0.5, 0.0), (0.5, 1.0))
CROSS = [MIDLINE, ((0.0, 0.5), (1.0, 0.5))]


def test_interval_domain_layout():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    assert geometry.shape == (64,)
    assert geometry.h == pytest.approx(1 / 32)
    assert U.count() == 32
    assert U.measure() == pytest.approx(1.0)
    x = geometry.centers()[0]
    assert x[U.mask].min() == pytest.approx(0.5 / 32)


def test_ball_domain_covers_disc():
    geometry, U = build_domain(DomainSpec('ball', dim=2, n=32))
    assert geometry.shape == (96, 96)
    assert geometry.origin == pytest.approx((-1.5, -1.5))
    assert U.measure() == pytest.approx(np.pi, rel=0.02)
    assert not U.mask[0, 0]


def test_annulus_excludes_hole():
    geometry, U = build_domain(DomainSpec('annulus', dim=2, n=32, rho=0.5))
    assert U.measure() == pytest.approx(0.75 * np.pi, rel=0.03)
    assert not U.mask[geometry.index_of((0.0, 0.0))]
    assert U.mask[geometry.index_of((0.75, 0.0))]


def test_masked_domain():
    geometry, U = build_domain(DomainSpec('masked', dim=2, n=16, predicate=lambda x, y: x < 0.5))
    assert U.measure() == pytest.approx(0.5)


@pytest.mark.parametrize('spec', [
    DomainSpec('ball', n=8),
    DomainSpec('ball', n=32, pad=4),
    DomainSpec('annulus', n=32, rho=0.0),
    DomainSpec('annulus', n=16, rho=0.9),
    DomainSpec('interval', dim=2, n=32),
    DomainSpec('hexagon', n=32),
    DomainSpec('masked', n=32),
])
def test_invalid_domains_raise(spec):
    with pytest.raises(DomainError):
        build_domain(spec)


def test_interior_and_boundary_cells(box_domain):
    _, U = box_domain
    inner = interior_cells(U)
    assert inner.count() == 14 * 14
    assert boundary_cells(U).count() == 16 * 16 - 14 * 14
    assert (inner | boundary_cells(U)).count() == U.count()
    assert (inner & boundary_cells(U)).is_empty()


def test_cell_set_algebra(box_domain):
    geometry, U = box_domain
    x, _ = geometry.centers()
    left = CellSet(U.mask & (x < 0.5), geometry)
    assert (U - left).count() == left.count() == 128
    assert (U ^ left).count() == 128
    assert left.bounding_box() == ((8, 8), (16, 24))
    other_geometry, _ = build_domain(DomainSpec('box', n=32))
    with pytest.raises(DomainError):
        _ = U | CellSet(other_geometry.empty_mask(), other_geometry)


def test_scalar_field_quadrature_is_exact_for_quadratics(interval_domain):
    geometry, U = interval_domain
    field = ScalarField.from_function(geometry, lambda x: x ** 2, support=U)
    assert field.integral() == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_scalar_field_rejects_cap_violation(box_domain):
    geometry, _ = box_domain
    with pytest.raises(DomainError):
        ScalarField(np.full(geometry.shape, 1.5), geometry, value_cap=1.0, name='mu')
    with pytest.raises(DomainError):
        ScalarField(np.full(geometry.shape, np.nan), geometry)


def test_sampled_density_above_cap_raises_instead_of_clipping(box_domain):
    geometry, U = box_domain
    ramp = lambda x, y: 0.5 + x
    with pytest.raises(DomainError):
        ScalarField.from_function(geometry, ramp, support=U, value_cap=1.0, name='mu')
    field = ScalarField.from_function(geometry, ramp, support=U, value_cap=2.0, name='mu')
    assert field.values[U.mask].max() > 1.4


def test_midline_splits_square(box_domain):
    geometry, U = box_domain
    F = rasterize_null_set(geometry, U, [MIDLINE])
    assert F.face_count() == 16
    assert F.measure() == 0.0
    assert F.adjacent_cells().count() == 32

    labels, count = label_components(U.mask, F)
    assert count == 2
    assert np.bincount(labels[U.mask]).tolist()[1:] == [128, 128]
    _, unblocked = label_components(U.mask)
    assert unblocked == 1


def test_null_set_must_stay_in_domain(box_domain):
    geometry, U = box_domain
    with pytest.raises(DomainError):
        rasterize_null_set(geometry, U, [((0.5, -0.5), (0.5, 1.0))])
    with pytest.raises(DomainError):
        rasterize_null_set(geometry, U, [((0.1, 0.1), (0.4, 0.4))])


def test_point_null_set_in_one_dimension():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    F = rasterize_null_set(geometry, U, [0.5])
    _, count = label_components(U.mask, F)
    assert count == 2
    assert F.node_count() == 1


def test_label_components_drops_small_pieces(box_domain):
    geometry, _ = box_domain
    mask = geometry.empty_mask()
    mask[10:14, 10:14] = True
    mask[20, 20] = True
    _, count = label_components(mask, min_cells=3)
    assert count == 1


def test_dyadic_decomposition(box_domain):
    geometry, U = box_domain
    whole = dyadic_decompose(U)
    assert len(whole) == 1
    assert whole[0].size == 16

    F = rasterize_null_set(geometry, U, CROSS)
    quarters = dyadic_decompose(U, F)
    assert [c.size for c in quarters] == [8, 8, 8, 8]
    assert sum(c.measure(geometry) for c in quarters) == pytest.approx(1.0)
    covered = np.zeros(geometry.shape, dtype=int)
    for cube in quarters:
        covered[cube.slices()] += 1
    assert np.array_equal(covered > 0, U.mask)
    assert covered.max() == 1


def test_dyadic_decomposition_of_disc_tiles_exactly():
    geometry, U = build_domain(DomainSpec('ball', n=16))
    cubes = dyadic_decompose(U)
    assert sum(c.measure(geometry) for c in cubes) == pytest.approx(U.measure())


def test_empty_null_set(box_domain):
    geometry, _ = box_domain
    F = NullSet.empty(geometry)
    assert F.is_empty()
    assert (F | F).face_count() == 0
