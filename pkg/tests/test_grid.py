import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import great_circle_ref
from powerpool.grid import (
    CellCoord,
    GridSpec,
    LatLon,
    apply_regrid,
    cell_center,
    cell_centers,
    face_neighbors,
    knn_weights,
    knn_weights_from_points,
    locate_cell,
    locate_cells,
    neighbor_table,
)


def all_cells(spec):
    n = spec.resolution
    return [CellCoord(f, r, c) for f in range(6) for r in range(n) for c in range(n)]


def random_latlon(rng, m):
    v = rng.standard_normal((m, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    lat = np.degrees(np.arcsin(v[:, 2]))
    lon = np.degrees(np.arctan2(v[:, 1], v[:, 0])) % 360.0
    return np.stack([lat, lon], axis=1)


def test_gridspec_validation_and_size():
    assert GridSpec(48).n_cells == 6 * 48 * 48
    assert GridSpec(8).shape == (6, 8, 8)
    with pytest.raises(ValueError):
        GridSpec(1)


def test_center_of_x_face_near_origin():
    spec = GridSpec(8)
    for r in (3, 4):
        for c in (3, 4):
            p = cell_center(spec, CellCoord(0, r, c))
            lon = p.lon if p.lon < 180 else p.lon - 360
            assert abs(p.lat) < 90 / 8 and abs(lon) < 90 / 8


def test_north_face_diagonal_is_poleward_of_corner_latitude():
    spec = GridSpec(8)
    corner_lat = math.degrees(math.atan(1 / math.sqrt(2)))
    assert corner_lat == pytest.approx(35.264, abs=1e-3)
    for i in range(8):
        assert cell_center(spec, CellCoord(4, i, i)).lat > 35.0


def test_equatorial_rows_go_north_and_cols_go_east():
    spec = GridSpec(6)
    for face in range(4):
        a = cell_center(spec, CellCoord(face, 1, 2))
        north = cell_center(spec, CellCoord(face, 2, 2))
        east = cell_center(spec, CellCoord(face, 1, 3))
        assert north.lat > a.lat
        assert (east.lon - a.lon) % 360 < 180


def test_cell_center_rejects_out_of_range():
    spec = GridSpec(4)
    for bad in [CellCoord(6, 0, 0), CellCoord(0, 4, 0), CellCoord(0, 0, -1)]:
        with pytest.raises(ValueError):
            cell_center(spec, bad)


def test_locate_axis_points():
    spec = GridSpec(8)
    assert locate_cell(spec, LatLon(0.0, 0.0)).face == 0
    for lon in (0.0, 77.0, 300.0):
        c = locate_cell(spec, LatLon(90.0, lon))
        assert c.face == 4 and c.row in (3, 4) and c.col in (3, 4)
    assert locate_cell(spec, LatLon(-90.0, 0.0)).face == 5
    assert locate_cell(spec, LatLon(0.0, 90.0)).face == 1
    assert locate_cell(spec, LatLon(0.0, 180.0)).face == 2
    assert locate_cell(spec, LatLon(0.0, 270.0)).face == 3


def test_locate_tie_goes_to_lowest_face():
    # lon 45 on the equator is exactly on the +X / +Y edge
    spec = GridSpec(4)
    lat, lon = np.array([0.0]), np.array([45.0])
    face, _, _ = locate_cells(spec, lat, lon)
    assert face[0] in (0, 1)
    v = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    from powerpool.grid import _locate_vectors

    assert _locate_vectors(spec, v[None])[0][0] == 0


@pytest.mark.parametrize("n", [2, 3, 4, 8])
def test_round_trip_exhaustive(n):
    spec = GridSpec(n)
    for c in all_cells(spec):
        assert locate_cell(spec, cell_center(spec, c)) == c


def test_round_trip_sampled_n48():
    spec = GridSpec(48)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, [6, 48, 48], size=(10_000, 3))
    lat, lon = cell_centers(spec)
    f, r, c = locate_cells(spec, lat[tuple(idx.T)], lon[tuple(idx.T)])
    assert np.array_equal(np.stack([f, r, c], axis=1), idx)


def test_centers_are_distinct():
    spec = GridSpec(8)
    lat, lon = cell_centers(spec)
    keys = {(round(a, 9), round(b, 9)) for a, b in zip(lat.ravel(), lon.ravel())}
    assert len(keys) == spec.n_cells


def test_latlon_ranges():
    lat, lon = cell_centers(GridSpec(8))
    assert lat.min() >= -90 and lat.max() <= 90
    assert lon.min() >= 0 and lon.max() < 360


def test_interior_neighbors_same_face():
    spec = GridSpec(6)
    nb = face_neighbors(spec, CellCoord(2, 3, 3))
    assert nb == [CellCoord(2, 2, 3), CellCoord(2, 4, 3), CellCoord(2, 3, 2), CellCoord(2, 3, 4)]


@pytest.mark.parametrize("n", [2, 4, 5])
def test_neighbors_symmetric_and_regular(n):
    spec = GridSpec(n)
    counts = Counter()
    for c in all_cells(spec):
        nb = face_neighbors(spec, c)
        assert len(nb) == 4 and len(set(nb)) == 4 and c not in nb
        for d in nb:
            assert c in face_neighbors(spec, d)
            counts[d] += 1
    assert set(counts.values()) == {4} and len(counts) == spec.n_cells


def test_neighbor_table_matches_function():
    spec = GridSpec(4)
    table = neighbor_table(spec)
    for c in all_cells(spec):
        assert [tuple(x) for x in table[c]] == [tuple(x) for x in face_neighbors(spec, c)]


def test_neighbors_are_close_on_the_sphere():
    spec = GridSpec(8)
    limit = 2.0 * math.radians(90 / 8)
    for c in all_cells(spec):
        p = cell_center(spec, c)
        for d in face_neighbors(spec, c):
            assert great_circle_ref(p, cell_center(spec, d)) < limit


def test_knn_target_at_center_is_one_hot():
    spec = GridSpec(8)
    p = cell_center(spec, CellCoord(3, 2, 5))
    w = knn_weights(spec, [p])
    assert w.weights[0, 0] == 1.0 and np.all(w.weights[0, 1:] == 0.0)
    field = np.arange(spec.n_cells, dtype=float).reshape(spec.shape)
    assert apply_regrid(w, field)[0] == field[3, 2, 5]


def test_knn_weights_normalized_and_constant_preserving():
    spec = GridSpec(8)
    targets = random_latlon(np.random.default_rng(1), 100)
    w = knn_weights(spec, targets, k=4)
    assert w.k == 4
    assert np.all(w.weights >= 0)
    assert np.max(np.abs(w.weights.sum(axis=1) - 1)) <= 1e-12
    assert np.max(np.abs(apply_regrid(w, np.full(spec.shape, 3.7)) - 3.7)) <= 1e-12
    assert np.all(apply_regrid(w, np.zeros(spec.shape)) == 0)
    assert np.max(np.abs(apply_regrid(w, np.ones(spec.shape)) - 1)) <= 1e-12


def test_knn_matches_brute_force_neighbors_and_idw():
    spec = GridSpec(4)
    lat, lon = cell_centers(spec)
    centers = list(zip(lat.ravel(), lon.ravel()))
    targets = random_latlon(np.random.default_rng(2), 20)
    w = knn_weights(spec, targets, k=4)
    for m, t in enumerate(targets):
        d = np.array([great_circle_ref(t, c) for c in centers])
        nearest = np.argsort(d, kind="stable")[:4]
        assert set(w.indices[m]) == set(nearest)
        inv = 1.0 / d[w.indices[m]]
        assert np.allclose(w.weights[m], inv / inv.sum(), atol=1e-12)


def test_regrid_sin_lat_within_neighbor_spread():
    spec = GridSpec(16)
    lat, _ = cell_centers(spec)
    field = np.sin(np.radians(lat))
    targets = random_latlon(np.random.default_rng(3), 200)
    w = knn_weights(spec, targets)
    got = apply_regrid(w, field)
    truth = np.sin(np.radians(targets[:, 0]))
    vals = field.ravel()[w.indices]
    spread = vals.max(axis=1) - vals.min(axis=1)
    assert np.all(np.abs(got - truth) <= spread + 1e-12)


def test_knn_errors():
    spec = GridSpec(2)
    with pytest.raises(ValueError):
        knn_weights(spec, [(0.0, 0.0)], k=25)
    with pytest.raises(ValueError):
        knn_weights(spec, [(0.0, 0.0)], k=0)
    with pytest.raises(ValueError):
        knn_weights(spec, np.zeros((0, 2)))
    w = knn_weights(spec, [(0.0, 0.0)])
    with pytest.raises(ValueError):
        apply_regrid(w, np.zeros((6, 3, 3)))


def test_knn_between_point_sets():
    src = [(0.0, 0.0), (0.0, 90.0), (45.0, 10.0)]
    w = knn_weights_from_points(src, [(0.0, 0.0), (1.0, 1.0)], k=2)
    assert w.weights[0, 0] == 1.0 and w.indices[0, 0] == 0
    assert apply_regrid(w, np.array([2.0, 2.0, 2.0])) == pytest.approx([2.0, 2.0], abs=1e-12)


@given(st.floats(-90, 90), st.floats(0, 360, exclude_max=True), st.integers(2, 12))
def test_locate_returns_cell_containing_nearest_center(lat, lon, n):
    spec = GridSpec(n)
    c = locate_cell(spec, LatLon(lat, lon))
    assert 0 <= c.face < 6 and 0 <= c.row < n and 0 <= c.col < n
    # the located cell's center is among the closest few centers
    d_own = great_circle_ref((lat, lon), cell_center(spec, c))
    assert d_own <= math.radians(90 / n) * 1.5
