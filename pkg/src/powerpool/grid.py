"""Gnomonic equiangular cube-sphere grid.

A field on the grid is a float array of shape ``(6, N, N)`` indexed as
``[face, row, col]``.  Faces 0-3 sit on the equator with outward axes
+X (lon 0), +Y (lon 90), -X (lon 180) and -Y (lon 270); face 4 is the north
polar face (+Z) and face 5 the south polar face (-Z).

Every face is parametrised by two equiangular coordinates ``alpha`` (rows)
and ``beta`` (cols), both in ``[-pi/4, pi/4]``.  A local point maps to the
unnormalised 3-vector ``normal + tan(alpha) * row_axis + tan(beta) * col_axis``.
On the equatorial faces the row axis is +Z, so rows increase northward and
cols increase eastward.  On the north face rows run toward lon 180 and cols
toward lon 90; on the south face rows run toward lon 0 and cols toward lon 90.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

# (normal, row_axis, col_axis) per face
_FACE_FRAMES = np.array(
    [
        [[1, 0, 0], [0, 0, 1], [0, 1, 0]],
        [[0, 1, 0], [0, 0, 1], [-1, 0, 0]],
        [[-1, 0, 0], [0, 0, 1], [0, -1, 0]],
        [[0, -1, 0], [0, 0, 1], [1, 0, 0]],
        [[0, 0, 1], [-1, 0, 0], [0, 1, 0]],
        [[0, 0, -1], [1, 0, 0], [0, 1, 0]],
    ],
    dtype=float,
)
FACE_NORMALS = _FACE_FRAMES[:, 0]

# targets closer than this (radians) to a cell center snap onto it
COINCIDENCE_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Cube-sphere resolution: ``resolution`` cells along each face edge."""

    resolution: int = 48

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ValueError(f"resolution must be an integer >= 2, got {self.resolution!r}")

    @property
    def shape(self):
        return (6, self.resolution, self.resolution)

    @property
    def n_cells(self):
        return 6 * self.resolution**2


class CellCoord(NamedTuple):
    face: int
    row: int
    col: int


class LatLon(NamedTuple):
    lat: float
    lon: float


def _check_cell(spec, c):
    face, row, col = c
    n = spec.resolution
    if not (0 <= face < 6 and 0 <= row < n and 0 <= col < n):
        raise ValueError(f"cell {tuple(c)} out of range for N={n}")


def _center_angles(n):
    return -np.pi / 4 + (np.arange(n) + 0.5) * (np.pi / 2) / n


def _local_to_vector(face, alpha, beta):
    frame = _FACE_FRAMES[face]
    v = (
        frame[..., 0, :]
        + np.tan(alpha)[..., None] * frame[..., 1, :]
        + np.tan(beta)[..., None] * frame[..., 2, :]
    )
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def vector_to_latlon(v):
    """Convert unit vectors ``(..., 3)`` to ``(lat, lon)`` in degrees, lon in [0, 360)."""
    v = np.asarray(v, dtype=float)
    lat = np.degrees(np.arctan2(v[..., 2], np.hypot(v[..., 0], v[..., 1])))
    lon = np.degrees(np.arctan2(v[..., 1], v[..., 0])) % 360.0
    lon = np.where(lon >= 360.0, lon - 360.0, lon)
    return lat, lon


def latlon_to_vector(lat, lon):
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    c = np.cos(lat)
    return np.stack([c * np.cos(lon), c * np.sin(lon), np.sin(lat)], axis=-1)


@lru_cache(maxsize=16)
def _cell_vectors_cached(spec):
    n = spec.resolution
    face, row, col = np.meshgrid(np.arange(6), np.arange(n), np.arange(n), indexing="ij")
    ang = _center_angles(n)
    v = _local_to_vector(face, ang[row], ang[col])
    v.setflags(write=False)
    return v


def cell_vectors(spec):
    """Unit vectors of all cell centers, shape ``(6, N, N, 3)`` (read-only)."""
    return _cell_vectors_cached(spec)


def cell_centers(spec):
    """Latitude and longitude of every cell center, each of shape ``(6, N, N)``."""
    return vector_to_latlon(cell_vectors(spec))


def cell_center(spec, c):
    """Lat/lon of the center of cell ``c = (face, row, col)``."""
    _check_cell(spec, c)
    face, row, col = (int(i) for i in c)
    ang = _center_angles(spec.resolution)
    v = _local_to_vector(np.array(face), np.array(ang[row]), np.array(ang[col]))
    lat, lon = vector_to_latlon(v)
    return LatLon(float(lat), float(lon))


def _locate_vectors(spec, v):
    v = np.asarray(v, dtype=float)
    dots = v @ FACE_NORMALS.T
    # argmax returns the first maximum, so ties go to the lowest face index
    face = np.argmax(dots, axis=-1)
    frame = _FACE_FRAMES[face]
    a = np.take_along_axis(dots, face[..., None], axis=-1)[..., 0]
    alpha = np.arctan(np.einsum("...i,...i->...", v, frame[..., 1, :]) / a)
    beta = np.arctan(np.einsum("...i,...i->...", v, frame[..., 2, :]) / a)
    n = spec.resolution
    scale = n / (np.pi / 2)
    row = np.clip(np.floor((alpha + np.pi / 4) * scale), 0, n - 1).astype(int)
    col = np.clip(np.floor((beta + np.pi / 4) * scale), 0, n - 1).astype(int)
    return face, row, col


def locate_cells(spec, lat, lon):
    """Vectorised :func:`locate_cell`; returns ``(face, row, col)`` integer arrays."""
    return _locate_vectors(spec, latlon_to_vector(lat, lon))


def locate_cell(spec, p):
    """Cell containing the point ``p = (lat, lon)`` in degrees."""
    lat, lon = p
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    face, row, col = locate_cells(spec, lat, lon)
    return CellCoord(int(face), int(row), int(col))


# small outward step used to push an edge point onto the adjacent face
_EDGE_STEP = 1e-7


def face_neighbors(spec, c):
    """The four edge-adjacent cells of ``c``, in the order row-1, row+1, col-1, col+1.

    Steps that leave the face are resolved geometrically: a point just past
    the shared edge is projected and located on the adjacent face.
    """
    _check_cell(spec, c)
    face, row, col = (int(i) for i in c)
    n = spec.resolution
    ang = _center_angles(n)
    out = []
    for d_row, d_col in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        r, k = row + d_row, col + d_col
        if 0 <= r < n and 0 <= k < n:
            out.append(CellCoord(face, r, k))
            continue
        alpha, beta = ang[row], ang[col]
        if d_row:
            alpha = d_row * (np.pi / 4 + _EDGE_STEP)
        else:
            beta = d_col * (np.pi / 4 + _EDGE_STEP)
        v = _local_to_vector(np.array(face), np.array(alpha), np.array(beta))
        f2, r2, k2 = _locate_vectors(spec, v)
        out.append(CellCoord(int(f2), int(r2), int(k2)))
    return out


@lru_cache(maxsize=16)
def neighbor_table(spec):
    """Neighbor indices for every cell, shape ``(6, N, N, 4, 3)`` (read-only)."""
    n = spec.resolution
    table = np.empty((6, n, n, 4, 3), dtype=np.int64)
    for f in range(6):
        for r in range(n):
            for k in range(n):
                table[f, r, k] = face_neighbors(spec, (f, r, k))
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class RegridWeights:
    """Sparse k-NN interpolation weights.

    ``indices[m]`` holds the flat source indices used for target ``m`` and
    ``weights[m]`` their weights.  ``source_shape`` is the field shape the
    weights apply to.
    """

    indices: np.ndarray
    weights: np.ndarray
    source_shape: tuple

    @property
    def k(self):
        return self.indices.shape[1]


def great_circle(u, v):
    """Angle in radians between unit vectors, stable for tiny and near-pi angles."""
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.einsum("...i,...i->...", u, v)
    return np.arctan2(cross, dot)


def _knn(src_vectors, tgt_vectors, k, source_shape):
    n_src = src_vectors.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n_src:
        raise ValueError(f"k={k} exceeds the number of source points ({n_src})")
    if tgt_vectors.shape[0] == 0:
        raise ValueError("targets must be non-empty")
    # chord distance is monotone in great-circle distance, so the tree's
    # Euclidean neighbors are the great-circle neighbors
    tree = cKDTree(src_vectors)
    _, idx = tree.query(tgt_vectors, k=k)
    idx = np.asarray(idx, dtype=np.int64).reshape(len(tgt_vectors), k)
    dist = great_circle(src_vectors[idx], tgt_vectors[:, None, :])
    order = np.argsort(dist, axis=1, kind="stable")
    idx = np.take_along_axis(idx, order, axis=1)
    dist = np.take_along_axis(dist, order, axis=1)

    hit = dist[:, 0] <= COINCIDENCE_TOL
    with np.errstate(divide="ignore"):
        inv = 1.0 / dist
    inv[hit] = 0.0
    inv[hit, 0] = 1.0
    weights = inv / inv.sum(axis=1, keepdims=True)
    idx.setflags(write=False)
    weights.setflags(write=False)
    return RegridWeights(idx, weights, tuple(source_shape))


def knn_weights(spec, targets, k=4):
    """Inverse-distance k-NN weights from cube-sphere cells to lat/lon targets.

    Parameters
    ----------
    spec : GridSpec
        Source grid.
    targets : array_like
        Sequence of ``(lat, lon)`` pairs in degrees, shape ``(M, 2)``.
    k : int
        Number of neighbors (4 by default).
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    src = cell_vectors(spec).reshape(-1, 3)
    tgt = latlon_to_vector(targets[:, 0], targets[:, 1])
    return _knn(src, tgt, k, spec.shape)


def knn_weights_from_points(source_latlon, target_latlon, k=4):
    """k-NN weights between arbitrary point sets (e.g. a lat/lon grid onto cube cells)."""
    source_latlon = np.asarray(source_latlon, dtype=float).reshape(-1, 2)
    target_latlon = np.asarray(target_latlon, dtype=float).reshape(-1, 2)
    src = latlon_to_vector(source_latlon[:, 0], source_latlon[:, 1])
    tgt = latlon_to_vector(target_latlon[:, 0], target_latlon[:, 1])
    return _knn(src, tgt, k, (len(source_latlon),))


def apply_regrid(weights, field):
    """Weighted sum of ``field`` values per target."""
    field = np.asarray(field, dtype=float)
    if field.shape != weights.source_shape:
        raise ValueError(
            f"field shape {field.shape} does not match weights built for {weights.source_shape}"
        )
    flat = field.reshape(-1)
    return np.einsum("mk,mk->m", flat[weights.indices], weights.weights)
