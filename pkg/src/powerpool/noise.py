"""Gradient (Perlin) noise on the unit cube with log-normal gradient amplitudes.

Lattice gradients come from a counter-based generator: the gradient at node
``i`` of a lattice is a pure function of ``(seed, frequency, i)``, so any
subset of nodes can be generated on its own and in any order.  This is what
lets :func:`sample_sphere_batch` build only the nodes the sphere touches.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .grid import cell_vectors

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi


def _mix64(z):
    # SplitMix64 finalizer; uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def lattice_key(seed, frequency):
    """64-bit stream key for the lattice of ``frequency`` under ``seed``."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, int(frequency)])
    return ss.generate_state(1, dtype=np.uint64)[0]


def _node_uniforms(keys, nodes):
    """Four uniforms in (0, 1) per node; ``keys`` broadcasts against ``nodes``."""
    keys = np.asarray(keys, dtype=np.uint64)[..., None]
    counter = np.asarray(nodes, dtype=np.uint64)[..., None] * np.uint64(4) + np.arange(
        1, 5, dtype=np.uint64
    )
    h = _mix64(keys + counter * _GOLDEN)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _node_gradients(keys, nodes, sigma_ln):
    u = _node_uniforms(keys, nodes)
    # Box-Muller on two uniform pairs gives four independent standard normals
    r01 = np.sqrt(-2.0 * np.log(u[..., 0]))
    r23 = np.sqrt(-2.0 * np.log(u[..., 2]))
    z = np.stack(
        [
            r01 * np.cos(_TWO_PI * u[..., 1]),
            r01 * np.sin(_TWO_PI * u[..., 1]),
            r23 * np.cos(_TWO_PI * u[..., 3]),
            r23 * np.sin(_TWO_PI * u[..., 3]),
        ],
        axis=-1,
    )
    direction = z[..., :3]
    norm = np.linalg.norm(direction, axis=-1, keepdims=True)
    direction = direction / norm
    amplitude = np.exp(sigma_ln * z[..., 3])
    return direction * amplitude[..., None]


@dataclass(frozen=True)
class GradientLattice:
    """Gradients on the ``(F+1)**3`` nodes of a regular lattice over [0, 1]^3.

    ``gradients[i, j, k]`` is the vector at node ``(i, j, k) / F``.
    """

    seed: int
    frequency: int
    sigma_ln: float
    gradients: np.ndarray

    @property
    def amplitudes(self):
        return np.linalg.norm(self.gradients, axis=-1)


def build_lattice(seed, frequency, sigma_ln=0.5):
    """Deterministic lattice of random unit directions times log-normal amplitudes."""
    if int(frequency) != frequency or frequency < 1:
        raise ValueError(f"frequency must be a positive integer, got {frequency!r}")
    if sigma_ln < 0:
        raise ValueError(f"sigma_ln must be >= 0, got {sigma_ln}")
    frequency = int(frequency)
    m = frequency + 1
    nodes = np.arange(m**3, dtype=np.uint64)
    g = _node_gradients(lattice_key(seed, frequency), nodes, float(sigma_ln))
    g = g.reshape(m, m, m, 3)
    g.setflags(write=False)
    return GradientLattice(int(seed), frequency, float(sigma_ln), g)


def fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


_CORNERS = np.array([[dx, dy, dz] for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)])


def _check_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have a trailing dimension of 3, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)) or pts.min(initial=0.0) < 0.0 or pts.max(initial=0.0) > 1.0:
        raise ValueError("points must lie inside the unit cube [0, 1]^3")
    return pts


def _stencil(points, frequency):
    """Corner node indices ``(P, 8)`` and linear coefficients ``(P, 8, 3)``.

    Noise at point ``p`` is ``sum(coef[p] * gradients[nodes[p]])``.
    """
    x = points.reshape(-1, 3) * frequency
    # snap products like (3/7)*7 that miss the integer by an ulp
    nearest = np.rint(x)
    x = np.where(np.abs(x - nearest) <= 8 * np.finfo(float).eps * frequency, nearest, x)
    cell = np.clip(np.floor(x), 0, frequency - 1).astype(np.int64)
    t = x - cell
    m = frequency + 1
    corner = cell[:, None, :] + _CORNERS[None]
    nodes = (corner[..., 0] * m + corner[..., 1]) * m + corner[..., 2]
    offset = t[:, None, :] - _CORNERS[None]
    f = fade(t)
    axis_w = np.where(_CORNERS[None] == 1, f[:, None, :], 1.0 - f[:, None, :])
    weight = axis_w.prod(axis=-1)
    return nodes, weight[..., None] * offset


def _contract(coef, grads):
    # grads: (..., P, 8, 3); fixed summation order keeps results bit-stable
    return np.einsum("pcd,...pcd->...p", coef, grads, optimize=False)


def perlin3(point, lattice):
    """Gradient noise at ``point`` (a triple, or an array ``(..., 3)``) in [0, 1]^3."""
    pts = _check_points(point)
    nodes, coef = _stencil(pts, lattice.frequency)
    flat = lattice.gradients.reshape(-1, 3)
    out = _contract(coef, flat[nodes]).reshape(pts.shape[:-1])
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FractalSpec:
    """Octaves ``((frequency, amplitude), ...)`` and the log-normal shape ``sigma_ln``."""

    octaves: tuple = ((4, 1.0), (8, 0.5), (16, 0.25))
    sigma_ln: float = 0.5

    def __post_init__(self):
        octaves = tuple((int(f), float(a)) for f, a in self.octaves)
        object.__setattr__(self, "octaves", octaves)
        if not octaves:
            raise ValueError("at least one octave is required")
        freqs = [f for f, _ in octaves]
        if any(f < 1 for f in freqs) or any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ValueError(f"octave frequencies must be positive and strictly increasing: {freqs}")
        if any(a < 0 for _, a in octaves):
            raise ValueError("octave amplitudes must be nonnegative")
        if self.sigma_ln < 0:
            raise ValueError(f"sigma_ln must be >= 0, got {self.sigma_ln}")

    @classmethod
    def default(cls, base_frequency=4, n_octaves=3, persistence=0.5, lacunarity=2, sigma_ln=0.5):
        octaves = tuple(
            (base_frequency * lacunarity**k, persistence**k) for k in range(n_octaves)
        )
        return cls(octaves, sigma_ln)

    @property
    def max_frequency(self):
        return self.octaves[-1][0]


def octave_seed(seed, k):
    return int(seed) ^ k


def fractal3(point, spec, seed):
    """Amplitude-weighted sum of Perlin octaves, each on its own derived seed."""
    pts = _check_points(point)
    total = np.zeros(pts.shape[:-1])
    for k, (freq, amp) in enumerate(spec.octaves):
        lattice = build_lattice(octave_seed(seed, k), freq, spec.sigma_ln)
        total = total + amp * np.asarray(perlin3(pts, lattice))
    return float(total) if total.ndim == 0 else total


def sphere_points(grid_spec):
    """Cube coordinates ``(v + 1) / 2`` of every cell center, shape ``(6, N, N, 3)``."""
    return np.clip((cell_vectors(grid_spec) + 1.0) / 2.0, 0.0, 1.0)


@lru_cache(maxsize=32)
def _sphere_operator(grid_spec, frequency):
    """Used node ids and the sparse map from their gradients to cell values."""
    nodes, coef = _stencil(sphere_points(grid_spec), frequency)
    used, local = np.unique(nodes, return_inverse=True)
    local = local.reshape(nodes.shape)
    n_points = nodes.shape[0]
    rows = np.repeat(np.arange(n_points), 24)
    cols = (local[..., None] * 3 + np.arange(3)).reshape(-1)
    op = sparse.csr_matrix((coef.reshape(-1), (rows, cols)), shape=(n_points, 3 * len(used)))
    return used.astype(np.uint64), op


def sample_sphere_batch(grid_spec, spec, seeds):
    """Fractal noise fields for many seeds at once, shape ``(len(seeds), 6, N, N)``.

    Row ``b`` equals ``sample_sphere(grid_spec, spec, seeds[b])``; only the
    lattice nodes adjacent to the sphere are generated.
    """
    seeds = [int(s) for s in seeds]
    out = np.zeros((len(seeds), grid_spec.n_cells))
    for k, (freq, amp) in enumerate(spec.octaves):
        if amp == 0.0:
            continue
        used, op = _sphere_operator(grid_spec, freq)
        keys = np.array([lattice_key(octave_seed(s, k), freq) for s in seeds], dtype=np.uint64)
        grads = _node_gradients(keys[:, None], used[None, :], spec.sigma_ln)
        out += amp * (op @ grads.reshape(len(seeds), -1).T).T
    return out.reshape((len(seeds),) + grid_spec.shape)


def sample_sphere(grid_spec, spec, seed):
    """Fractal noise evaluated at every cell center; seam-free by construction."""
    return sample_sphere_batch(grid_spec, spec, [seed])[0]
