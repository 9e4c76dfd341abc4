"""Discretized flat torus: grids, probability densities, the Gibbs map,
Fourier modes of measures, and a computable weak-topology metric.

Everything lives on a uniform grid over [0, 2*pi)^d (d = 1 or 2) carrying
the normalized Lebesgue probability: each of the N = n^d nodes has weight
1/N, so plain weighted sums are quadrature against the uniform probability.
That quadrature is exact for trigonometric polynomials of per-axis degree
below n/2, which is the function class all closed-form checks live in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

TWO_PI = 2.0 * np.pi


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Grid and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform discretization of the flat torus.

    Attributes
    ----------
    dim : int
        Torus dimension, 1 or 2.
    n_per_axis : int
        Nodes per axis (>= 8); N = n_per_axis**dim nodes total.
    points : ndarray, shape (N, dim)
        Node coordinates 2*pi*(multi-index)/n_per_axis, row-major order.
    weight : float
        Lebesgue-probability weight of each node, exactly 1/N.
    """

    dim: int
    n_per_axis: int
    points: np.ndarray
    weight: float

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    def axis_coordinates(self) -> np.ndarray:
        """The n_per_axis equispaced angles shared by every axis."""
        return TWO_PI * np.arange(self.n_per_axis) / self.n_per_axis


def make_grid(dim: int, n_per_axis: int) -> Grid:
    """Build the uniform grid on the torus.

    Raises
    ------
    ValueError
        If dim is not 1 or 2, or n_per_axis < 8.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if n_per_axis < 8:
        raise ValueError(f"n_per_axis must be >= 8, got {n_per_axis}")
    axis = TWO_PI * np.arange(n_per_axis) / n_per_axis
    if dim == 1:
        pts = axis[:, None]
    else:
        a, b = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([a.ravel(), b.ravel()])
    n = n_per_axis ** dim
    return Grid(dim=dim, n_per_axis=n_per_axis, points=_frozen(pts), weight=1.0 / n)


def _coerce_values(grid: Grid, u) -> np.ndarray:
    """Accept a field or a raw array; enforce that it lives on `grid`."""
    if isinstance(u, (DensityField, PotentialField)):
        if u.grid is not grid and (
            u.grid.dim != grid.dim or u.grid.n_per_axis != grid.n_per_axis
        ):
            raise ValueError("grid mismatch")
        return u.values
    arr = np.asarray(u, dtype=float)
    if arr.shape != (grid.n_nodes,):
        raise ValueError(
            f"grid mismatch: expected {grid.n_nodes} values, got shape {arr.shape}"
        )
    return arr


def inner_product(grid: Grid, u, v, g=None) -> float:
    """Weighted inner product <u, v>_g = integral of u*v*g against lambda.

    With g omitted this is the plain L2(lambda) pairing. g must be
    strictly positive wherever supplied.
    """
    uu = _coerce_values(grid, u)
    vv = _coerce_values(grid, v)
    if g is None:
        return float(np.dot(uu, vv) * grid.weight)
    gg = _coerce_values(grid, g)
    if np.min(gg) <= 0.0:
        raise ValueError("weight function g must be strictly positive")
    return float(np.dot(uu * gg, vv) * grid.weight)


def norm_l2(grid: Grid, u) -> float:
    return float(np.sqrt(max(inner_product(grid, u, u), 0.0)))


MASS_TOL = 1e-12


@dataclass(frozen=True)
class DensityField:
    """A strictly positive grid function integrating to 1 against lambda.

    Grid realization of a probability density (an element of the open cone
    of positive unit-mass continuous functions). Construction validates
    positivity and unit mass to 1e-12.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        if np.min(vals) <= 0.0:
            raise ValueError("density values must be strictly positive")
        mass = float(np.sum(vals) * self.grid.weight)
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass} deviates from 1 by more than {MASS_TOL}")
        object.__setattr__(self, "values", _frozen(vals))

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.weight)


@dataclass(frozen=True)
class PotentialField:
    """A real-valued grid function, e.g. the potential induced by a measure."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "values", _frozen(vals))


def uniform_density(grid: Grid) -> DensityField:
    return DensityField(grid, np.ones(grid.n_nodes))


# ---------------------------------------------------------------------------
# Gibbs map
# ---------------------------------------------------------------------------

def gibbs_values(grid: Grid, f_values: np.ndarray) -> np.ndarray:
    """exp(-f) normalized to unit lambda-mass, computed with a max shift.

    The shift makes the computation invariant under adding constants to f
    and keeps the exponentials in range for user-supplied potentials.
    """
    f = np.asarray(f_values, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("gibbs input must be finite")
    s = -f
    s -= np.max(s)
    e = np.exp(s)
    return e / (np.sum(e) * grid.weight)


def gibbs(f: PotentialField) -> DensityField:
    """The Gibbs map: f -> exp(-f) / integral of exp(-f) against lambda."""
    return DensityField(f.grid, gibbs_values(f.grid, f.values))


# ---------------------------------------------------------------------------
# Fourier modes of measures
# ---------------------------------------------------------------------------
# A probability measure mu is tracked through the complex numbers
# m_k = integral of exp(-i k.x) d(mu), for k in the box |k|_inf <= k_max.
# m_0 = 1, m_{-k} = conj(m_k), |m_k| <= 1.

def mode_indices(dim: int, k_max: int) -> np.ndarray:
    """All lattice frequencies with |k|_inf <= k_max, lexicographic order.

    Returns an integer array of shape (K, dim) with K = (2*k_max+1)**dim.
    """
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    rng = np.arange(-k_max, k_max + 1)
    if dim == 1:
        return rng[:, None].copy()
    a, b = np.meshgrid(rng, rng, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


@dataclass(frozen=True)
class ModeVector:
    """Truncated Fourier modes of a probability measure.

    values[j] = integral of exp(-i k_j . x) d(mu) with k_j the j-th row of
    mode_indices(dim, k_max).
    """

    dim: int
    k_max: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        expected = (2 * self.k_max + 1) ** self.dim
        if vals.shape != (expected,):
            raise ValueError(f"expected {expected} modes, got shape {vals.shape}")
        object.__setattr__(self, "values", _frozen(vals))

    def indices(self) -> np.ndarray:
        return mode_indices(self.dim, self.k_max)


def lambda_modes(dim: int, k_max: int) -> ModeVector:
    """Modes of the uniform probability: 1 at k = 0, zero elsewhere."""
    ks = mode_indices(dim, k_max)
    vals = np.zeros(len(ks), dtype=complex)
    vals[np.all(ks == 0, axis=1)] = 1.0
    return ModeVector(dim, k_max, vals)


def dirac_modes(x, dim: int, k_max: int) -> ModeVector:
    """Modes of the point mass at x: exp(-i k.x) for every retained k."""
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if xv.shape != (dim,):
        raise ValueError("position shape does not match dim")
    ks = mode_indices(dim, k_max)
    return ModeVector(dim, k_max, np.exp(-1j * ks @ xv))


def density_modes(f: DensityField, k_max: int) -> ModeVector:
    """Quadrature modes of the measure f*lambda.

    Exact for band-limited f; requires 2*k_max < n_per_axis so no retained
    frequency aliases to zero on the grid.
    """
    grid = f.grid
    if 2 * k_max >= grid.n_per_axis:
        raise ValueError("k_max too large for this grid (aliasing)")
    ks = mode_indices(grid.dim, k_max)
    phases = np.exp(-1j * ks @ grid.points.T)  # (K, N)
    return ModeVector(grid.dim, k_max, phases @ f.values * grid.weight)


# ---------------------------------------------------------------------------
# Weak-topology metric
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakMetricParams:
    """Weighted l1 comparison of truncated modes.

    The default weights 2**(-|k|_1) are summable over the whole lattice, so
    the truncated sum metrizes narrow convergence up to the cutoff.
    """

    dim: int
    k_max: int
    mode_weights: Optional[np.ndarray] = None

    def weights(self) -> np.ndarray:
        if self.mode_weights is not None:
            w = np.asarray(self.mode_weights, dtype=float)
            if w.shape != ((2 * self.k_max + 1) ** self.dim,):
                raise ValueError("mode_weights length does not match the mode box")
            if np.min(w) <= 0.0:
                raise ValueError("mode weights must be positive")
            return w
        ks = mode_indices(self.dim, self.k_max)
        return np.power(2.0, -np.sum(np.abs(ks), axis=1).astype(float))


def weak_distance(p: ModeVector, q: ModeVector, params: WeakMetricParams) -> float:
    """Weighted l1 distance of two truncated mode vectors.

    Zero iff all retained modes agree; symmetric; a metric on truncations.
    """
    if (p.dim, p.k_max) != (q.dim, q.k_max):
        raise ValueError("mode cutoff mismatch")
    if (p.dim, p.k_max) != (params.dim, params.k_max):
        raise ValueError("mode cutoff mismatch with metric params")
    return float(np.sum(params.weights() * np.abs(p.values - q.values)))


# ---------------------------------------------------------------------------
# CSV serialization of fields
# ---------------------------------------------------------------------------

def field_to_csv(field: Union[DensityField, PotentialField], path, preamble: Optional[list[str]] = None) -> None:
    """Write one row per node: columns x (or x,y) and value, node order."""
    grid = field.grid
    header = ("x,value" if grid.dim == 1 else "x,y,value")
    with open(path, "w", encoding="utf-8") as fh:
        for line in preamble or []:
            fh.write(f"# {line}\n")
        fh.write(header + "\n")
        for row, val in zip(grid.points, field.values):
            coords = ",".join(repr(float(c)) for c in row)
            fh.write(f"{coords},{float(val)!r}\n")


def field_from_csv(path, kind: str = "density"):
    """Read a field CSV written by field_to_csv; reconstructs the grid."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("x,"):
                continue
            rows.append([float(tok) for tok in line.split(",")])
    data = np.asarray(rows, dtype=float)
    dim = data.shape[1] - 1
    n_axis = round(data.shape[0] ** (1.0 / dim))
    grid = make_grid(dim, n_axis)
    if not np.allclose(grid.points, data[:, :dim], atol=1e-9):
        raise ValueError("node coordinates do not match a uniform torus grid")
    values = data[:, dim]
    if kind == "density":
        return DensityField(grid, values)
    return PotentialField(grid, values)
