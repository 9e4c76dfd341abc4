"""Symmetric interaction potentials V(x, y) on the torus and their analysis.

Two representations:

* ``TranslationInvariantKernel`` -- V(x, y) = v(x - y) stored through the
  real, even, finitely supported Fourier coefficients of v. The induced
  integral operator is diagonal in the Fourier basis, so positivity, the
  sign split, and the spectral gap on mean-zero functions are coefficient
  arithmetic.
* ``GridMatrixKernel`` -- a symmetric N x N matrix of node values for
  kernels with no translation structure. Spectral questions go through the
  symmetrized matrix sqrt(w) V sqrt(w), whose eigenvalues equal those of
  the lambda-weighted integral operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .geometry import DensityField, Grid, ModeVector, PotentialField, mode_indices

MERCER_TOL = 1e-10
HEAT_COEFF_CUTOFF = 1e-14


# ---------------------------------------------------------------------------
# Kernel types and constructors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TranslationInvariantKernel:
    """V(x, y) = v(x - y) with v real and even, finitely many coefficients.

    coeffs maps lattice frequencies (d-tuples) to real coefficients v_k,
    with v_{-k} = v_k enforced at construction.
    """

    dim: int
    coeffs: dict

    def __post_init__(self):
        clean = {}
        for k, v in self.coeffs.items():
            kk = tuple(int(c) for c in (k if isinstance(k, (tuple, list, np.ndarray)) else (k,)))
            if len(kk) != self.dim:
                raise ValueError(f"coefficient index {kk} does not match dim {self.dim}")
            vv = complex(v)
            if abs(vv.imag) > 0:
                raise ValueError(f"coefficient v_{kk} must be real")
            clean[kk] = float(vv.real)
        for k, v in clean.items():
            neg = tuple(-c for c in k)
            if neg not in clean or abs(clean[neg] - v) > 1e-14 * max(1.0, abs(v)):
                raise ValueError(f"coefficients must be even: v_{k} != v_{tuple(-c for c in k)}")
        object.__setattr__(self, "coeffs", clean)

    def items(self):
        """Coefficient pairs in deterministic (lexicographic) order."""
        return sorted(self.coeffs.items())

    @property
    def support_k_max(self) -> int:
        nz = [max(abs(c) for c in k) for k, v in self.coeffs.items() if v != 0.0]
        return max(nz) if nz else 0


@dataclass(frozen=True)
class GridMatrixKernel:
    """General symmetric kernel sampled on a grid: entries[i, j] = V(x_i, x_j)."""

    grid: Grid
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        n = self.grid.n_nodes
        if e.shape != (n, n):
            raise ValueError(f"entries must be {n}x{n}")
        if not np.all(np.isfinite(e)):
            raise ValueError("entries must be finite")
        scale = max(1.0, float(np.max(np.abs(e))))
        if float(np.max(np.abs(e - e.T))) > 1e-12 * scale:
            raise ValueError("entries must be symmetric")
        e = np.ascontiguousarray(e)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)


KernelSpec = Union[TranslationInvariantKernel, GridMatrixKernel]


def make_translation_invariant(coeffs, dim: int = 1) -> TranslationInvariantKernel:
    return TranslationInvariantKernel(dim=dim, coeffs=dict(coeffs))


def make_circle_dot(a: float) -> TranslationInvariantKernel:
    """a*cos(x - y) on the circle: coefficients a/2 at k = +-1."""
    return TranslationInvariantKernel(dim=1, coeffs={(1,): a / 2.0, (-1,): a / 2.0})


def make_heat(a: float, tau: float, k_max: Optional[int] = None, dim: int = 1) -> TranslationInvariantKernel:
    """a times the heat kernel at time tau: v_k = a*exp(-|k|^2 * tau).

    Coefficients below 1e-14 in magnitude are dropped; with k_max omitted
    the support is chosen by that cutoff alone.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if k_max is None:
        k_max = 0
        while abs(a) * np.exp(-((k_max + 1) ** 2) * tau) >= HEAT_COEFF_CUTOFF:
            k_max += 1
    coeffs = {}
    for k in map(tuple, mode_indices(dim, k_max)):
        v = a * float(np.exp(-sum(c * c for c in k) * tau))
        if abs(v) >= HEAT_COEFF_CUTOFF or k == (0,) * dim:
            coeffs[k] = v
    return TranslationInvariantKernel(dim=dim, coeffs=coeffs)


def make_gaussian_schoenberg(beta: float, sigma: float, grid: Grid) -> GridMatrixKernel:
    """beta * exp(-||x - y||^2 / sigma^2) with the planar chordal distance.

    Each torus axis is embedded as the unit circle in the plane, so the
    squared chordal offset per axis is 4*sin^2((x_a - y_a)/2); a Gaussian of
    a squared Euclidean distance is positive definite (completely monotonic
    radial profile), hence Mercer.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if sigma == 0.0:
        raise ValueError("sigma must be nonzero")
    pts = grid.points
    d2 = np.zeros((grid.n_nodes, grid.n_nodes))
    for a in range(grid.dim):
        half = 0.5 * (pts[:, a][:, None] - pts[:, a][None, :])
        d2 += 4.0 * np.sin(half) ** 2
    entries = beta * np.exp(-d2 / sigma ** 2)
    return GridMatrixKernel(grid=grid, entries=entries)


def make_grid_matrix(grid: Grid, entries) -> GridMatrixKernel:
    return GridMatrixKernel(grid=grid, entries=np.asarray(entries, dtype=float))


def zero_kernel(dim: int = 1) -> TranslationInvariantKernel:
    return TranslationInvariantKernel(dim=dim, coeffs={})


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _coeff_arrays(kernel: TranslationInvariantKernel):
    items = kernel.items()
    if not items:
        return np.zeros((0, kernel.dim), dtype=int), np.zeros(0)
    ks = np.array([k for k, _ in items], dtype=int).reshape(len(items), kernel.dim)
    vs = np.array([v for _, v in items], dtype=float)
    return ks, vs


def profile_on_grid(kernel: TranslationInvariantKernel, grid: Grid) -> np.ndarray:
    """v evaluated at every grid node (as offsets from 0)."""
    ks, vs = _coeff_arrays(kernel)
    if len(vs) == 0:
        return np.zeros(grid.n_nodes)
    return np.real(np.exp(1j * grid.points @ ks.T) @ vs.astype(complex))


def kernel_matrix(kernel: KernelSpec, grid: Grid) -> np.ndarray:
    """Dense node matrix V(x_i, x_j); circulant structure for v(x - y)."""
    if isinstance(kernel, GridMatrixKernel):
        if kernel.grid.n_nodes != grid.n_nodes or kernel.grid.dim != grid.dim:
            raise ValueError("grid mismatch")
        return np.asarray(kernel.entries)
    if kernel.dim != grid.dim:
        raise ValueError("kernel dimension does not match grid")
    prof = profile_on_grid(kernel, grid)
    n = grid.n_per_axis
    idx = np.arange(n)
    off1 = (idx[:, None] - idx[None, :]) % n
    if grid.dim == 1:
        return prof[off1]
    # flat offset of multi-index differences, row-major
    flat = (off1[:, None, :, None] * n + off1[None, :, None, :]).reshape(grid.n_nodes, grid.n_nodes)
    return prof[flat]


def apply_operator(kernel: KernelSpec, grid: Grid, u_values: np.ndarray) -> np.ndarray:
    """V applied to the signed measure u*lambda, evaluated at the nodes."""
    u = np.asarray(u_values, dtype=float)
    if isinstance(kernel, GridMatrixKernel):
        if kernel.grid.n_nodes != grid.n_nodes:
            raise ValueError("grid mismatch")
        return kernel.entries @ (u * grid.weight)
    ks, vs = _coeff_arrays(kernel)
    if len(vs) == 0:
        return np.zeros(grid.n_nodes)
    phases = np.exp(-1j * ks @ grid.points.T)    # (K, N)
    moments = phases @ u * grid.weight           # u_k for k in the support
    return np.real((vs * moments) @ np.conj(phases))


def _mode_lookup(kernel: TranslationInvariantKernel, mu: ModeVector):
    if kernel.dim != mu.dim:
        raise ValueError("kernel/mode dimension mismatch")
    if mu.k_max < kernel.support_k_max:
        raise ValueError("mode cutoff smaller than kernel support")
    width = 2 * mu.k_max + 1
    sel, vs = [], []
    for k, v in kernel.items():
        if v == 0.0:
            continue
        flat = 0
        for c in k:
            flat = flat * width + (c + mu.k_max)
        sel.append(flat)
        vs.append(v)
    return np.array(sel, dtype=int), np.array(vs, dtype=float)


def eval_potential(kernel: KernelSpec, mu, grid: Optional[Grid] = None) -> PotentialField:
    """The potential of a measure: x -> integral of V(x, y) d(mu).

    mu may be a DensityField (any kernel) or a ModeVector of a probability
    measure (translation-invariant kernels only). For modes the cutoff must
    cover the kernel support.
    """
    if isinstance(mu, DensityField):
        g = mu.grid
        if grid is not None and (grid.dim != g.dim or grid.n_per_axis != g.n_per_axis):
            raise ValueError("grid mismatch")
        return PotentialField(g, apply_operator(kernel, g, mu.values))
    if isinstance(mu, ModeVector):
        if not isinstance(kernel, TranslationInvariantKernel):
            raise TypeError("mode-vector evaluation requires a translation-invariant kernel")
        if grid is None:
            raise ValueError("a grid is required to evaluate a mode vector")
        sel, vs = _mode_lookup(kernel, mu)
        if len(sel) == 0:
            return PotentialField(grid, np.zeros(grid.n_nodes))
        ks = mu.indices()[sel]
        weights = vs * mu.values[sel]
        vals = np.real(np.exp(1j * grid.points @ ks.T) @ weights)
        return PotentialField(grid, vals)
    raise TypeError(f"unsupported measure representation: {type(mu)!r}")


def sup_norm(kernel: KernelSpec, grid: Grid) -> float:
    """max |V(x, y)| over node pairs."""
    if isinstance(kernel, GridMatrixKernel):
        return float(np.max(np.abs(kernel.entries))) if kernel.grid.n_nodes else 0.0
    prof = profile_on_grid(kernel, grid)
    return float(np.max(np.abs(prof))) if len(prof) else 0.0


# ---------------------------------------------------------------------------
# Spectral analysis
# ---------------------------------------------------------------------------

def _symmetrized(kernel: GridMatrixKernel) -> np.ndarray:
    # uniform weights: sqrt(w) V sqrt(w) = V / N
    return kernel.entries * kernel.grid.weight


def operator_eigenvalues(kernel: KernelSpec, grid: Grid) -> np.ndarray:
    """Eigenvalues of the lambda-weighted operator g -> V(g*lambda)."""
    if isinstance(kernel, TranslationInvariantKernel):
        mat = kernel_matrix(kernel, grid) * grid.weight
    else:
        mat = _symmetrized(kernel)
    return np.linalg.eigvalsh(mat)


def is_mercer(kernel: KernelSpec, grid: Grid, tol: float = MERCER_TOL) -> bool:
    """Positivity of the induced operator on L2(lambda).

    Tolerance is relative to the largest eigenvalue magnitude (absolute for
    kernels of scale below 1). Translation-invariant kernels reduce to
    nonnegativity of the coefficients.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if isinstance(kernel, TranslationInvariantKernel):
        vs = np.array([v for _, v in kernel.items()], dtype=float)
        if len(vs) == 0:
            return True
        scale = max(1.0, float(np.max(np.abs(vs))))
        return bool(np.min(vs) >= -tol * scale)
    eigs = operator_eigenvalues(kernel, grid)
    scale = max(1.0, float(np.max(np.abs(eigs)))) if len(eigs) else 1.0
    return bool(np.min(eigs) >= -tol * scale)


def rho(kernel: KernelSpec, grid: Grid) -> float:
    """Infimum of <Vu, u> over unit-norm mean-zero u.

    For translation-invariant kernels this is the infimum of v_k over all
    nonzero frequencies of the full lattice; frequencies outside the finite
    support contribute 0, so the value is min(0, min over the support).
    """
    if isinstance(kernel, TranslationInvariantKernel):
        vals = [v for k, v in kernel.items() if any(c != 0 for c in k)]
        return float(min(0.0, min(vals))) if vals else 0.0
    return rho_spectral(kernel, grid)


def rho_spectral(kernel: KernelSpec, grid: Grid) -> float:
    """rho through the dense eigensolver on the complement of constants."""
    if isinstance(kernel, TranslationInvariantKernel):
        s = kernel_matrix(kernel, grid) * grid.weight
    else:
        s = _symmetrized(kernel)
    n = s.shape[0]
    q = np.full(n, np.sqrt(grid.weight))
    sq = s @ q
    qsq = float(q @ sq)
    psp = s - np.outer(q, sq) - np.outer(sq, q) + qsq * np.outer(q, q)
    shift = float(np.linalg.norm(s)) + 1.0
    return float(np.min(np.linalg.eigvalsh(psp + shift * np.outer(q, q))))


@dataclass(frozen=True)
class MercerSplit:
    """V = plus - minus with both parts Mercer and orthogonal ranges."""

    plus: KernelSpec
    minus: KernelSpec


def mercer_split(kernel: KernelSpec, grid: Grid) -> MercerSplit:
    """Split into nonnegative / negative spectral parts.

    Translation-invariant kernels split by coefficient sign; grid matrices
    by spectral projection of the symmetrized operator.
    """
    if isinstance(kernel, TranslationInvariantKernel):
        plus = {k: v for k, v in kernel.items() if v >= 0.0}
        minus = {k: -v for k, v in kernel.items() if v < 0.0}
        return MercerSplit(
            plus=TranslationInvariantKernel(kernel.dim, plus),
            minus=TranslationInvariantKernel(kernel.dim, minus),
        )
    s = _symmetrized(kernel)
    lam, q = np.linalg.eigh(s)
    s_plus = (q * np.maximum(lam, 0.0)) @ q.T
    s_minus = (q * np.maximum(-lam, 0.0)) @ q.T
    inv_w = 1.0 / kernel.grid.weight
    e_plus = 0.5 * (s_plus + s_plus.T) * inv_w
    e_minus = 0.5 * (s_minus + s_minus.T) * inv_w
    return MercerSplit(
        plus=GridMatrixKernel(kernel.grid, e_plus),
        minus=GridMatrixKernel(kernel.grid, e_minus),
    )


def diam_diag(kernel: KernelSpec, grid: Grid, check_mercer: bool = True):
    """(diam_sq, diag) of a Mercer kernel.

    diam_sq is the supremum over node pairs of the SQUARED kernel
    semi-distance (K(x,x) + K(y,y))/2 - K(x,y); diag is sup K(x,x). The
    squared quantity is the one the convexity certificate compares to 1.
    """
    if check_mercer and not is_mercer(kernel, grid):
        raise ValueError("diam/diag require a Mercer kernel")
    if isinstance(kernel, TranslationInvariantKernel):
        prof = profile_on_grid(kernel, grid)
        if len(prof) == 0:
            return 0.0, 0.0
        v0 = float(sum(v for _, v in kernel.items()))
        return v0 - float(np.min(prof)), v0
    d = np.diag(kernel.entries)
    d2 = 0.5 * (d[:, None] + d[None, :]) - kernel.entries
    return float(np.max(d2)), float(np.max(d))


def check_hyp_occ(kernel: KernelSpec, grid: Grid, tol: float = 1e-10) -> bool:
    """Whether x -> integral of V(x, y) d(lambda) is constant (within tol)."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if isinstance(kernel, TranslationInvariantKernel):
        return True
    field = kernel.entries @ np.full(grid.n_nodes, grid.weight)
    return bool(float(np.max(field) - np.min(field)) <= tol)


def torus_criterion_sum(kernel: KernelSpec) -> Optional[float]:
    """Sum over nonzero frequencies of min(v_k, 0); None for grid matrices.

    Greater than -1 certifies strict convexity of the free energy (the
    negative part has diagonal below 1).
    """
    if not isinstance(kernel, TranslationInvariantKernel):
        return None
    return float(sum(min(v, 0.0) for k, v in kernel.items() if any(c != 0 for c in k)))


@dataclass(frozen=True)
class KernelReport:
    rho: float
    is_mercer: bool
    diam_sq: float
    diag: float
    hyp_occ_holds: bool
    torus_criterion_sum: Optional[float]

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "is_mercer": self.is_mercer,
            "diam_sq": self.diam_sq,
            "diag": self.diag,
            "hyp_occ_holds": self.hyp_occ_holds,
            "torus_criterion_sum": self.torus_criterion_sum,
        }


def kernel_report(kernel: KernelSpec, grid: Grid, mercer_tol: float = MERCER_TOL,
                  occ_tol: float = 1e-10) -> KernelReport:
    """Summary used by the command-line `kernel-info` path.

    diam_sq/diag are reported from the defining formulas even for
    non-Mercer kernels (is_mercer qualifies their meaning).
    """
    mercer = is_mercer(kernel, grid, mercer_tol)
    diam_sq, diag = diam_diag(kernel, grid, check_mercer=False)
    return KernelReport(
        rho=rho(kernel, grid),
        is_mercer=mercer,
        diam_sq=diam_sq,
        diag=diag,
        hyp_occ_holds=check_hyp_occ(kernel, grid, occ_tol),
        torus_criterion_sum=torus_criterion_sum(kernel),
    )


def convexity_certificate(kernel: KernelSpec, grid: Grid) -> bool:
    """Sufficient condition for a strictly convex free energy.

    True when the kernel itself is Mercer, or when the negative part of the
    sign split has min(diam_sq, diag) below 1.
    """
    if is_mercer(kernel, grid):
        return True
    split = mercer_split(kernel, grid)
    diam_sq, diag = diam_diag(split.minus, grid, check_mercer=False)
    return bool(min(diam_sq, diag) < 1.0)
