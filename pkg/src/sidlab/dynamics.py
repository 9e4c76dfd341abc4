"""Free energy, descent fields, flows, and classification of equilibria.

The central objects:

* J(f) = 0.5*<Vf, f> + <f, log f>  -- free energy of a density f.
* X(f) = -f + gibbs(Vf)            -- descent field on unit-mass densities;
  its zeros are exactly the fixed points of the self-consistency map
  mu -> gibbs(V mu) * lambda, and exactly the critical points of J.
* Y(h) = -h + V(gibbs(h))          -- conjugate field on potentials, with
  V o flow_X = flow_Y o V along trajectories.

Both flows are integrated with the exponential (variation-of-constants)
step f <- exp(-h) f + (1 - exp(-h)) gibbs(Vf), which reproduces the linear
decay exactly and keeps iterates strictly positive with unit mass for any
step size, mirroring the positivity of the exact flow.

Equilibria are classified through the second derivative of J on mean-zero
functions: the generalized symmetric eigenproblem of the forms
A(u,v) = <u,v>_{1/f} + <Vu,v> against B(u,v) = <u,v>_{1/f} yields the real
spectrum of the stability operator; negative eigenvalues count the index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .geometry import (
    DensityField,
    Grid,
    PotentialField,
    gibbs_values,
    mode_indices,
)
from .kernels import KernelSpec, TranslationInvariantKernel, apply_operator, kernel_matrix
from .seeds import mix64

VERDICT_SINK = "sink"
VERDICT_SADDLE = "saddle"
VERDICT_DEGENERATE = "degenerate"

TWO_PI_CELL = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Free energy and vector fields
# ---------------------------------------------------------------------------

def free_energy_values(grid: Grid, f_values: np.ndarray, kernel: KernelSpec) -> float:
    f = np.asarray(f_values, dtype=float)
    if np.min(f) <= 0.0:
        raise ValueError("free energy requires a strictly positive density")
    vf = apply_operator(kernel, grid, f)
    w = grid.weight
    return float(0.5 * np.dot(vf, f) * w + np.dot(f, np.log(f)) * w)


def free_energy(f: DensityField, kernel: KernelSpec) -> float:
    """J(f) = 0.5*<Vf, f> + <f, log f>, by grid quadrature."""
    return free_energy_values(f.grid, f.values, kernel)


def free_energy_gradient(f: DensityField, kernel: KernelSpec) -> np.ndarray:
    """Integrand of the first derivative: Vf + log f (acts on mean-zero u)."""
    vf = apply_operator(kernel, f.grid, f.values)
    return vf + np.log(f.values)


def field_X_values(grid: Grid, f_values: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    vf = apply_operator(kernel, grid, np.asarray(f_values, dtype=float))
    return gibbs_values(grid, vf) - np.asarray(f_values, dtype=float)


def field_X(f: DensityField, kernel: KernelSpec) -> np.ndarray:
    """X(f) = -f + gibbs(Vf); a mean-zero grid function."""
    return field_X_values(f.grid, f.values, kernel)


def residual(f: DensityField, kernel: KernelSpec) -> float:
    """Sup norm of X(f)."""
    return float(np.max(np.abs(field_X(f, kernel))))


def field_Y(h: PotentialField, kernel: KernelSpec) -> PotentialField:
    """Y(h) = -h + V(gibbs(h))."""
    xi = gibbs_values(h.grid, h.values)
    return PotentialField(h.grid, apply_operator(kernel, h.grid, xi) - h.values)


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowTrace:
    """Recorded descent trajectory: times, energies, residuals, terminal."""

    times: np.ndarray
    energies: np.ndarray
    residuals: np.ndarray
    terminal: DensityField


def flow_X(f0: DensityField, kernel: KernelSpec, step: float, t_end: float) -> FlowTrace:
    """Integrate df/dt = X(f) with the exponential step.

    Iterates stay strictly positive with unit mass by construction; the
    free energy is recorded at every step boundary.
    """
    if not (0.0 < step <= 1.0):
        raise ValueError("step must lie in (0, 1]")
    grid = f0.grid
    n_steps = max(1, int(round(t_end / step)))
    decay = float(np.exp(-step))
    f = f0.values.copy()
    times = np.zeros(n_steps + 1)
    energies = np.zeros(n_steps + 1)
    residuals = np.zeros(n_steps + 1)
    w = grid.weight
    for j in range(n_steps + 1):
        vf = apply_operator(kernel, grid, f)
        xi = gibbs_values(grid, vf)
        times[j] = j * step
        energies[j] = 0.5 * np.dot(vf, f) * w + np.dot(f, np.log(f)) * w
        residuals[j] = np.max(np.abs(xi - f))
        if j < n_steps:
            f = decay * f + (1.0 - decay) * xi
            f = f / (np.sum(f) * w)
    return FlowTrace(times=times, energies=energies, residuals=residuals,
                     terminal=DensityField(grid, f))


@dataclass(frozen=True)
class PotentialTrace:
    """Trajectory of the conjugate flow on potentials."""

    times: np.ndarray
    values: np.ndarray   # (n_steps + 1, N)
    terminal: PotentialField


def flow_Y(h0: PotentialField, kernel: KernelSpec, step: float, t_end: float) -> PotentialTrace:
    """Integrate dh/dt = Y(h) with the same exponential stepping as flow_X."""
    if not (0.0 < step <= 1.0):
        raise ValueError("step must lie in (0, 1]")
    grid = h0.grid
    n_steps = max(1, int(round(t_end / step)))
    decay = float(np.exp(-step))
    h = h0.values.copy()
    times = step * np.arange(n_steps + 1)
    values = np.zeros((n_steps + 1, grid.n_nodes))
    values[0] = h
    for j in range(1, n_steps + 1):
        xi = gibbs_values(grid, h)
        h = decay * h + (1.0 - decay) * apply_operator(kernel, grid, xi)
        values[j] = h
    return PotentialTrace(times=times, values=values, terminal=PotentialField(grid, h))


# ---------------------------------------------------------------------------
# Spectral classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralReport:
    """Spectrum of the stability operator at an equilibrium.

    eigenvalues: sorted real spectrum of Id + T(f)V on mean-zero functions
    (in the 1/f-weighted geometry). index counts eigenvalues below
    -threshold; degenerate flags any eigenvalue within threshold of zero.
    """

    eigenvalues: np.ndarray
    index: int
    degenerate: bool
    verdict: str
    threshold: float


def hessian_matrices(f: DensityField, kernel: KernelSpec):
    """Galerkin forms (A, B) of D2J and of <.,.>_{1/f} on the mean-zero basis.

    Basis: the N-1 functions e_i - e_N (node indicators minus the last),
    which have zero lambda-mean on a uniform grid.
    """
    grid = f.grid
    w = grid.weight
    fv = f.values
    inv = 1.0 / fv
    m = kernel_matrix(kernel, grid)
    b_form = w * (np.diag(inv[:-1]) + inv[-1])
    c = m[:-1, :-1] - m[:-1, -1][:, None] - m[-1, :-1][None, :] + m[-1, -1]
    a_form = b_form + (w * w) * c
    return a_form, b_form


def hessian_quadratic(f: DensityField, kernel: KernelSpec, u_values: np.ndarray) -> float:
    """D2J(f)(u, u) for a mean-zero direction u, straight from the forms."""
    grid = f.grid
    u = np.asarray(u_values, dtype=float)
    vu = apply_operator(kernel, grid, u)
    w = grid.weight
    return float(np.dot(u * u, 1.0 / f.values) * w + np.dot(vu, u) * w)


def hessian_spectrum(f: DensityField, kernel: KernelSpec, eps_deg: float = 1e-6) -> SpectralReport:
    """Solve the generalized symmetric eigenproblem A u = nu B u and classify.

    The threshold separating "numerically zero" eigenvalues is eps_deg
    relative to the largest eigenvalue magnitude. Intended for densities
    whose residual is already below the solver tolerance.
    """
    a_form, b_form = hessian_matrices(f, kernel)
    scale = max(1.0, float(np.max(np.abs(a_form))))
    asym = float(np.max(np.abs(a_form - a_form.T)))
    if asym > 1e-8 * scale:
        raise RuntimeError(f"hessian assembly lost symmetry ({asym:.3e}); this is a bug")
    a_form = 0.5 * (a_form + a_form.T)
    eigs = scipy.linalg.eigh(a_form, b_form, eigvals_only=True)
    eigs = np.sort(np.real(eigs))
    threshold = eps_deg * float(np.max(np.abs(eigs)))
    index = int(np.sum(eigs < -threshold))
    degenerate = bool(np.any(np.abs(eigs) <= threshold))
    if degenerate:
        verdict = VERDICT_DEGENERATE
    elif index == 0:
        verdict = VERDICT_SINK
    else:
        verdict = VERDICT_SADDLE
    return SpectralReport(eigenvalues=eigs, index=index, degenerate=degenerate,
                          verdict=verdict, threshold=threshold)


# ---------------------------------------------------------------------------
# Fixed-point enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointRecord:
    density: DensityField
    residual: float
    energy: float
    spectral: SpectralReport
    symmetry_orbit: bool = False


def _fingerprint(values: np.ndarray) -> str:
    return hashlib.sha256(np.round(values, 10).tobytes()).hexdigest()[:16]


def _random_start(grid: Grid, rng: np.random.Generator, scale: float = 1.5) -> np.ndarray:
    # band-limited random potential, pushed through the Gibbs map
    ks = mode_indices(grid.dim, 3)
    keep = [k for k in map(tuple, ks) if k > (0,) * grid.dim]
    g = np.zeros(grid.n_nodes)
    for k in keep:
        amp = scale * rng.standard_normal() / (1.0 + sum(abs(c) for c in k))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        g += amp * np.cos(grid.points @ np.asarray(k, dtype=float) + phase)
    return gibbs_values(grid, g)


def _picard(grid: Grid, m: np.ndarray, f: np.ndarray, damping: float, tol: float,
            max_iter: int):
    w = grid.weight
    res = np.inf
    for _ in range(max_iter):
        vf = m @ f * w
        xi = gibbs_values(grid, vf)
        res = float(np.max(np.abs(xi - f)))
        if res < tol:
            return f, res
        f = (1.0 - damping) * f + damping * xi
        f = f / (np.sum(f) * w)
    return f, res


def _newton(grid: Grid, m: np.ndarray, f: np.ndarray, tol: float, max_iter: int):
    """Damped Newton on X(f) = 0 in mean-zero coordinates.

    Uses the exact Jacobian DX(f) = -(Id + T(gibbs(Vf)) V). Steps are cut
    back to preserve positivity. Converges locally to saddles as well as
    sinks, which the fixed-point iteration cannot reach.
    """
    w = grid.weight
    n = grid.n_nodes
    f = f.copy()
    for _ in range(max_iter):
        vf = m @ f * w
        xi = gibbs_values(grid, vf)
        x_val = xi - f
        res = float(np.max(np.abs(x_val)))
        if res < tol:
            return f, res, True
        # (Id + T(xi) V) delta = X(f), assembled densely
        mg = m @ xi
        jac = np.eye(n) + w * xi[:, None] * m - (w * w) * np.outer(xi, mg)
        jr = (jac[:, :-1] - jac[:, -1][:, None])[:-1, :]
        try:
            c = np.linalg.solve(jr, x_val[:-1])
        except np.linalg.LinAlgError:
            return f, res, False
        delta = np.empty(n)
        delta[:-1] = c
        delta[-1] = -np.sum(c)
        if not np.all(np.isfinite(delta)):
            return f, res, False
        step = 1.0
        neg = delta < 0.0
        if np.any(neg):
            step = min(1.0, 0.85 * float(np.min(f[neg] / -delta[neg])))
        f = f + step * delta
        f = f / (np.sum(f) * w)
        if not np.all(np.isfinite(f)) or np.min(f) <= 0.0 or np.max(f) > 1e12:
            return f, np.inf, False
    vf = m @ f * w
    res = float(np.max(np.abs(gibbs_values(grid, vf) - f)))
    return f, res, res < tol


def _l2(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return float(np.sqrt(np.dot(d, d) * grid.weight))


def _orbit_l2(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """min over torus translations of b of the L2(lambda) distance to a.

    Equilibria of translation-invariant kernels come in whole translation
    orbits, and solver terminals land anywhere on them (the grid pins the
    continuum only at machine precision), so the minimum runs over
    continuous shifts. The correlation <a, b(. - delta)> is an exact
    trigonometric polynomial of delta: it is maximized by upsampled FFT
    evaluation plus a couple of Newton corrections.
    """
    n = grid.n_per_axis
    w = grid.weight
    norm_sq = float(np.dot(a, a) * w + np.dot(b, b) * w)
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    if grid.dim == 1:
        c = np.conj(np.fft.fft(a)) * np.fft.fft(b)  # C(delta) = (w/n) Re sum c_k e^{-ik delta}
        scale = w / n
        pad = np.zeros(16 * n, dtype=complex)
        half = n // 2
        pad[:half] = c[:half]
        pad[-(n - half):] = c[half:]
        coarse = np.real(np.fft.fft(pad)) * scale
        delta = TWO_PI_CELL * np.argmax(coarse) / len(pad)
        for _ in range(3):
            ph = np.exp(-1j * freqs * delta)
            d1 = scale * float(np.real(np.sum(-1j * freqs * c * ph)))
            d2 = scale * float(np.real(np.sum(-(freqs ** 2) * c * ph)))
            if abs(d2) < 1e-30:
                break
            delta -= d1 / d2
        ph = np.exp(-1j * freqs * delta)
        corr = scale * float(np.real(np.sum(c * ph)))
        best = max(corr, float(np.max(coarse)))
        return float(np.sqrt(max(norm_sq - 2.0 * best, 0.0)))
    c = np.conj(np.fft.fft2(a.reshape(n, n))) * np.fft.fft2(b.reshape(n, n))
    scale = w / (n * n)
    m = 8 * n
    pad = np.zeros((m, m), dtype=complex)
    half = n // 2
    pad[:half, :half] = c[:half, :half]
    pad[:half, -(n - half):] = c[:half, half:]
    pad[-(n - half):, :half] = c[half:, :half]
    pad[-(n - half):, -(n - half):] = c[half:, half:]
    coarse = np.real(np.fft.fft2(pad)) * scale
    i0, j0 = np.unravel_index(np.argmax(coarse), coarse.shape)
    delta = np.array([TWO_PI_CELL * i0 / m, TWO_PI_CELL * j0 / m])
    k1 = freqs[:, None]
    k2 = freqs[None, :]
    for _ in range(3):
        ph = np.exp(-1j * (k1 * delta[0] + k2 * delta[1]))
        g1 = scale * float(np.real(np.sum(-1j * k1 * c * ph)))
        g2 = scale * float(np.real(np.sum(-1j * k2 * c * ph)))
        h11 = scale * float(np.real(np.sum(-(k1 ** 2) * c * ph)))
        h22 = scale * float(np.real(np.sum(-(k2 ** 2) * c * ph)))
        h12 = scale * float(np.real(np.sum(-(k1 * k2) * c * ph)))
        det = h11 * h22 - h12 * h12
        if abs(det) < 1e-30:
            break
        delta[0] -= (h22 * g1 - h12 * g2) / det
        delta[1] -= (h11 * g2 - h12 * g1) / det
    ph = np.exp(-1j * (k1 * delta[0] + k2 * delta[1]))
    corr = scale * float(np.real(np.sum(c * ph)))
    best = max(corr, float(np.max(coarse)))
    return float(np.sqrt(max(norm_sq - 2.0 * best, 0.0)))


def find_fixed_points(
    kernel: KernelSpec,
    grid: Grid,
    n_starts: int = 64,
    seed: int = 0,
    picard_damping: float = 0.5,
    tol: float = 1e-10,
    dedupe_radius: float = 1e-4,
    eps_deg: float = 1e-6,
    max_picard: int = 2000,
    max_newton: int = 60,
) -> list[FixedPointRecord]:
    """Multi-start enumeration of the zeros of X.

    Strategy per random start: a damped fixed-point (Picard) sweep, a
    Newton polish of its terminal, and an independent Newton run straight
    from the start (Picard is repelled by saddles; Newton is not). The
    uniform density is always tried as a deterministic candidate. Finally
    each surviving solution is re-seeded at grid translates of itself,
    which picks up equilibria that symmetry breaking moved between the
    found ones. Terminals are deduplicated in L2(lambda) -- modulo grid
    translation for translation-invariant kernels, where whole orbits of
    equilibria are the rule -- keeping the smaller residual.

    Returns records sorted by energy (ties broken by a content hash).
    Non-convergence from every start yields an empty list.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    if not (0.0 < picard_damping <= 1.0):
        raise ValueError("picard_damping must lie in (0, 1]")
    m = kernel_matrix(kernel, grid)
    w = grid.weight
    candidates: list[tuple[np.ndarray, float]] = []

    ones = np.ones(grid.n_nodes)
    res_uniform = float(np.max(np.abs(gibbs_values(grid, m @ ones * w) - ones)))
    if res_uniform < tol:
        candidates.append((ones, res_uniform))

    for j in range(n_starts):
        rng = np.random.default_rng(mix64(seed, j))
        f0 = _random_start(grid, rng)
        f_pic, res_pic = _picard(grid, m, f0.copy(), picard_damping, tol, max_picard)
        if res_pic < tol:
            candidates.append((f_pic, res_pic))
        else:
            f_pol, res_pol, ok = _newton(grid, m, f_pic, tol, max_newton)
            if ok:
                candidates.append((f_pol, res_pol))
        f_new, res_new, ok = _newton(grid, m, f0.copy(), tol, max_newton)
        if ok:
            candidates.append((f_new, res_new))

    is_ti = isinstance(kernel, TranslationInvariantKernel)
    dist = _orbit_l2 if is_ti else _l2

    def dedupe(cands):
        kept = []
        for vals, res in sorted(cands, key=lambda c: (c[1], _fingerprint(c[0]))):
            if all(dist(grid, vals, kv) >= dedupe_radius for kv, _ in kept):
                kept.append((vals, res))
        return kept

    kept = dedupe(candidates)

    # translate re-seeding: saddles of nearly symmetric kernels sit near
    # translates of the solutions already found
    n = grid.n_per_axis
    shifts = sorted({round(i * n / 16) % n for i in range(16)})
    reseeded = list(kept)
    for vals, _ in kept:
        if float(np.max(vals) - np.min(vals)) < 1e-10:
            continue
        for s1 in shifts:
            if grid.dim == 1:
                starts = [np.roll(vals, s1)] if s1 else []
            else:
                starts = [np.roll(vals.reshape(n, n), (s1, s2), axis=(0, 1)).ravel()
                          for s2 in shifts if (s1, s2) != (0, 0)]
            for f0 in starts:
                f_new, res_new, ok = _newton(grid, m, f0, tol, max_newton)
                if ok:
                    reseeded.append((f_new, res_new))
    kept = dedupe(reseeded)

    records = []
    for vals, res in kept:
        density = DensityField(grid, vals)
        spectral = hessian_spectrum(density, kernel, eps_deg)
        orbit = bool(is_ti and spectral.degenerate
                     and float(np.max(vals) - np.min(vals)) > 1e-6)
        records.append(FixedPointRecord(
            density=density,
            residual=res,
            energy=free_energy(density, kernel),
            spectral=spectral,
            symmetry_orbit=orbit,
        ))
    records.sort(key=lambda r: (r.energy, _fingerprint(r.density.values)))
    return records


def morse_sum(records) -> Optional[int]:
    """Alternating index count; None ("undefined") if anything is degenerate.

    For a complete, all-nondegenerate enumeration the value is 1. Any other
    value flags either a degenerate record or a missed equilibrium.
    """
    if any(r.spectral.degenerate for r in records):
        return None
    return int(sum((-1) ** r.spectral.index for r in records))
