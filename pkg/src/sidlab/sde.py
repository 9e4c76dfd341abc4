"""Euler-Maruyama simulation of the self-interacting diffusion on the torus.

The process solves dX = dW - 0.5 * grad(V mu_t)(X) dt on [0, 2*pi)^d with
mu_t the normalized occupation measure of the trajectory. On the flat
torus the Brownian frame reduces to the coordinate directions and the
Stratonovich correction vanishes, so the position update is plain
Euler-Maruyama with wrap-around.

The occupation measure is carried as truncated Fourier modes
m_k = integral over [0, t] of exp(-i k . X_s) ds, accumulated with the
left-endpoint rule (the same first-order accuracy as the position update).
Only frequencies lexicographically above zero are stepped; m_0 equals the
elapsed time by construction and negative frequencies are conjugates.

With the kernel coefficients v_k, the drift at x is

    b = -(1/(2t)) * sum_k (i k) v_k m_k exp(i k . x)

which is real by symmetry. Because |m_k| <= t, |b_a| is bounded a priori
by sum_k |k_a v_k| / 2 over the full frequency box; the stepper enforces
that bound as a corruption check.

A fixed warm-up interval [0, t_warmup] is simulated with zero drift: the
1/t weighting is meaningless at t = 0 and the limit behavior does not
depend on any fixed initial stretch.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .geometry import (
    Grid,
    ModeVector,
    WeakMetricParams,
    gibbs_values,
    lambda_modes,
    make_grid,
    mode_indices,
    weak_distance,
)
from .kernels import TranslationInvariantKernel, apply_operator, eval_potential
from .seeds import mix64

TWO_PI = 2.0 * np.pi
_NOISE_BLOCK = 1 << 16


# ---------------------------------------------------------------------------
# Configuration and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SdeConfig:
    """Full description of one simulation; (config, seed) determines every bit."""

    kernel: TranslationInvariantKernel
    dim: int
    k_max: int
    dt: float
    t_end: float
    seed: int
    x0: tuple = (0.0,)
    t_warmup: float = 1.0
    record_times: tuple = ()

    def __post_init__(self):
        if not isinstance(self.kernel, TranslationInvariantKernel):
            raise TypeError("the simulator requires a translation-invariant kernel")
        if self.kernel.dim != self.dim:
            raise ValueError("kernel dimension does not match dim")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_warmup <= 0.0:
            raise ValueError("t_warmup must be positive")
        if self.t_end <= self.t_warmup:
            raise ValueError("t_end must exceed t_warmup")
        if self.k_max < max(1, self.kernel.support_k_max):
            raise ValueError("k_max must cover the kernel support (and be >= 1)")
        x0 = tuple(float(c) for c in self.x0)
        if len(x0) != self.dim:
            raise ValueError("x0 length does not match dim")
        object.__setattr__(self, "x0", x0)
        rts = tuple(float(t) for t in self.record_times)
        if any(b <= a for a, b in zip(rts, rts[1:])):
            raise ValueError("record_times must be strictly increasing")
        if rts and (rts[0] < self.t_warmup or rts[-1] > self.t_end + 1e-9):
            raise ValueError("record_times must lie in [t_warmup, t_end]")
        object.__setattr__(self, "record_times", rts)


def _box_center(dim: int, k_max: int) -> int:
    return ((2 * k_max + 1) ** dim - 1) // 2


def _half_indices(dim: int, k_max: int) -> np.ndarray:
    ks = mode_indices(dim, k_max)
    return np.ascontiguousarray(ks[_box_center(dim, k_max) + 1:], dtype=np.int64)


def _box_index(dim: int, k_max: int, k: tuple) -> int:
    width = 2 * k_max + 1
    flat = 0
    for c in k:
        flat = flat * width + (c + k_max)
    return flat


def _half_coeffs(kernel: TranslationInvariantKernel, dim: int, k_max: int) -> np.ndarray:
    vh = np.zeros(len(_half_indices(dim, k_max)))
    center = _box_center(dim, k_max)
    for k, v in kernel.items():
        if any(c != 0 for c in k):
            idx = _box_index(dim, k_max, k)
            if idx > center:
                vh[idx - center - 1] = v
    return vh


@dataclass(frozen=True)
class OccupationState:
    """Simulator state: position, elapsed time, unnormalized occupation modes.

    modes holds the full frequency box in lexicographic order;
    modes[center] == t and m_{-k} is the conjugate of m_k by construction.
    """

    dim: int
    k_max: int
    x: np.ndarray
    t: float
    modes: np.ndarray

    def normalized(self) -> ModeVector:
        return ModeVector(self.dim, self.k_max, self.modes / self.t)

    def mode1_abs(self) -> float:
        """|m_1|/t concentration statistic (max over axis frequencies in 2-d)."""
        norm = self.modes / self.t
        if self.dim == 1:
            return float(abs(norm[_box_index(1, self.k_max, (1,))]))
        return float(max(abs(norm[_box_index(2, self.k_max, (1, 0))]),
                         abs(norm[_box_index(2, self.k_max, (0, 1))])))


def _assemble_state(config: SdeConfig, x: np.ndarray, t: float, mh: np.ndarray) -> OccupationState:
    box = np.concatenate([np.conj(mh[::-1]), [complex(t, 0.0)], mh])
    return OccupationState(dim=config.dim, k_max=config.k_max,
                           x=x.copy(), t=t, modes=box)


def _extract_half(state: OccupationState) -> np.ndarray:
    center = _box_center(state.dim, state.k_max)
    return np.ascontiguousarray(state.modes[center + 1:], dtype=np.complex128)


# ---------------------------------------------------------------------------
# Stepping core
# ---------------------------------------------------------------------------

@njit(cache=True)
def _advance_loop(x, mh, hk, vh, t, dt, noise, bounds, with_drift):  # pragma: no cover
    nsteps = noise.shape[0]
    d = x.shape[0]
    kh = hk.shape[0]
    sdt = np.sqrt(dt)
    for step in range(nsteps):
        bx = 0.0
        by = 0.0
        if with_drift and kh > 0:
            inv_t = 1.0 / t
            for j in range(kh):
                ph = 0.0
                for a in range(d):
                    ph += hk[j, a] * x[a]
                c = np.cos(ph)
                s = np.sin(ph)
                # Im(m_k * exp(i k.x)) pairing of +-k halves the mode box
                im_z = mh[j].real * s + mh[j].imag * c
                coef = vh[j] * im_z * inv_t
                bx += hk[j, 0] * coef
                if d == 2:
                    by += hk[j, 1] * coef
                mh[j] += complex(c * dt, -s * dt)
            if abs(bx) > bounds[0] or (d == 2 and abs(by) > bounds[1]):
                raise ValueError("drift exceeded its a priori bound; occupation modes corrupted")
        else:
            for j in range(kh):
                ph = 0.0
                for a in range(d):
                    ph += hk[j, a] * x[a]
                mh[j] += complex(np.cos(ph) * dt, -np.sin(ph) * dt)
        x[0] = (x[0] + bx * dt + sdt * noise[step, 0]) % TWO_PI
        if d == 2:
            x[1] = (x[1] + by * dt + sdt * noise[step, 1]) % TWO_PI
        t = t + dt
    return t


def _drift_bounds(hk: np.ndarray, vh: np.ndarray, dim: int) -> np.ndarray:
    guard = 1e-9
    bounds = np.zeros(2)
    for a in range(dim):
        bounds[a] = float(np.sum(np.abs(hk[:, a] * vh))) * (1.0 + guard) + 1e-12
    return bounds


class _Engine:
    """Bundles the jit arrays for one config; mutated in place while stepping."""

    def __init__(self, config: SdeConfig):
        self.config = config
        self.hk = _half_indices(config.dim, config.k_max)
        self.vh = _half_coeffs(config.kernel, config.dim, config.k_max)
        self.bounds = _drift_bounds(self.hk, self.vh, config.dim)
        self.x = np.array(config.x0, dtype=float)
        self.t = 0.0
        self.mh = np.zeros(len(self.hk), dtype=np.complex128)

    def load(self, state: OccupationState):
        self.x = state.x.copy()
        self.t = state.t
        self.mh = _extract_half(state)
        return self

    def advance(self, nsteps: int, rng: np.random.Generator, with_drift: bool):
        remaining = nsteps
        while remaining > 0:
            chunk = min(_NOISE_BLOCK, remaining)
            noise = rng.standard_normal((chunk, self.config.dim))
            self.t = _advance_loop(self.x, self.mh, self.hk, self.vh, self.t,
                                   self.config.dt, noise, self.bounds, with_drift)
            remaining -= chunk

    def state(self) -> OccupationState:
        return _assemble_state(self.config, self.x, self.t, self.mh)


def _steps_until(t: float, target: float, dt: float) -> int:
    return max(0, math.ceil((target - t) / dt - 1e-9))


def drift(state: OccupationState, config: SdeConfig) -> np.ndarray:
    """Drift -0.5 * grad(V mu_t) at the current position, from the modes.

    Same pairing as the stepping core: for each frequency k above zero,
    (1/t) k_a v_k Im(m_k exp(i k . x)).
    """
    hk = _half_indices(config.dim, config.k_max)
    vh = _half_coeffs(config.kernel, config.dim, config.k_max)
    mh = _extract_half(state)
    ph = hk.astype(float) @ state.x
    im_z = mh.real * np.sin(ph) + mh.imag * np.cos(ph)
    out = np.zeros(config.dim)
    for a in range(config.dim):
        out[a] = np.sum(hk[:, a] * vh * im_z) / state.t
    return out


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def init_state(config: SdeConfig, rng: Optional[np.random.Generator] = None) -> OccupationState:
    """Zero-drift Brownian warm-up on [0, t_warmup]; modes accumulate from 0.

    With rng omitted a fresh generator is seeded from config.seed, so two
    calls with equal configs are bit-identical.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    eng = _Engine(config)
    eng.advance(int(round(config.t_warmup / config.dt)), rng, with_drift=False)
    return eng.state()


def step(state: OccupationState, config: SdeConfig, rng: np.random.Generator) -> OccupationState:
    """One Euler-Maruyama step with the occupation drift (post warm-up)."""
    if state.t < config.t_warmup - 1e-12:
        raise ValueError("step requires t >= t_warmup; use init_state first")
    eng = _Engine(config).load(state)
    eng.advance(1, rng, with_drift=True)
    return eng.state()


@dataclass(frozen=True)
class TrajectorySnapshot:
    record_time: float
    t: float
    x: np.ndarray
    modes: ModeVector           # normalized by t
    dist_to_lambda: float
    mode1_abs: float


@dataclass(frozen=True)
class TrajectoryRecord:
    config: SdeConfig
    snapshots: tuple
    terminal: OccupationState

    def to_csv_rows(self):
        """Header plus one row per snapshot: t, position, normalized modes,
        distance to the uniform measure, first-mode magnitude."""
        ks = mode_indices(self.config.dim, self.config.k_max)
        names = ["t"] + [f"x{a}" if self.config.dim == 2 else "x" for a in range(self.config.dim)]
        for k in map(tuple, ks):
            tag = "_".join(str(c) for c in k)
            names += [f"re_m_{tag}", f"im_m_{tag}"]
        names += ["dist_to_lambda", "mode1_abs"]
        rows = [names]
        for snap in self.snapshots:
            row = [snap.t] + [float(c) for c in snap.x]
            for v in snap.modes.values:
                row += [float(v.real), float(v.imag)]
            row += [snap.dist_to_lambda, snap.mode1_abs]
            rows.append(row)
        return rows


def run(config: SdeConfig, weak_params: Optional[WeakMetricParams] = None) -> TrajectoryRecord:
    """Warm up, then step to t_end, snapshotting at the configured times.

    Snapshots are taken at the first step boundary at or past each record
    time. Deterministic given the config.
    """
    if weak_params is None:
        weak_params = WeakMetricParams(config.dim, config.k_max)
    lam = lambda_modes(config.dim, config.k_max)
    rng = np.random.default_rng(config.seed)
    eng = _Engine(config)
    eng.advance(int(round(config.t_warmup / config.dt)), rng, with_drift=False)
    snapshots = []
    for rt in config.record_times:
        eng.advance(_steps_until(eng.t, rt, config.dt), rng, with_drift=True)
        state = eng.state()
        norm = state.normalized()
        snapshots.append(TrajectorySnapshot(
            record_time=rt,
            t=state.t,
            x=state.x,
            modes=norm,
            dist_to_lambda=weak_distance(norm, lam, weak_params),
            mode1_abs=state.mode1_abs(),
        ))
    eng.advance(_steps_until(eng.t, config.t_end, config.dt), rng, with_drift=True)
    return TrajectoryRecord(config=config, snapshots=tuple(snapshots), terminal=eng.state())


# ---------------------------------------------------------------------------
# Shadowing diagnostic
# ---------------------------------------------------------------------------

def shadow_error(config: SdeConfig, t_anchor: float, horizon: float,
                 grid: Optional[Grid] = None, ds: float = 0.01,
                 flow_substeps: int = 10) -> float:
    """Gap between the simulated potential path and its deterministic shadow.

    Works in the exponential clock tau = log(t): compares the simulated
    s -> V(mu at time exp(t_anchor + s)) against the conjugate flow of the
    potential field started from V(mu at exp(t_anchor)), over
    s in [0, horizon]. Returns the sup-norm gap on the grid, maximized over
    the horizon.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if t_anchor < config.t_warmup:
        raise ValueError("t_anchor must be >= t_warmup")
    if t_anchor + horizon > math.log(config.t_end) + 1e-12:
        raise ValueError("horizon extends past log(t_end)")
    if grid is None:
        grid = make_grid(config.dim, 64 if config.dim == 1 else 16)
    n_sub = max(1, int(flow_substeps))
    n_samples = max(1, math.ceil(horizon / ds - 1e-9))
    taus = t_anchor + ds * np.arange(n_samples + 1)

    rng = np.random.default_rng(config.seed)
    eng = _Engine(config)
    eng.advance(int(round(config.t_warmup / config.dt)), rng, with_drift=False)
    sim_fields = []
    for tau in taus:
        eng.advance(_steps_until(eng.t, math.exp(tau), config.dt), rng, with_drift=True)
        sim_fields.append(eval_potential(config.kernel, eng.state().normalized(), grid).values)

    h = sim_fields[0].copy()
    decay = float(np.exp(-ds / n_sub))
    gap = 0.0
    for j in range(1, n_samples + 1):
        for _ in range(n_sub):
            xi = gibbs_values(grid, h)
            h = decay * h + (1.0 - decay) * apply_operator(config.kernel, grid, xi)
        gap = max(gap, float(np.max(np.abs(h - sim_fields[j]))))
    return gap


# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloThresholds:
    dist: float = 0.1        # weak-distance radius for point classes
    bump_mode: float = 0.2   # |m_1|/t above this is a localized (orbit) state


@dataclass(frozen=True)
class MonteCarloReport:
    n_runs: int
    labels: tuple            # per-run classification, run order
    fractions: dict          # label -> fraction, sums to 1
    mode1_values: tuple      # concentration statistic per run
    dist_lambda_values: tuple  # weak distance to the uniform measure per run
    histogram_counts: tuple  # 20 bins of mode1 over [0, 1]
    seeds: tuple

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "classes": [{"label": k, "fraction": self.fractions[k]}
                        for k in sorted(self.fractions)],
            "seeds": list(self.seeds),
        }


def _classify(state: OccupationState, fixed_points: Sequence,
              thresholds: MonteCarloThresholds,
              weak_params: WeakMetricParams) -> tuple:
    mode1 = state.mode1_abs()
    norm = state.normalized()
    dist_lambda = weak_distance(norm, lambda_modes(state.dim, state.k_max), weak_params)
    # the minimizer orbit of a translation-invariant kernel is a circle:
    # localized states are recognized by mode magnitude, not position
    if mode1 > thresholds.bump_mode:
        return "bump-orbit", mode1, dist_lambda
    best_label, best_dist = "unresolved", np.inf
    for label, ref in fixed_points:
        d = weak_distance(norm, ref, weak_params)
        if d < best_dist:
            best_label, best_dist = label, d
    if best_dist < thresholds.dist:
        return best_label, mode1, dist_lambda
    return "unresolved", mode1, dist_lambda


def _mc_run_one(args):
    config, fixed_points, thresholds, weak_params = args
    record = run(replace(config, record_times=()))
    label, mode1, dist_lambda = _classify(record.terminal, fixed_points,
                                          thresholds, weak_params)
    return config.seed, label, mode1, dist_lambda


def monte_carlo(config: SdeConfig, n_runs: int,
                fixed_points: Optional[Sequence] = None,
                thresholds: Optional[MonteCarloThresholds] = None,
                workers: int = 1) -> MonteCarloReport:
    """Independent runs with derived seeds, classified at the terminal time.

    Run i uses seed mix64(config.seed, i). Results are aggregated in run
    order, so the report is identical for any worker count.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if thresholds is None:
        thresholds = MonteCarloThresholds()
    if fixed_points is None:
        fixed_points = [("lambda", lambda_modes(config.dim, config.k_max))]
    weak_params = WeakMetricParams(config.dim, config.k_max)
    tasks = [
        (replace(config, seed=mix64(config.seed, i)), fixed_points, thresholds, weak_params)
        for i in range(n_runs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mc_run_one, tasks, chunksize=8))
    else:
        results = [_mc_run_one(t) for t in tasks]
    seeds = tuple(r[0] for r in results)
    labels = tuple(r[1] for r in results)
    mode1 = tuple(r[2] for r in results)
    dists = tuple(r[3] for r in results)
    fractions = {}
    for lab in labels:
        fractions[lab] = fractions.get(lab, 0) + 1
    fractions = {k: v / n_runs for k, v in fractions.items()}
    counts, _ = np.histogram(np.asarray(mode1), bins=20, range=(0.0, 1.0))
    return MonteCarloReport(n_runs=n_runs, labels=labels, fractions=fractions,
                            mode1_values=mode1, dist_lambda_values=dists,
                            histogram_counts=tuple(int(c) for c in counts),
                            seeds=seeds)
