"""Glauber Monte Carlo over angle profiles with hard self-avoidance.

Moves perturb one site's bond/torsion angle pair; a move that brings any
non-bonded vertex pair within the steric diameter is rejected outright, and
surviving moves are accepted with the heat-bath probability
``x / (1 + x)``, ``x = exp(-dE/kT)``.

A single-site angle change moves every downstream vertex rigidly, so the
Markov-chain state caches the transported frames and applies each move as
one rotation of the downstream block; only the cross pairs between the
fixed and moved halves need a steric re-check.  Full-state refreshes happen
periodically to stop rounding drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .energy import _couplings
from .geometry import AngleProfile, CalphaChain, radius_of_gyration, rmsd, wrap_angle

__all__ = [
    "MCConfig",
    "MCState",
    "Trajectory",
    "TrajectorySample",
    "ScalingFit",
    "ThetaScanResult",
    "InsufficientData",
    "glauber_probability",
    "glauber_accept",
    "propose_move",
    "self_avoidance_ok",
    "mc_step",
    "run_schedule",
    "geometric_schedule",
    "fit_scaling",
    "theta_scan",
    "debye_waller",
    "STERIC_DIAMETER",
]

# Minimum allowed distance between vertices i, k with |i - k| >= 2.
STERIC_DIAMETER = 3.8

_TWO_PI = 2.0 * math.pi
_EXP_CLAMP = 700.0


class InsufficientData(ValueError):
    """Not enough chain lengths for a scaling fit."""


def glauber_probability(delta_e: float, kT: float) -> float:
    """Heat-bath acceptance probability x/(1+x) with x = exp(-dE/kT).

    Exactly 1/2 at dE = 0; numerically saturates to 0/1 once |dE/kT|
    exceeds 700.
    """
    if kT <= 0:
        raise ValueError("kT must be positive")
    arg = delta_e / kT
    if arg > _EXP_CLAMP:
        return 0.0
    if arg < -_EXP_CLAMP:
        return 1.0
    return 1.0 / (1.0 + math.exp(arg))


def glauber_accept(delta_e: float, kT: float, u: float) -> bool:
    """Accept iff the uniform draw ``u`` falls below the heat-bath probability."""
    return u < glauber_probability(delta_e, kT)


@dataclass
class MCConfig:
    """Schedule and proposal widths of one Monte Carlo run.

    ``kT_schedule`` is a list of (step count, kT) stages executed in order.
    ``kappa_only`` restricts moves to the bond angle, slaving the paired
    torsion to its energy-stationary value.
    """

    kT_schedule: list[tuple[int, float]]
    move_sigma_kappa: float = 0.1
    move_sigma_tau: float = 0.2
    seed: int = 0
    measure_every: int = 100
    refresh_every: int = 4096
    kappa_only: bool = False

    def __post_init__(self):
        for steps, kT in self.kT_schedule:
            if steps < 0 or kT <= 0:
                raise ValueError(f"bad schedule stage ({steps}, {kT}): need steps >= 0, kT > 0")
        if self.move_sigma_kappa < 0 or self.move_sigma_tau < 0:
            raise ValueError("proposal widths must be non-negative")
        if self.measure_every < 1 or self.refresh_every < 1:
            raise ValueError("measure_every and refresh_every must be >= 1")

    @property
    def total_steps(self) -> int:
        return sum(steps for steps, _ in self.kT_schedule)


def geometric_schedule(kT_start: float, kT_end: float, stages: int, steps_per_stage: int):
    """Geometric kT ramp as a list of (steps, kT) stages."""
    if stages < 1:
        raise ValueError("need at least one stage")
    kts = np.geomspace(kT_start, kT_end, stages)
    return [(steps_per_stage, float(kt)) for kt in kts]


def propose_move(profile: AngleProfile, config: MCConfig, rng) -> tuple[AngleProfile, int]:
    """One symmetric single-site proposal (pure; the input is untouched).

    A uniformly chosen site's bond angle gets a Gaussian increment of width
    ``move_sigma_kappa``; the torsion paired with it (absent at site 0) gets
    one of width ``move_sigma_tau``.  Angles re-wrap to [-pi, pi).
    """
    out = profile.copy()
    site = int(rng.integers(0, len(out.kappa)))
    dk, dt = rng.standard_normal(2)
    out.kappa[site] = wrap_angle(out.kappa[site] + config.move_sigma_kappa * dk)
    if site >= 1:
        out.tau[site - 1] = wrap_angle(out.tau[site - 1] + config.move_sigma_tau * dt)
    return out, site


def self_avoidance_ok(chain, min_distance: float = STERIC_DIAMETER) -> bool:
    """True iff every vertex pair with |i - k| >= 2 is farther than ``min_distance``.

    Spatial-hash neighbor search: expected O(N) for chains at physical
    density.
    """
    coords = chain.coords if isinstance(chain, CalphaChain) else np.asarray(chain, dtype=float)
    n = len(coords)
    if n <= 2:
        return True
    keys = np.floor(coords / min_distance).astype(np.int64)
    grid: dict[tuple[int, int, int], list[int]] = {}
    for i, key in enumerate(map(tuple, keys)):
        grid.setdefault(key, []).append(i)
    limit = min_distance * min_distance
    for i in range(n):
        kx, ky, kz = keys[i]
        ri = coords[i]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for k in grid.get((kx + dx, ky + dy, kz + dz), ()):
                        if k - i >= 2:
                            d = coords[k] - ri
                            if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= limit:
                                return False
    return True


def _wrap_scalar(x: float) -> float:
    return (x + math.pi) % _TWO_PI - math.pi


def _orthonormalize(w: np.ndarray) -> np.ndarray:
    """Nearest right-handed orthonormal rows (Gram-Schmidt + cross product).

    The downstream-block rotation is assembled from cached frames; snapping
    it back to an exact rotation keeps their rounding error additive instead
    of compounding multiplicatively.
    """
    r0 = w[0] / math.sqrt(w[0, 0] ** 2 + w[0, 1] ** 2 + w[0, 2] ** 2)
    r1 = w[1] - (w[1] @ r0) * r0
    r1 /= math.sqrt(r1[0] ** 2 + r1[1] ** 2 + r1[2] ** 2)
    return np.vstack((r0, r1, np.cross(r0, r1)))


def _transfer(kappa: float, tau: float) -> np.ndarray:
    ck, sk = math.cos(kappa), math.sin(kappa)
    ct, st = math.cos(tau), math.sin(tau)
    out = np.empty((3, 3))
    out[0, 0] = ck * ct
    out[0, 1] = ck * st
    out[0, 2] = -sk
    out[1, 0] = -st
    out[1, 1] = ct
    out[1, 2] = 0.0
    out[2, 0] = sk * ct
    out[2, 1] = sk * st
    out[2, 2] = ck
    return out


_INITIAL_FRAME = np.array(
    [
        [0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
    ]
)


class MCState:
    """Markov-chain state: angles plus cached chain geometry and energy.

    ``frames[s]`` is the transported frame of segment ``s`` (rows n, b, t);
    ``coords`` has one row per vertex.  The caches are exact functions of
    the angles, re-derived by :meth:`refresh`.
    """

    def __init__(self, profile: AngleProfile, params, min_distance: float = STERIC_DIAMETER):
        self.kappa = np.array(profile.kappa, dtype=float)
        self.tau = np.array(profile.tau, dtype=float)
        self.bond_lengths = np.array(profile.bond_lengths, dtype=float)
        self.min_distance = min_distance
        cpl = _couplings(params, len(self.kappa))
        self._lam = cpl["lam"]
        self._m2 = cpl["m"] ** 2
        self._a, self._b, self._c, self._d = cpl["a"], cpl["b"], cpl["c"], cpl["d"]
        self.accepted = 0
        self.attempted = 0
        self._since_refresh = 0
        self.refresh()
        if not self_avoidance_ok(self.coords, min_distance):
            raise ValueError("initial profile is not self-avoiding")

    @property
    def n_sites(self) -> int:
        return len(self.kappa)

    def profile(self) -> AngleProfile:
        return AngleProfile(self.kappa.copy(), self.tau.copy(), self.bond_lengths.copy())

    def chain(self) -> CalphaChain:
        return CalphaChain(self.coords.copy())

    def refresh(self) -> None:
        """Rebuild frames, coordinates and energy exactly from the angles."""
        m = len(self.kappa)
        frames = np.empty((m + 1, 3, 3))
        frames[0] = _INITIAL_FRAME
        for j in range(m):
            theta = self.tau[j - 1] if j >= 1 else 0.0
            frames[j + 1] = _transfer(self.kappa[j], theta) @ frames[j]
        coords = np.empty((m + 2, 3))
        coords[0] = 0.0
        np.cumsum(self.bond_lengths[:, None] * frames[:, 2, :], axis=0, out=coords[1:])
        self.frames = frames
        self.coords = coords
        self.energy = self._total_energy()
        self._since_refresh = 0

    def maybe_refresh(self, every: int) -> None:
        if self._since_refresh >= every:
            self.refresh()

    def _total_energy(self) -> float:
        k = self.kappa
        e = float(np.sum(np.diff(k) ** 2))
        e += float(np.sum(self._lam * (k**2 - self._m2) ** 2))
        if len(self.tau):
            kk = k[1:] ** 2
            t = self.tau
            e += float(
                np.sum(
                    0.5 * self._d[1:] * kk * t**2
                    - self._b[1:] * kk * t
                    - self._a[1:] * t
                    + 0.5 * self._c[1:] * t**2
                )
            )
        return e

    def _site_energy(self, j: int, kj: float, tj: float | None) -> float:
        k2 = kj * kj
        e = self._lam[j] * (k2 - self._m2[j]) ** 2
        if j >= 1:
            e += (kj - self.kappa[j - 1]) ** 2
            if tj is not None:
                e += (
                    0.5 * self._d[j] * k2 * tj * tj
                    - self._b[j] * k2 * tj
                    - self._a[j] * tj
                    + 0.5 * self._c[j] * tj * tj
                )
        if j + 1 < len(self.kappa):
            e += (self.kappa[j + 1] - kj) ** 2
        return e

    def _cross_clash(self, j: int, down_new: np.ndarray) -> bool:
        """Any steric violation between the fixed head and the moved tail."""
        up = self.coords[: j + 2]
        d2 = (
            np.sum(up**2, axis=1)[:, None]
            + np.sum(down_new**2, axis=1)[None, :]
            - 2.0 * (up @ down_new.T)
        )
        d2[-1, 0] = np.inf  # bonded pair (j+1, j+2) is exempt
        return bool(np.any(d2 <= self.min_distance * self.min_distance))

    def try_move(self, site: int, dk: float, dt: float | None, kT: float, u: float) -> bool:
        """Attempt one single-site move; commit caches only on acceptance.

        ``dt=None`` slaves the paired torsion to its energy-stationary value
        at the new bond angle (the kappa-only mode).
        """
        self.attempted += 1
        j = site
        kj_old = float(self.kappa[j])
        kj_new = _wrap_scalar(kj_old + dk)
        if j >= 1:
            tj_old = float(self.tau[j - 1])
            if dt is None:
                k2 = kj_new * kj_new
                tj_new = _wrap_scalar(
                    (self._a[j] + self._b[j] * k2) / (self._c[j] + self._d[j] * k2)
                )
            else:
                tj_new = _wrap_scalar(tj_old + dt)
            theta_new = tj_new
        else:
            tj_old = tj_new = None
            theta_new = 0.0

        delta_e = self._site_energy(j, kj_new, tj_new) - self._site_energy(j, kj_old, tj_old)

        frame_new = _transfer(kj_new, theta_new) @ self.frames[j]
        w = _orthonormalize(self.frames[j + 1].T @ frame_new)
        pivot = self.coords[j + 1]
        down_new = (self.coords[j + 2 :] - pivot) @ w + pivot

        if down_new.shape[0] and self._cross_clash(j, down_new):
            return False
        if not glauber_accept(delta_e, kT, u):
            return False

        self.kappa[j] = kj_new
        if j >= 1:
            self.tau[j - 1] = tj_new
        self.frames[j + 1 :] = self.frames[j + 1 :] @ w
        self.coords[j + 2 :] = down_new
        self.energy += delta_e
        self.accepted += 1
        self._since_refresh += 1
        return True


def mc_step(state: MCState, params, kT: float, config: MCConfig, rng) -> MCState:
    """One Markov-chain step: propose, steric-screen, heat-bath accept.

    ``params`` must match the couplings the state was built with (the state
    caches them); the argument is kept for call-site clarity.
    """
    site = int(rng.integers(0, state.n_sites))
    dk, dt = rng.standard_normal(2)
    u = float(rng.random())
    dt_arg = None if config.kappa_only else config.move_sigma_tau * dt
    state.try_move(site, config.move_sigma_kappa * dk, dt_arg, kT, u)
    state.maybe_refresh(config.refresh_every)
    return state


class TrajectorySample(NamedTuple):
    step: int
    kT: float
    energy: float
    rg: float
    rmsd_to_reference: float
    acceptance_rate: float


@dataclass
class Trajectory:
    """Observable time series of one MC run; steps strictly increase."""

    samples: list[TrajectorySample] = field(default_factory=list)
    seed: int | None = None

    def append(self, sample: TrajectorySample) -> None:
        if self.samples and sample.step <= self.samples[-1].step:
            raise ValueError("trajectory steps must strictly increase")
        self.samples.append(sample)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        lines = [f"# {line}" for line in header_lines]
        lines.append("step,kT,energy,Rg_A,rmsd_A,acceptance")
        for s in self.samples:
            lines.append(
                f"{s.step},{s.kT:.12g},{s.energy:.12g},{s.rg:.12g},"
                f"{s.rmsd_to_reference:.12g},{s.acceptance_rate:.12g}"
            )
        return "\n".join(lines) + "\n"


def run_schedule(
    initial: AngleProfile,
    params,
    config: MCConfig,
    reference: CalphaChain | None = None,
) -> Trajectory:
    """Execute the kT schedule, sampling observables every ``measure_every``.

    Deterministic for a fixed seed and config.  The initial profile must be
    self-avoiding.  RMSD to ``reference`` is recorded when given (NaN
    otherwise); the acceptance rate covers the window since the previous
    sample.  A final sample is always taken at the last step.
    """
    state = MCState(initial, params)
    rng = np.random.default_rng(config.seed)
    ref_coords = reference.coords if reference is not None else None

    trajectory = Trajectory(seed=config.seed)
    step = 0
    window_accepted = 0
    window_attempted = 0

    def record(kT_now: float):
        nonlocal window_accepted, window_attempted
        rate = window_accepted / window_attempted if window_attempted else math.nan
        dist = rmsd(state.coords, ref_coords) if ref_coords is not None else math.nan
        trajectory.append(
            TrajectorySample(
                step=step,
                kT=kT_now,
                energy=state.energy,
                rg=radius_of_gyration(state.coords),
                rmsd_to_reference=dist,
                acceptance_rate=rate,
            )
        )
        window_accepted = window_attempted = 0

    record(config.kT_schedule[0][1] if config.kT_schedule else math.nan)

    chunk = 4096
    sigma_k = config.move_sigma_kappa
    sigma_t = config.move_sigma_tau
    for n_steps, kT in config.kT_schedule:
        done = 0
        while done < n_steps:
            m = min(chunk, n_steps - done)
            sites = rng.integers(0, state.n_sites, size=m).tolist()
            norms = rng.standard_normal((m, 2)).tolist()
            us = rng.random(m).tolist()
            for i in range(m):
                before = state.accepted
                dt_arg = None if config.kappa_only else sigma_t * norms[i][1]
                state.try_move(sites[i], sigma_k * norms[i][0], dt_arg, kT, us[i])
                window_attempted += 1
                window_accepted += state.accepted - before
                state.maybe_refresh(config.refresh_every)
                step += 1
                if step % config.measure_every == 0:
                    record(kT)
            done += m
    if step > 0 and trajectory.samples[-1].step != step:
        record(config.kT_schedule[-1][1])
    return trajectory


@dataclass(frozen=True)
class ScalingFit:
    """Power-law fit Rg = R0 * N^nu across chain lengths."""

    nu: float
    R0: float


def fit_scaling(lengths: Sequence[int], mean_rgs: Sequence[float]) -> ScalingFit:
    """Least-squares fit of log Rg against log N; needs >= 4 lengths."""
    if len(lengths) < 4 or len(lengths) != len(mean_rgs):
        raise InsufficientData("scaling fits need at least 4 chain lengths")
    slope, intercept = np.polyfit(np.log(np.asarray(lengths, float)), np.log(mean_rgs), 1)
    return ScalingFit(nu=float(slope), R0=float(math.exp(intercept)))


@dataclass
class ThetaScanResult:
    """Rg(N, kT) table with coil/collapse scaling fits and a theta estimate."""

    rg_table: list[tuple[float, int, float]]  # (kT, n_vertices, mean Rg)
    fit_high: ScalingFit
    fit_low: ScalingFit
    theta_kT: float


def _straight_profile(n_vertices: int, bond_length: float) -> AngleProfile:
    m = n_vertices - 2
    return AngleProfile(
        kappa=np.zeros(m),
        tau=np.zeros(max(m - 1, 0)),
        bond_lengths=np.full(n_vertices - 1, bond_length),
    )


def theta_scan(
    params,
    config: MCConfig,
    chain_lengths: Sequence[int],
    bond_length: float = STERIC_DIAMETER,
    burn_in_fraction: float = 0.2,
) -> ThetaScanResult:
    """Sweep the kT stages for several chain lengths and fit Rg scaling.

    Each chain anneals through ``config.kT_schedule`` in order, starting
    straight, with a per-length derived seed; the first ``burn_in_fraction``
    of every stage is discarded before Rg is averaged.  Scaling fits use the
    hottest and coldest stages, and the theta-point estimate is the kT of
    steepest mean-Rg change for the longest chain.
    """
    lengths = sorted(int(n) for n in chain_lengths)
    if len(lengths) < 4:
        raise InsufficientData("theta scan needs at least 4 chain lengths")
    if not config.kT_schedule:
        raise ValueError("config.kT_schedule is empty")

    # Half-open step ranges of each stage, for slicing trajectory samples.
    bounds = []
    start = 0
    for n_steps, kT in config.kT_schedule:
        bounds.append((start, start + n_steps, kT))
        start += n_steps

    rg_means: list[list[float]] = []  # [stage][length index]
    for n_vertices in lengths:
        cfg = replace(config, seed=config.seed + n_vertices)
        trajectory = run_schedule(_straight_profile(n_vertices, bond_length), params, cfg)
        steps = trajectory.column("step")
        rgs = trajectory.column("rg")
        per_stage = []
        for lo, hi, _ in bounds:
            cut = lo + burn_in_fraction * (hi - lo)
            mask = (steps > cut) & (steps <= hi)
            per_stage.append(float(np.mean(rgs[mask])) if np.any(mask) else math.nan)
        rg_means.append(per_stage)

    rg_table = [
        (kT, n, rg_means[i][stage])
        for stage, (_, _, kT) in enumerate(bounds)
        for i, n in enumerate(lengths)
    ]

    kts = [kT for _, _, kT in bounds]
    hot_stage = int(np.argmax(kts))
    cold_stage = int(np.argmin(kts))
    fit_high = fit_scaling(lengths, [rg_means[i][hot_stage] for i in range(len(lengths))])
    fit_low = fit_scaling(lengths, [rg_means[i][cold_stage] for i in range(len(lengths))])

    # Steepest Rg change of the longest chain across adjacent kT values.
    longest_rg = {kts[s]: rg_means[-1][s] for s in range(len(bounds))}
    ordered = sorted(longest_rg)
    theta = kts[0]
    if len(ordered) > 1:
        slopes = [
            (longest_rg[ordered[i + 1]] - longest_rg[ordered[i]])
            / (math.log(ordered[i + 1] / ordered[i]))
            for i in range(len(ordered) - 1)
        ]
        steepest = int(np.argmax(slopes))
        theta = math.sqrt(ordered[steepest] * ordered[steepest + 1])
    return ThetaScanResult(rg_table=rg_table, fit_high=fit_high, fit_low=fit_low, theta_kT=theta)


def debye_waller(b_factor: float) -> float:
    """One-standard-deviation positional fluctuation sqrt(B / 8 pi^2), in A."""
    if b_factor < 0:
        raise ValueError(f"B-factor must be non-negative, got {b_factor}")
    return math.sqrt(b_factor / (8.0 * math.pi**2))
