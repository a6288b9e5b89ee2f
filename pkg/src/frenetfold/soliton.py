"""Kink profiles of the lattice energy and parameter training.

The torsion-eliminated equation of motion for the bond angles is, with
virtual zeros one site beyond each end,

    kappa_{i+1} - 2 kappa_i + kappa_{i-1} = V'[kappa_i] kappa_i

where V' is the derivative of the effective potential with respect to
kappa^2.  :func:`relax` finds fixed points by damped iteration, which is
exact gradient descent on the boundary-padded effective energy; the test
suite cross-checks the residual against the analytic gradient of the full
two-angle energy, which pins down the V' convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .energy import (
    EnergyParams,
    _couplings,
    effective_potential,
    effective_potential_prime,
    per_site_couplings,
    torsion_of_kappa,
)
from .geometry import AngleProfile, reconstruct, rmsd, superpose

__all__ = [
    "SolitonAnsatz",
    "RelaxationReport",
    "MultiSolitonFitReport",
    "Diverged",
    "NoSignChange",
    "FitDiverged",
    "relax",
    "dnls_residual",
    "kink_ansatz",
    "continuum_kink",
    "fit_ansatz",
    "fit_multisoliton",
    "profile_from_kappa",
]

DIVERGENCE_BOUND = 1e3


class Diverged(RuntimeError):
    """Relaxation left the trust region or the energy increased."""


class NoSignChange(ValueError):
    """Fit window does not bracket a kink center."""


class FitDiverged(RuntimeError):
    """Parameter or ansatz fit failed to produce a finite optimum."""


@dataclass(frozen=True)
class SolitonAnsatz:
    """Five-parameter kink: slopes c1, c2 > 0, asymptotes m1 and -m2, center s."""

    c1: float
    c2: float
    m1: float
    m2: float
    s: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError(f"slopes must be positive, got c1={self.c1}, c2={self.c2}")


@dataclass
class RelaxationReport:
    iterations: int
    final_residual: float
    energy_series: np.ndarray
    converged: bool


def _padded_energy(kappa: np.ndarray, cpl) -> float:
    """Effective energy including the virtual-zero boundary bonds."""
    padded = np.concatenate(([0.0], kappa, [0.0]))
    return float(np.sum(np.diff(padded) ** 2) + np.sum(effective_potential(kappa, cpl)))


def dnls_residual(kappa, params) -> np.ndarray:
    """Per-site violation of the fixed-point equation, virtual zero ends.

    ``r_i = kappa_{i+1} - 2 kappa_i + kappa_{i-1} - V'[kappa_i] kappa_i``,
    which equals -1/2 the gradient of the padded effective energy.
    """
    kappa = np.asarray(kappa, dtype=float)
    padded = np.concatenate(([0.0], kappa, [0.0]))
    laplacian = padded[2:] - 2.0 * padded[1:-1] + padded[:-2]
    return laplacian - effective_potential_prime(kappa, params) * kappa


def relax(
    initial_kappa,
    params,
    epsilon: float = 0.01,
    max_iters: int = 1_000_000,
    tol: float = 1e-8,
) -> tuple[np.ndarray, RelaxationReport]:
    """Iterate ``kappa += epsilon * residual`` to a fixed point.

    Stops when the max-norm residual drops below ``tol``.  Raises
    :class:`Diverged` if any bond angle exceeds 1e3 in magnitude or the
    padded effective energy increases beyond rounding, both signatures of a
    too-large step.  ``params`` may be an :class:`EnergyParams` or per-site
    coupling arrays.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    kappa = np.array(initial_kappa, dtype=float)
    cpl = _couplings(params, len(kappa))
    energies = [_padded_energy(kappa, cpl)]

    residual = dnls_residual(kappa, cpl)
    res_norm = float(np.max(np.abs(residual)))
    iterations = 0
    while res_norm >= tol and iterations < max_iters:
        kappa += epsilon * residual
        iterations += 1
        if np.max(np.abs(kappa)) > DIVERGENCE_BOUND:
            raise Diverged(f"bond angle exceeded {DIVERGENCE_BOUND} after {iterations} iterations")
        energy = _padded_energy(kappa, cpl)
        if energy > energies[-1] + 1e-9 * (1.0 + abs(energies[-1])):
            raise Diverged(f"energy increased at iteration {iterations}; reduce epsilon")
        energies.append(energy)
        residual = dnls_residual(kappa, cpl)
        res_norm = float(np.max(np.abs(residual)))
    report = RelaxationReport(
        iterations=iterations,
        final_residual=res_norm,
        energy_series=np.asarray(energies),
        converged=res_norm < tol,
    )
    return kappa, report


def _kink_eval(x, c1, c2, m1, m2, s):
    """Kink value with the common exponential scale factored out (no overflow)."""
    x = np.asarray(x, dtype=float) - s
    p = c1 * x
    q = -c2 * x
    top = np.maximum(p, q)
    ep = np.exp(p - top)
    eq = np.exp(q - top)
    return (m1 * ep - m2 * eq) / (ep + eq)


def kink_ansatz(i, ansatz: SolitonAnsatz):
    """Asymmetric kink profile evaluated at (fractional) site ``i``.

    Tends to ``m1`` for i >> s and ``-m2`` for i << s; for c1 = c2 = c and
    m1 = m2 = m it reduces exactly to ``m tanh(c (i - s))``.
    """
    value = _kink_eval(i, ansatz.c1, ansatz.c2, ansatz.m1, ansatz.m2, ansatz.s)
    return value if np.ndim(i) else float(value)


def continuum_kink(s_val, m: float, lam: float, s0: float = 0.0):
    """Continuum topological kink m * tanh(m sqrt(lambda) (s - s0))."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    value = m * np.tanh(m * np.sqrt(lam) * (np.asarray(s_val, dtype=float) - s0))
    return value if np.ndim(s_val) else float(value)


def fit_ansatz(target_kappa, window: tuple[int, int]) -> SolitonAnsatz:
    """Least-squares kink fit over ``window`` (half-open site range).

    The kink profile depends on the two slopes only through their sum
    (divide numerator and denominator by exp(c1 (i - s)) to see it), so the
    identifiable parameters are (c1 + c2, m1, m2, s); the returned ansatz is
    the symmetric representative c1 = c2.  The window must contain a sign
    change of the target, which seeds the center estimate; raises
    :class:`NoSignChange` otherwise and :class:`FitDiverged` when the
    optimizer fails.
    """
    target_kappa = np.asarray(target_kappa, dtype=float)
    start, stop = window
    sites = np.arange(start, stop, dtype=float)
    values = target_kappa[start:stop]
    if len(values) < 5:
        raise ValueError("window too short for the kink fit")

    crossings = np.nonzero(values[:-1] * values[1:] < 0.0)[0]
    if len(crossings) == 0:
        raise NoSignChange(f"no sign change of kappa in window {window}")

    c = int(crossings[0])
    # Linear interpolation of the zero crossing seeds the center.
    frac = values[c] / (values[c] - values[c + 1])
    s0 = float(sites[c]) + float(frac)
    m1_0 = float(np.mean(values[min(c + 2, len(values) - 1):]))
    m2_0 = -float(np.mean(values[: max(c, 1)]))
    scale = abs(m1_0) + abs(m2_0)
    slope = abs(values[c + 1] - values[c])
    c0 = min(max(4.0 * slope / scale, 1e-2), 5.0) if scale > 0 else 1.0

    def residual(theta):
        total_c, m1, m2, s = theta
        return _kink_eval(sites, 0.5 * total_c, 0.5 * total_c, m1, m2, s) - values

    result = least_squares(
        residual,
        x0=[c0, m1_0, m2_0, s0],
        bounds=(
            [1e-6, -np.pi, -np.pi, start - 5.0],
            [np.inf, np.pi, np.pi, stop + 5.0],
        ),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    if not result.success or not np.all(np.isfinite(result.x)):
        raise FitDiverged(f"ansatz fit failed: {result.message}")
    total_c, m1, m2, s = (float(v) for v in result.x)
    return SolitonAnsatz(c1=0.5 * total_c, c2=0.5 * total_c, m1=m1, m2=m2, s=s)


def profile_from_kappa(kappa, params, bond_lengths) -> AngleProfile:
    """Profile with torsions eliminated through their stationarity condition."""
    kappa = np.asarray(kappa, dtype=float)
    tau = np.asarray(torsion_of_kappa(kappa, params))[1:] if len(kappa) > 1 else np.zeros(0)
    return AngleProfile(
        kappa=kappa.copy(), tau=tau, bond_lengths=np.asarray(bond_lengths, dtype=float)
    )


@dataclass
class MultiSolitonFitReport:
    rmsd: float
    rounds: int
    evaluations: int
    rmsd_history: list[float] = field(default_factory=list)


# Fractional trial steps for the coordinate descent, largest first.
_TRIAL_STEPS = (0.25, 0.05, 0.01)
_MAX_WALK = 12
_COUPLING_ORDER = ("lam", "m", "a", "b", "c", "d")
# Lower bounds per coupling for the least-squares polish.
_COUPLING_LOWER = (1e-6, -np.inf, -np.inf, -np.inf, 0.0, 0.0)


class _FixedPointScorer:
    """RMSD of the relax fixed point's chain against the target chain.

    Relaxation warm-starts from the previous fixed point (falling back to
    the target angles); the fixed point is unique within its basin, so the
    score is start-independent up to the residual tolerance.
    """

    def __init__(self, target, ranges, epsilon, tol, max_iters):
        self.target = target
        self.target_chain = reconstruct(target)
        self.ranges = ranges
        self.epsilon = epsilon
        self.tol = tol
        self.max_iters = max_iters
        self.warm = target.kappa.copy()
        self.evaluations = 0

    def fixed_point(self, param_list):
        self.evaluations += 1
        cpl = per_site_couplings(list(zip(self.ranges, param_list)), len(self.target.kappa))
        for start in (self.warm, self.target.kappa):
            try:
                kappa_star, report = relax(
                    start, cpl, epsilon=self.epsilon, max_iters=self.max_iters, tol=self.tol
                )
            except Diverged:
                continue
            if report.converged:
                self.warm = kappa_star.copy()
                return kappa_star, cpl
        return None, None

    def score(self, param_list):
        kappa_star, cpl = self.fixed_point(param_list)
        if kappa_star is None:
            return np.inf, None
        fitted = profile_from_kappa(kappa_star, cpl, self.target.bond_lengths)
        return rmsd(reconstruct(fitted), self.target_chain), fitted

    def residuals(self, flat_values):
        """Per-coordinate superposition mismatch; 2-norm equals the RMSD."""
        n_per_seg = len(_COUPLING_ORDER)
        try:
            param_list = [
                EnergyParams(**dict(zip(_COUPLING_ORDER, flat_values[i : i + n_per_seg])))
                for i in range(0, len(flat_values), n_per_seg)
            ]
        except ValueError:
            return np.full(self.target_chain.coords.size, 1.0)
        kappa_star, cpl = self.fixed_point(param_list)
        if kappa_star is None:
            return np.full(self.target_chain.coords.size, 1.0)
        fitted = profile_from_kappa(kappa_star, cpl, self.target.bond_lengths)
        aligned = superpose(reconstruct(fitted).coords, self.target_chain.coords)
        n = len(self.target_chain.coords)
        return ((aligned - self.target_chain.coords) / math.sqrt(n)).ravel()


def _coordinate_descent(scorer, current, best_rmsd, best_profile, max_rounds):
    """Multiplicative per-coupling pattern search; returns its stall point."""
    history = [best_rmsd]
    rounds = 0
    for _ in range(max_rounds):
        rounds += 1
        round_improved = False
        for seg_idx in range(len(current)):
            for name in _COUPLING_ORDER:
                for step in _TRIAL_STEPS:
                    # Greedy walk at this step size until no factor helps.
                    for _ in range(_MAX_WALK):
                        base = getattr(current[seg_idx], name)
                        if base != 0.0:
                            candidates = (base * (1.0 + step), base / (1.0 + step))
                        else:
                            candidates = (step, -step)
                        best_local = None
                        for value in candidates:
                            try:
                                trial = current[seg_idx].replace(**{name: value})
                            except ValueError:
                                continue  # coupling bound violated
                            trial_list = list(current)
                            trial_list[seg_idx] = trial
                            trial_rmsd, trial_profile = scorer.score(trial_list)
                            if trial_rmsd < best_rmsd - 1e-10 and (
                                best_local is None or trial_rmsd < best_local[0]
                            ):
                                best_local = (trial_rmsd, trial_profile, trial_list)
                        if best_local is None:
                            break
                        best_rmsd, best_profile, current = best_local
                        round_improved = True
        history.append(best_rmsd)
        if not round_improved:
            break
    return current, best_rmsd, best_profile, rounds, history


def fit_multisoliton(
    target: AngleProfile,
    segments: Sequence[tuple[tuple[int, int], EnergyParams]],
    epsilon: float = 0.01,
    relax_tol: float = 1e-10,
    relax_iters: int = 200_000,
    max_rounds: int = 4,
    polish_max_evals: int = 800,
    rmsd_goal: float = 1e-8,
) -> tuple[list[EnergyParams], AngleProfile, MultiSolitonFitReport]:
    """Train per-segment couplings so the relax fixed point tracks ``target``.

    ``target`` should be gauge-unfolded (bond angles crossing zero through
    the soliton centers) and ``segments`` must partition its kappa sites.
    Each trial relaxes the bond angles, maps the fixed point to a chain
    through the eliminated torsion, and scores RMSD against the target
    chain.  Two stages: coordinate descent with multiplicative trial steps,
    then a trust-region least-squares polish on the superposed coordinate
    residuals (the descent alone stalls in valleys that couple several
    couplings).  Raises :class:`FitDiverged` when the starting point has no
    finite score.
    """
    ranges = [r for r, _ in segments]
    current = [params for _, params in segments]
    scorer = _FixedPointScorer(target, ranges, epsilon, relax_tol, relax_iters)

    best_rmsd, best_profile = scorer.score(current)
    if not np.isfinite(best_rmsd):
        raise FitDiverged("initial parameters do not relax to a fixed point")

    rounds = 0
    history = [best_rmsd]
    if best_rmsd > rmsd_goal:
        current, best_rmsd, best_profile, rounds, history = _coordinate_descent(
            scorer, current, best_rmsd, best_profile, max_rounds
        )

    if best_rmsd > rmsd_goal and polish_max_evals > 0:
        x0 = np.array([getattr(p, n) for p in current for n in _COUPLING_ORDER])
        lower = np.tile(_COUPLING_LOWER, len(current))
        # diff_step well above the fixed-point tolerance keeps the numerical
        # Jacobian out of the relaxation noise floor.
        result = least_squares(
            scorer.residuals,
            x0,
            bounds=(lower, np.full_like(x0, np.inf)),
            x_scale=np.maximum(np.abs(x0), 0.1),
            diff_step=1e-5,
            xtol=1e-12,
            ftol=1e-12,
            gtol=None,
            max_nfev=polish_max_evals,
        )
        polished = [
            EnergyParams(**dict(zip(_COUPLING_ORDER, result.x[6 * s : 6 * s + 6])))
            for s in range(len(current))
        ]
        polished_rmsd, polished_profile = scorer.score(polished)
        if polished_rmsd < best_rmsd:
            current, best_rmsd, best_profile = polished, polished_rmsd, polished_profile
        history.append(best_rmsd)

    report = MultiSolitonFitReport(
        rmsd=best_rmsd, rounds=rounds, evaluations=scorer.evaluations, rmsd_history=history
    )
    return current, best_profile, report
