"""Gauge-invariant lattice energy of bond/torsion angle profiles.

The energy of a profile with bond angles kappa_1..kappa_M and torsion
angles tau (one per interior site, none at the first) is

    H = sum_{j<M} (kappa_{j+1} - kappa_j)^2
      + sum_j lambda (kappa_j^2 - m^2)^2
      + sum_t [ d/2 k^2 tau^2 - b k^2 tau - a tau + c/2 tau^2 ]

where in the last sum ``k`` is the bond angle sharing a frame transfer with
that torsion.  The normalization is fixed by giving the difference term
coefficient 1; all couplings are dimensionless model units.

Because H is quadratic in tau, the torsion can be eliminated through its
stationarity condition, leaving a kappa-only effective potential; both the
substitution form (exact by construction) and an alternative closed form
kept purely for reference are provided.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import AngleProfile

__all__ = [
    "EnergyParams",
    "total_energy",
    "energy_gradient",
    "torsion_of_kappa",
    "effective_potential",
    "effective_potential_prime",
    "effective_potential_reference",
    "per_site_couplings",
    "params_to_json",
    "params_from_json",
    "segments_to_json",
    "segments_from_json",
]

_COUPLING_NAMES = ("lam", "m", "a", "b", "c", "d")


@dataclass(frozen=True)
class EnergyParams:
    """Coupling set (lambda, m, a, b, c, d) for one segment or whole chain.

    ``lam`` > 0 with ``c, d`` >= 0 keeps the energy bounded below on any
    compact torsion range.  ``m`` is the vacuum bond angle, ``a`` the
    chirality coupling, ``b`` the momentum coupling and ``c`` the Proca
    mass.
    """

    lam: float
    m: float
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.c < 0 or self.d < 0:
            raise ValueError(f"c and d must be non-negative, got c={self.c}, d={self.d}")

    def as_dict(self) -> dict[str, float]:
        return {"lambda": self.lam, "m": self.m, "a": self.a, "b": self.b,
                "c": self.c, "d": self.d}

    @classmethod
    def from_dict(cls, data: dict) -> "EnergyParams":
        kwargs = dict(data)
        lam = kwargs.pop("lambda", kwargs.pop("lam", None))
        if lam is None:
            raise ValueError("missing coupling 'lambda'")
        return cls(lam=float(lam), **{k: float(kwargs[k]) for k in ("m", "a", "b", "c", "d")})

    def replace(self, **changes) -> "EnergyParams":
        values = {name: getattr(self, name) for name in _COUPLING_NAMES}
        values.update(changes)
        return EnergyParams(**values)


def per_site_couplings(
    segments: Sequence[tuple[tuple[int, int], EnergyParams]], n_sites: int
) -> dict[str, np.ndarray]:
    """Expand ``[( (start, stop), params ), ...]`` into per-site coupling arrays.

    Ranges are half-open in kappa-site indices and must cover 0..n_sites
    without overlap.
    """
    arrays = {name: np.full(n_sites, np.nan) for name in _COUPLING_NAMES}
    for (start, stop), params in segments:
        if not 0 <= start < stop <= n_sites:
            raise ValueError(f"segment ({start}, {stop}) outside 0..{n_sites}")
        for name in _COUPLING_NAMES:
            column = arrays[name]
            if np.any(np.isfinite(column[start:stop])):
                raise ValueError(f"segment ({start}, {stop}) overlaps an earlier one")
            column[start:stop] = getattr(params, name)
    for name, column in arrays.items():
        if np.any(np.isnan(column)):
            raise ValueError("segments do not cover every site")
    return arrays


def _couplings(params, n_sites: int) -> dict[str, np.ndarray]:
    """Broadcast EnergyParams, or validate per-site arrays, to ``n_sites``."""
    if isinstance(params, EnergyParams):
        return {name: np.full(n_sites, getattr(params, name)) for name in _COUPLING_NAMES}
    arrays = {name: np.asarray(params[name], dtype=float) for name in _COUPLING_NAMES}
    for name, column in arrays.items():
        if column.shape != (n_sites,):
            raise ValueError(f"coupling '{name}' must have shape ({n_sites},)")
    return arrays


def _site_potential(kappa, tau, cpl, site_slice):
    """Per-site potential terms with each torsion paired to its kappa."""
    lam, m = cpl["lam"], cpl["m"]
    quartic = lam * (kappa**2 - m**2) ** 2
    if len(tau) == 0:
        return quartic.sum()
    k = kappa[site_slice]
    a, b, c, d = (cpl[n][site_slice] for n in ("a", "b", "c", "d"))
    tau_terms = 0.5 * d * k**2 * tau**2 - b * k**2 * tau - a * tau + 0.5 * c * tau**2
    return quartic.sum() + tau_terms.sum()


def total_energy(profile: AngleProfile, params) -> float:
    """Energy of a profile; ``params`` is an EnergyParams or per-site arrays.

    Torsion terms are summed over the stored torsion sites only; the first
    bond-angle site carries no torsion.
    """
    kappa = profile.kappa
    cpl = _couplings(params, len(kappa))
    h = float(np.sum(np.diff(kappa) ** 2))
    h += float(_site_potential(kappa, profile.tau, cpl, slice(1, None)))
    return h


def energy_gradient(profile: AngleProfile, params) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (dH/dkappa, dH/dtau) of :func:`total_energy`."""
    kappa = profile.kappa
    tau = profile.tau
    cpl = _couplings(params, len(kappa))
    lam, m = cpl["lam"], cpl["m"]

    grad_k = 4.0 * lam * kappa * (kappa**2 - m**2)
    diffs = np.diff(kappa)
    if len(diffs):
        grad_k[:-1] -= 2.0 * diffs
        grad_k[1:] += 2.0 * diffs
    grad_t = np.zeros_like(tau)
    if len(tau):
        k = kappa[1:]
        a, b, c, d = (cpl[n][1:] for n in ("a", "b", "c", "d"))
        grad_k[1:] += d * k * tau**2 - 2.0 * b * k * tau
        grad_t = d * k**2 * tau - b * k**2 - a + c * tau
    return grad_k, grad_t


def _denominator(kappa_sq, c, d):
    denom = c + d * kappa_sq
    if np.any(denom == 0.0):
        raise ZeroDivisionError("c + d*kappa^2 vanishes; torsion elimination undefined")
    return denom


def torsion_of_kappa(kappa, params):
    """Torsion minimizing the energy at fixed kappa: (a + b k^2)/(c + d k^2)."""
    kappa = np.asarray(kappa, dtype=float)
    cpl = _couplings(params, kappa.shape[0] if kappa.ndim else 1)
    u = kappa**2
    result = (cpl["a"] + cpl["b"] * u) / _denominator(u, cpl["c"], cpl["d"])
    return result if kappa.ndim else float(result[0] if result.ndim else result)


def effective_potential(kappa, params):
    """Per-site potential with the torsion eliminated.

    Substituting the stationary torsion gives, exactly,

        V[k] = lambda (k^2 - m^2)^2 - (a + b k^2)^2 / (2 (c + d k^2))

    so by construction V equals the per-site energy evaluated at
    ``torsion_of_kappa``.
    """
    kappa = np.asarray(kappa, dtype=float)
    cpl = _couplings(params, kappa.shape[0] if kappa.ndim else 1)
    u = kappa**2
    numer = cpl["a"] + cpl["b"] * u
    value = cpl["lam"] * (u - cpl["m"] ** 2) ** 2 - numer**2 / (
        2.0 * _denominator(u, cpl["c"], cpl["d"])
    )
    return value if kappa.ndim else float(value[0] if value.ndim else value)


def effective_potential_prime(kappa, params):
    """Derivative of :func:`effective_potential` with respect to kappa^2."""
    kappa = np.asarray(kappa, dtype=float)
    cpl = _couplings(params, kappa.shape[0] if kappa.ndim else 1)
    u = kappa**2
    a, b, c, d = cpl["a"], cpl["b"], cpl["c"], cpl["d"]
    denom = _denominator(u, c, d)
    value = 2.0 * cpl["lam"] * (u - cpl["m"] ** 2) - (a + b * u) * (
        2.0 * b * c - a * d + b * d * u
    ) / (2.0 * denom**2)
    return value if kappa.ndim else float(value[0] if value.ndim else value)


def effective_potential_reference(kappa, params: EnergyParams):
    """Alternative closed-form variant of the effective potential.

    Reference only: its coefficients do not agree with the substitution form
    :func:`effective_potential` (which is exact by construction), and nothing
    in the solver uses it.  Requires b != 0 and d != 0.
    """
    if params.b == 0 or params.d == 0:
        raise ZeroDivisionError("reference form needs b != 0 and d != 0")
    kappa = np.asarray(kappa, dtype=float)
    u = kappa**2
    lam, m, a, b, c, d = (getattr(params, n) for n in _COUPLING_NAMES)
    value = (
        -((b * c - a * d) / d) / _denominator(u, c, d)
        - ((b**2 + 8.0 * lam * m**2) / (2.0 * b)) * u
        + lam * u**2
    )
    return value if kappa.ndim else float(value)


def params_to_json(params: EnergyParams) -> str:
    return json.dumps(params.as_dict(), indent=2, sort_keys=True)


def params_from_json(text: str) -> EnergyParams:
    return EnergyParams.from_dict(json.loads(text))


def segments_to_json(segments: Sequence[tuple[tuple[int, int], EnergyParams]]) -> str:
    """Serialize per-segment parameters: a list of {start, stop, params}."""
    payload = [
        {"start": start, "stop": stop, "params": params.as_dict()}
        for (start, stop), params in segments
    ]
    return json.dumps(payload, indent=2, sort_keys=True)


def segments_from_json(text: str) -> list[tuple[tuple[int, int], EnergyParams]]:
    payload = json.loads(text)
    return [
        ((int(item["start"]), int(item["stop"])), EnergyParams.from_dict(item["params"]))
        for item in payload
    ]
