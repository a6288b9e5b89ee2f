"""Discrete Frenet-frame geometry of C-alpha backbones.

A polygonal chain of N vertices carries N-1 unit tangents, and at every
interior vertex an orthonormal right-handed frame (normal, binormal,
tangent).  The chain shape is encoded, up to a rigid motion, by N-2 bond
angles kappa, N-3 torsion angles tau and N-1 bond lengths; this module
converts between the two representations exactly and implements the frame
rotations (gauge transformations) that change the angles without changing
the shape.

Array conventions used throughout (0-based):

* ``tangent[i] = (r[i+1] - r[i]) / |...|`` for ``i = 0..N-2``.
* ``binormal[v]`` is the normalized ``tangent[v-1] x tangent[v]`` at the
  interior vertex ``v = 1..N-2``; ``normal = binormal x tangent``.
* ``kappa[j]``, ``j = 0..N-3``, is the angle between ``tangent[j]`` and
  ``tangent[j+1]`` (the bond angle at vertex ``j+1``).
* ``tau[t]``, ``t = 0..N-4``, is the signed angle between ``binormal[t+1]``
  and ``binormal[t+2]``; it enters the same frame transfer as
  ``kappa[t+1]``, so kappa and tau arrays pair as ``(kappa[j], tau[j-1])``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Point3",
    "CalphaChain",
    "FrenetFrame",
    "AngleProfile",
    "GeometryError",
    "CoincidentVertices",
    "DegenerateFrame",
    "InconsistentLengths",
    "wrap_angle",
    "compute_frames",
    "compute_angles",
    "transfer_matrix",
    "reconstruct",
    "so2_gauge",
    "z2_gauge",
    "unfold_gauge",
    "detect_flattening_points",
    "total_variation",
    "kabsch_rotation",
    "superpose",
    "rmsd",
    "radius_of_gyration",
    "CANONICAL_BOND_LENGTH",
    "CIS_BOND_LENGTH",
]

# Consecutive C-alpha spacing in Angstrom; cis-proline is the one exception.
CANONICAL_BOND_LENGTH = 3.8
CIS_BOND_LENGTH = 2.8

# |t[i-1] - t[i]| below this means the binormal numerator vanishes.
DEGENERACY_TOL = 1e-9


class GeometryError(ValueError):
    """Base class for geometry failures."""


class CoincidentVertices(GeometryError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"vertices {index} and {index + 1} coincide")


class DegenerateFrame(GeometryError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(
            f"binormal undefined at vertex {index}: consecutive tangents are parallel"
        )


class InconsistentLengths(GeometryError):
    """Angle/length array sizes do not describe a single chain."""


class Point3(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def wrap_angle(theta):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(theta, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass
class CalphaChain:
    """Ordered C-alpha vertices with optional per-residue metadata.

    ``coords`` is an (N, 3) float array in Angstrom.  Metadata arrays, when
    present, have one entry per vertex.
    """

    coords: np.ndarray
    residue_labels: list[str] | None = None
    b_factors: np.ndarray | None = None
    cis_flags: np.ndarray | None = None
    residue_ids: list[tuple[int, str]] | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.size == 0:
            self.coords = self.coords.reshape(0, 3)
        self.coords = np.atleast_2d(self.coords)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise GeometryError(f"coords must be (N, 3), got {self.coords.shape}")
        if not np.all(np.isfinite(self.coords)):
            raise GeometryError("coordinates must be finite")
        if self.b_factors is not None:
            self.b_factors = np.asarray(self.b_factors, dtype=float)
            if self.b_factors.shape != (len(self),):
                raise GeometryError("b_factors must have one entry per vertex")
        if self.cis_flags is not None:
            self.cis_flags = np.asarray(self.cis_flags, dtype=bool)
            if self.cis_flags.shape != (len(self),):
                raise GeometryError("cis_flags must have one entry per vertex")
        for name in ("residue_labels", "residue_ids"):
            value = getattr(self, name)
            if value is not None and len(value) != len(self):
                raise GeometryError(f"{name} must have one entry per vertex")

    def __len__(self) -> int:
        return self.coords.shape[0]

    def bond_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.coords, axis=0), axis=1)

    def is_canonical(self, tol: float = 0.1) -> bool:
        """True when every bond is 3.8 A (2.8 A at cis sites) within ``tol``."""
        lengths = self.bond_lengths()
        expected = np.full(len(lengths), CANONICAL_BOND_LENGTH)
        if self.cis_flags is not None:
            # The short bond is the one arriving at a cis-flagged residue.
            expected[self.cis_flags[1:]] = CIS_BOND_LENGTH
        return bool(np.all(np.abs(lengths - expected) <= tol))


@dataclass(frozen=True)
class FrenetFrame:
    """Orthonormal right-handed triad with ``n = b x t``."""

    n: np.ndarray
    b: np.ndarray
    t: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """Rows are (n, b, t)."""
        return np.vstack([self.n, self.b, self.t])


@dataclass
class AngleProfile:
    """Bond angles, torsion angles and bond lengths of one chain.

    For a chain of N vertices: N-1 bond lengths, N-2 bond angles and N-3
    torsion angles.  ``index_offset`` maps array positions to chain vertex
    indices: ``kappa[j]`` sits at vertex ``j + index_offset``.
    """

    kappa: np.ndarray
    tau: np.ndarray
    bond_lengths: np.ndarray
    index_offset: int = 1

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=float).reshape(-1)
        self.tau = np.asarray(self.tau, dtype=float).reshape(-1)
        self.bond_lengths = np.asarray(self.bond_lengths, dtype=float).reshape(-1)
        n_kappa = len(self.kappa)
        if len(self.bond_lengths) == 0:
            # Empty container: no vertices at all.
            if n_kappa or len(self.tau):
                raise InconsistentLengths("angles present without bond lengths")
            return
        if len(self.bond_lengths) != n_kappa + 1:
            raise InconsistentLengths(
                f"{n_kappa} bond angles require {n_kappa + 1} bond lengths, "
                f"got {len(self.bond_lengths)}"
            )
        if len(self.tau) != max(n_kappa - 1, 0):
            raise InconsistentLengths(
                f"{n_kappa} bond angles require {max(n_kappa - 1, 0)} torsions, "
                f"got {len(self.tau)}"
            )

    @property
    def n_vertices(self) -> int:
        return len(self.bond_lengths) + 1 if len(self.bond_lengths) else 0

    def copy(self) -> "AngleProfile":
        return AngleProfile(
            self.kappa.copy(), self.tau.copy(), self.bond_lengths.copy(), self.index_offset
        )

    def wrapped(self) -> "AngleProfile":
        """Copy with all angles wrapped into [-pi, pi)."""
        return AngleProfile(
            wrap_angle(self.kappa), wrap_angle(self.tau), self.bond_lengths.copy(),
            self.index_offset,
        )


def _tangents(coords: np.ndarray) -> np.ndarray:
    deltas = np.diff(coords, axis=0)
    norms = np.linalg.norm(deltas, axis=1)
    bad = np.nonzero(norms < DEGENERACY_TOL)[0]
    if bad.size:
        raise CoincidentVertices(int(bad[0]))
    return deltas / norms[:, None]


def _frame_arrays(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tangents (N-1, 3) plus binormals/normals (N-2, 3) at interior vertices."""
    if coords.shape[0] < 3:
        raise GeometryError("need at least 3 vertices for frames")
    t = _tangents(coords)
    diff = np.linalg.norm(t[:-1] - t[1:], axis=1)
    cross = np.cross(t[:-1], t[1:])
    cross_norm = np.linalg.norm(cross, axis=1)
    # Parallel tangents (forward or doubled back) leave the binormal undefined.
    bad = np.nonzero((diff < DEGENERACY_TOL) | (cross_norm < DEGENERACY_TOL))[0]
    if bad.size:
        raise DegenerateFrame(int(bad[0]) + 1)
    b = cross / cross_norm[:, None]
    n = np.cross(b, t[1:])
    return t, b, n


def compute_frames(chain: CalphaChain) -> list[FrenetFrame]:
    """Discrete Frenet frames at the interior vertices 1..N-2.

    ``frames[f]`` sits at vertex ``f + 1`` and carries the tangent of the
    outgoing bond.  Raises :class:`DegenerateFrame` where consecutive
    tangents are parallel and :class:`CoincidentVertices` on zero-length
    bonds.
    """
    t, b, n = _frame_arrays(chain.coords)
    return [FrenetFrame(n=n[f], b=b[f], t=t[f + 1]) for f in range(len(b))]


def compute_angles(chain: CalphaChain) -> AngleProfile:
    """Bond and torsion angles of a chain.

    Bond angles come out in [0, pi] (the canonical positive gauge); torsion
    angles in [-pi, pi).  Antiparallel consecutive binormals have no
    geometric handedness; they inherit the sign of the previous torsion
    (default +) and |tau| = pi lands on the canonical boundary -pi.
    """
    coords = chain.coords
    t, b, _ = _frame_arrays(coords)
    lengths = np.linalg.norm(np.diff(coords, axis=0), axis=1)
    kappa = np.arccos(np.clip(np.sum(t[1:] * t[:-1], axis=1), -1.0, 1.0))

    n_tau = len(b) - 1
    tau = np.zeros(n_tau)
    prev_sign = 1.0
    for i in range(n_tau):
        cos_tau = min(1.0, max(-1.0, float(np.dot(b[i + 1], b[i]))))
        sign = float(np.dot(np.cross(b[i], b[i + 1]), t[i + 1]))
        if abs(sign) < DEGENERACY_TOL:
            sign = prev_sign
        tau[i] = math.copysign(math.acos(cos_tau), sign)
        if tau[i] != 0.0:
            prev_sign = tau[i]
    return AngleProfile(kappa=kappa, tau=wrap_angle(tau), bond_lengths=lengths)


def transfer_matrix(kappa: float, tau: float) -> np.ndarray:
    """Rotation transporting the frame (n, b, t), stacked as rows, one step.

    The result is a proper rotation for any finite inputs and reduces to the
    identity at (0, 0).
    """
    ck, sk = math.cos(kappa), math.sin(kappa)
    ct, st = math.cos(tau), math.sin(tau)
    return np.array(
        [
            [ck * ct, ck * st, -sk],
            [-st, ct, 0.0],
            [sk * ct, sk * st, ck],
        ]
    )


# Fixed initial frame (rows n, b, t): tangent along +z, second tangent opens
# into the y-z plane.
_INITIAL_FRAME = np.array(
    [
        [0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
    ]
)


def reconstruct(profile: AngleProfile) -> CalphaChain:
    """Rebuild a chain from its angle profile.

    The chain starts at the origin with the first tangent along +z and the
    second tangent in the y-z plane; successive frames are transported by
    :func:`transfer_matrix`.  The first transfer uses a virtual zero
    torsion, so together with the stored angles the chain is fixed exactly
    (any other choice is a rigid motion).
    """
    kappa = profile.kappa
    tau = profile.tau
    lengths = profile.bond_lengths
    n_vertices = profile.n_vertices
    if n_vertices == 0:
        return CalphaChain(np.zeros((0, 3)))

    coords = np.zeros((n_vertices, 3))
    frame = _INITIAL_FRAME.copy()
    coords[1] = coords[0] + lengths[0] * frame[2]
    for j in range(len(kappa)):
        theta = tau[j - 1] if j >= 1 else 0.0
        frame = transfer_matrix(kappa[j], theta) @ frame
        coords[j + 2] = coords[j + 1] + lengths[j + 1] * frame[2]
    return CalphaChain(coords)


def _require_pi_multiples(deltas: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    turns = deltas / np.pi
    n = np.rint(turns)
    if np.any(np.abs(turns - n) > tol):
        raise GeometryError(
            "frame rotations must be multiples of pi: a real-valued bond angle "
            "profile only represents the two-fold (Z2) subgroup of frame rotations"
        )
    return n.astype(int)


def so2_gauge(profile: AngleProfile, deltas: Sequence[float]) -> AngleProfile:
    """Rotate the frame at every angle site by ``deltas[i]`` about its tangent.

    Each rotation must be a multiple of pi (see :func:`_require_pi_multiples`);
    those are exactly the rotations that keep the extended-range bond angle
    real.  ``kappa[i]`` picks up the sign ``cos(deltas[i])`` and the torsion
    shared between sites i and i+1 shifts by ``deltas[i] - deltas[i+1]``.
    The reconstructed geometry is unchanged.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != profile.kappa.shape:
        raise GeometryError(
            f"need one rotation per frame site: expected {profile.kappa.shape[0]}, "
            f"got {deltas.shape[0]}"
        )
    n = _require_pi_multiples(deltas)
    out = profile.copy()
    out.kappa = wrap_angle(np.where(n % 2 == 0, out.kappa, -out.kappa))
    if len(out.tau):
        out.tau = wrap_angle(out.tau + deltas[:-1] - deltas[1:])
    return out


def z2_gauge(profile: AngleProfile, site: int) -> AngleProfile:
    """Flip the sign of every bond angle from ``site`` on.

    The torsion entering the same frame transfer as ``kappa[site]`` (stored
    at ``tau[site - 1]``) shifts by -pi; for ``site == 0`` there is no stored
    torsion to shift and the whole chain is rigidly rotated instead.  An
    involution modulo 2-pi wrapping; reconstruction is unaffected.
    """
    if not 0 <= site < len(profile.kappa):
        raise IndexError(f"site {site} outside 0..{len(profile.kappa) - 1}")
    out = profile.copy()
    out.kappa[site:] = wrap_angle(-out.kappa[site:])
    if site >= 1:
        out.tau[site - 1] = wrap_angle(out.tau[site - 1] - np.pi)
    return out


def total_variation(profile: AngleProfile) -> float:
    """Sum of |successive kappa differences| plus wrapped |tau differences|."""
    tv = float(np.sum(np.abs(np.diff(profile.kappa))))
    if len(profile.tau) > 1:
        tv += float(np.sum(np.abs(wrap_angle(np.diff(profile.tau)))))
    return tv


def detect_flattening_points(profile: AngleProfile) -> list[int]:
    """Torsion array indices where tau changes sign or vanishes exactly.

    A sign change between ``tau[i]`` and ``tau[i+1]`` reports index
    ``i + 1``; an exactly zero torsion reports its own index.
    """
    tau = profile.tau
    points = set(np.nonzero(tau == 0.0)[0].tolist())
    if len(tau) > 1:
        changes = np.nonzero(tau[:-1] * tau[1:] < 0.0)[0]
        points.update((changes + 1).tolist())
    return sorted(int(i) for i in points)


def _merge_runs(indices: Sequence[int], gap: int) -> list[list[int]]:
    runs: list[list[int]] = []
    for i in sorted(indices):
        if runs and i - runs[-1][-1] <= gap:
            runs[-1].append(i)
        else:
            runs.append([i])
    return runs


def unfold_gauge(
    profile: AngleProfile,
    tau_threshold: float = 2.5,
    merge_gap: int = 2,
    max_passes: int = 8,
) -> tuple[AngleProfile, list[int]]:
    """Expose bond-angle kinks hidden by the all-positive gauge.

    Marks torsion sites that are irregular (|tau| above ``tau_threshold`` or
    adjacent to a sign change), merges them into runs, and applies a Z2
    transformation at each run centroid whenever that lowers the profile's
    total variation.  Deterministic; the identity (no applied sites) is a
    valid outcome.  Reconstructed geometry is unchanged.
    """
    current = profile.copy()
    applied: list[int] = []
    for _ in range(max_passes):
        tau = current.tau
        marked: set[int] = set(np.nonzero(np.abs(tau) > tau_threshold)[0].tolist())
        if len(tau) > 1:
            changes = np.nonzero(tau[:-1] * tau[1:] < 0.0)[0]
            marked.update(changes.tolist())
            marked.update((changes + 1).tolist())
        if not marked:
            break
        improved = False
        for run in _merge_runs(marked, merge_gap):
            centroid = int(round(sum(run) / len(run)))
            site = min(centroid + 1, len(current.kappa) - 1)
            candidate = z2_gauge(current, site)
            if total_variation(candidate) < total_variation(current) - 1e-12:
                current = candidate
                applied.append(site)
                improved = True
        if not improved:
            break
    return current, applied


def _as_coords(chain) -> np.ndarray:
    coords = chain.coords if isinstance(chain, CalphaChain) else np.asarray(chain, dtype=float)
    return np.atleast_2d(coords)


def kabsch_rotation(mobile: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares rotation (no reflection) aligning centered ``mobile`` onto
    centered ``target``; apply as ``mobile @ R``."""
    h = mobile.T @ target
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    u[:, -1] *= d
    return u @ vt


def superpose(mobile, target) -> np.ndarray:
    """Coordinates of ``mobile`` rigidly superposed onto ``target``."""
    p = _as_coords(mobile)
    q = _as_coords(target)
    if p.shape != q.shape:
        raise GeometryError(f"shape mismatch: {p.shape} vs {q.shape}")
    pc = p - p.mean(axis=0)
    qc = q - q.mean(axis=0)
    return pc @ kabsch_rotation(pc, qc) + q.mean(axis=0)


def rmsd(a, b) -> float:
    """Root-mean-square deviation after optimal rigid superposition."""
    p = _as_coords(a)
    q = _as_coords(b)
    if p.shape != q.shape:
        raise GeometryError(f"shape mismatch: {p.shape} vs {q.shape}")
    moved = superpose(p, q)
    return float(np.sqrt(np.mean(np.sum((moved - q) ** 2, axis=1))))


def radius_of_gyration(chain) -> float:
    """sqrt of the mean squared distance from the centroid.

    Equals the double-sum form sqrt((1/2N^2) sum_ij (r_i - r_j)^2) exactly.
    """
    coords = _as_coords(chain)
    centered = coords - coords.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(centered**2, axis=1))))
