"""PDB-format C-alpha ingestion and profile serialization.

Only fixed-column ATOM records are consumed; HETATM, waters and non-CA
atoms are ignored, and the first MODEL is used unless another is selected.
Column layout (1-based): name 13-16, altLoc 17, resName 18-20, chainID 22,
resSeq 23-26, iCode 27, x/y/z 31-54 (8.3 each), occupancy 55-60, B 61-66.

Missing residues (resSeq gaps) split the trace into fragments, each
reported with its residue range; angle computations only make sense within
one fragment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AngleProfile, CalphaChain

__all__ = [
    "PdbRecord",
    "PdbError",
    "NoSuchChain",
    "NoAtoms",
    "MalformedRecord",
    "FragmentInfo",
    "ParsedStructure",
    "parse_calpha",
    "write_chain",
    "profile_to_csv",
    "profile_from_csv",
    "profile_to_json",
    "profile_from_json",
    "CIS_DETECTION_THRESHOLD",
]

# Trans C-alpha spacing is ~3.8 A, cis-proline ~2.9 A; the gap is wide.
CIS_DETECTION_THRESHOLD = 3.2


class PdbError(ValueError):
    """Base class for PDB ingestion failures."""


class NoSuchChain(PdbError):
    def __init__(self, chain_id: str, available: list[str]):
        self.chain_id = chain_id
        super().__init__(f"chain {chain_id!r} not found; chains present: {sorted(available)}")


class NoAtoms(PdbError):
    pass


class MalformedRecord(PdbError):
    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"malformed ATOM record at line {line_number}: {reason}")


@dataclass(frozen=True)
class PdbRecord:
    atom_name: str
    alt_loc: str
    res_name: str
    chain_id: str
    res_seq: int
    insertion_code: str
    x: float
    y: float
    z: float
    occupancy: float
    b_factor: float


@dataclass(frozen=True)
class FragmentInfo:
    first_res: int
    last_res: int
    n_residues: int


@dataclass
class ParsedStructure:
    """C-alpha trace fragments of one chain plus a gap report."""

    chain_id: str
    fragments: list[CalphaChain] = field(default_factory=list)
    report: list[FragmentInfo] = field(default_factory=list)

    def single(self) -> CalphaChain:
        """The unique fragment; raises if the chain is broken or empty."""
        if len(self.fragments) != 1:
            raise PdbError(f"expected one fragment, found {len(self.fragments)}: {self.report}")
        return self.fragments[0]

    def largest(self) -> CalphaChain:
        if not self.fragments:
            raise NoAtoms("no fragments parsed")
        return max(self.fragments, key=len)


def _parse_float(text: str, lineno: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRecord(lineno, f"unreadable {what}: {text.strip()!r}") from None
    if not math.isfinite(value):
        raise MalformedRecord(lineno, f"non-finite {what}")
    return value


def _parse_atom_line(line: str, lineno: int) -> PdbRecord:
    if len(line) < 54:
        raise MalformedRecord(lineno, "record shorter than the coordinate columns")
    try:
        res_seq = int(line[22:26])
    except ValueError:
        raise MalformedRecord(lineno, f"unreadable residue number: {line[22:26]!r}") from None
    occ_text = line[54:60].strip() if len(line) >= 60 else ""
    b_text = line[60:66].strip() if len(line) >= 66 else ""
    return PdbRecord(
        atom_name=line[12:16].strip(),
        alt_loc=line[16],
        res_name=line[17:20].strip(),
        chain_id=line[21],
        res_seq=res_seq,
        insertion_code=line[26] if len(line) > 26 else " ",
        x=_parse_float(line[30:38], lineno, "x coordinate"),
        y=_parse_float(line[38:46], lineno, "y coordinate"),
        z=_parse_float(line[46:54], lineno, "z coordinate"),
        occupancy=_parse_float(occ_text, lineno, "occupancy") if occ_text else 1.0,
        b_factor=_parse_float(b_text, lineno, "B-factor") if b_text else 0.0,
    )


def parse_calpha(
    pdb_text: str,
    chain_id: str | None = None,
    model_index: int = 0,
    cis_threshold: float = CIS_DETECTION_THRESHOLD,
) -> ParsedStructure:
    """Extract the C-alpha trace of one chain from PDB-format text.

    ``chain_id=None`` selects the first chain carrying CA atoms in the
    requested model (0-based ``model_index``; files without MODEL records
    count as model 0).  Alternate locations resolve to the highest
    occupancy, ties broken alphabetically.  Residues are ordered by
    (resSeq, insertion code) and resSeq gaps split fragments.  Raises
    :class:`NoAtoms`, :class:`NoSuchChain` or :class:`MalformedRecord`.
    """
    records: list[PdbRecord] = []
    model = 0
    seen_model_record = False
    for lineno, line in enumerate(pdb_text.splitlines(), start=1):
        tag = line[:6].strip().upper()
        if tag == "MODEL":
            model = model + 1 if seen_model_record else 0
            seen_model_record = True
        elif tag == "ENDMDL":
            continue
        elif tag == "ATOM":
            if model != model_index:
                continue
            record = _parse_atom_line(line, lineno)
            if record.atom_name == "CA":
                records.append(record)
    if not records:
        raise NoAtoms(f"no CA atoms in model {model_index}")

    if chain_id is None:
        chain_id = records[0].chain_id
    chain_records = [r for r in records if r.chain_id == chain_id]
    if not chain_records:
        raise NoSuchChain(chain_id, sorted({r.chain_id for r in records}))

    by_residue: dict[tuple[int, str], list[PdbRecord]] = {}
    for record in chain_records:
        by_residue.setdefault((record.res_seq, record.insertion_code), []).append(record)
    resolved = [
        min(group, key=lambda r: (-r.occupancy, r.alt_loc))
        for group in by_residue.values()
    ]
    resolved.sort(key=lambda r: (r.res_seq, r.insertion_code))

    structure = ParsedStructure(chain_id=chain_id)
    fragment: list[PdbRecord] = []

    def flush():
        if not fragment:
            return
        coords = np.array([[r.x, r.y, r.z] for r in fragment])
        cis = np.zeros(len(fragment), dtype=bool)
        for i in range(1, len(fragment)):
            if fragment[i].res_name == "PRO":
                gap = np.linalg.norm(coords[i] - coords[i - 1])
                cis[i] = gap < cis_threshold
        structure.fragments.append(
            CalphaChain(
                coords=coords,
                residue_labels=[r.res_name for r in fragment],
                b_factors=np.array([r.b_factor for r in fragment]),
                cis_flags=cis,
                residue_ids=[(r.res_seq, r.insertion_code) for r in fragment],
            )
        )
        structure.report.append(
            FragmentInfo(
                first_res=fragment[0].res_seq,
                last_res=fragment[-1].res_seq,
                n_residues=len(fragment),
            )
        )
        fragment.clear()

    for record in resolved:
        if fragment and record.res_seq - fragment[-1].res_seq > 1:
            flush()
        fragment.append(record)
    flush()
    return structure


def write_chain(chain: CalphaChain, chain_id: str = "A") -> str:
    """Minimal fixed-column ATOM records for a C-alpha trace.

    Coordinates carry 3 decimals and B-factors 2, so a parse round-trip
    reproduces them to that precision.
    """
    lines = []
    labels = chain.residue_labels
    ids = chain.residue_ids
    bfac = chain.b_factors
    for i, (x, y, z) in enumerate(chain.coords):
        res_name = labels[i] if labels else "ALA"
        res_seq, icode = ids[i] if ids else (i + 1, " ")
        b = float(bfac[i]) if bfac is not None else 0.0
        lines.append(
            f"ATOM  {i + 1:5d}  CA  {res_name:>3.3s} {chain_id:.1s}{res_seq:4d}{icode:.1s}"
            f"   {x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{b:6.2f}          {'C':>2s}"
        )
    lines.append("TER")
    lines.append("END")
    return "\n".join(lines) + "\n"


_CSV_HEADER = "index,kappa_rad,tau_rad,bond_length_A"


def profile_to_csv(profile: AngleProfile, header_lines=()) -> str:
    """One row per bond; angles appear on the row of their vertex.

    Torsions print on the row of the bond-angle site they pair with.
    Values carry 12 significant digits; '#' lines hold metadata.
    """
    lines = [f"# {line}" for line in header_lines]
    lines.append(f"# index_offset={profile.index_offset}")
    lines.append(_CSV_HEADER)
    n_kappa = len(profile.kappa)
    n_tau = len(profile.tau)
    for row in range(len(profile.bond_lengths)):
        kappa = f"{profile.kappa[row]:.12g}" if row < n_kappa else ""
        tau = f"{profile.tau[row - 1]:.12g}" if 1 <= row <= n_tau else ""
        lines.append(
            f"{row + profile.index_offset},{kappa},{tau},{profile.bond_lengths[row]:.12g}"
        )
    return "\n".join(lines) + "\n"


def profile_from_csv(text: str) -> AngleProfile:
    index_offset = 1
    kappa: list[float] = []
    tau: list[float] = []
    lengths: list[float] = []
    header_seen = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "index_offset=" in line:
                index_offset = int(line.split("index_offset=")[1].strip())
            continue
        if not header_seen:
            if line != _CSV_HEADER:
                raise ValueError(f"unexpected CSV header: {line!r}")
            header_seen = True
            continue
        cells = line.split(",")
        if len(cells) != 4:
            raise ValueError(f"expected 4 CSV columns, got {len(cells)}: {line!r}")
        if cells[1]:
            kappa.append(float(cells[1]))
        if cells[2]:
            tau.append(float(cells[2]))
        lengths.append(float(cells[3]))
    if not header_seen:
        raise ValueError("missing CSV header")
    return AngleProfile(
        kappa=np.array(kappa), tau=np.array(tau), bond_lengths=np.array(lengths),
        index_offset=index_offset,
    )


def profile_to_json(profile: AngleProfile, meta: dict | None = None) -> str:
    """Lossless JSON container (floats round-trip bit-exactly)."""
    payload = {
        "format": "angle-profile",
        "index_offset": profile.index_offset,
        "kappa_rad": profile.kappa.tolist(),
        "tau_rad": profile.tau.tolist(),
        "bond_lengths_A": profile.bond_lengths.tolist(),
    }
    if meta:
        payload["meta"] = meta
    return json.dumps(payload, indent=2)


def profile_from_json(text: str) -> AngleProfile:
    payload = json.loads(text)
    if payload.get("format") != "angle-profile":
        raise ValueError("not an angle-profile JSON container")
    return AngleProfile(
        kappa=np.array(payload["kappa_rad"], dtype=float),
        tau=np.array(payload["tau_rad"], dtype=float),
        bond_lengths=np.array(payload["bond_lengths_A"], dtype=float),
        index_offset=int(payload.get("index_offset", 1)),
    )
