"""Command-line surface tying the pipeline together.

Subcommands: ``angles`` (PDB to angle CSV), ``gauge`` (unfold + flattening
report), ``reconstruct`` (profile to PDB), ``relax`` (fixed-point solve),
``fit`` (train couplings against a PDB target), ``simulate`` (Monte Carlo
trajectory) and ``theta-scan`` (Rg collapse sweep).

Exit codes: 0 success, 1 usage error, 2 unreadable/invalid input,
3 numerical failure.  Every output file starts with a header recording the
tool version, the full configuration and the seed, and identical
invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    InsufficientData,
    MCConfig,
    geometric_schedule,
    run_schedule,
    self_avoidance_ok,
    theta_scan,
)
from .energy import EnergyParams, params_from_json, segments_from_json, segments_to_json
from .geometry import (
    CalphaChain,
    GeometryError,
    compute_angles,
    detect_flattening_points,
    reconstruct,
    superpose,
    unfold_gauge,
)
from .soliton import Diverged, FitDiverged, fit_multisoliton, relax, profile_from_kappa
from .structure_io import (
    PdbError,
    parse_calpha,
    profile_from_csv,
    profile_from_json,
    profile_to_csv,
    profile_to_json,
    write_chain,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with its own code."""

    def error(self, message):
        raise _UsageError(message)


class _InputError(Exception):
    pass


def _header(args: argparse.Namespace, seed=None) -> list[str]:
    config = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None
    }
    lines = [f"frenetfold {__version__}", f"command: {args.command}",
             f"config: {json.dumps(config, default=str, sort_keys=True)}"]
    if seed is not None:
        lines.append(f"seed: {seed}")
    return lines


def _load_chain(args) -> "CalphaChain":
    try:
        text = Path(args.pdb).read_text()
    except OSError as exc:
        raise _InputError(f"cannot read {args.pdb}: {exc}") from exc
    structure = parse_calpha(text, chain_id=args.chain, model_index=args.model)
    if len(structure.fragments) > 1:
        print(
            f"note: {len(structure.fragments)} fragments "
            f"({structure.report}); using the largest",
            file=sys.stderr,
        )
    return structure.largest()


def _load_profile(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc}") from exc
    try:
        if text.lstrip().startswith("{"):
            return profile_from_json(text)
        return profile_from_csv(text)
    except ValueError as exc:
        raise _InputError(f"cannot parse profile {path}: {exc}") from exc


def _load_params(path: str) -> EnergyParams:
    try:
        return params_from_json(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise _InputError(f"cannot read parameters {path}: {exc}") from exc


def _parse_schedule(spec: str) -> list[tuple[int, float]]:
    """Either JSON ``[[steps, kT], ...]`` or ``geometric:start:end:stages:steps``."""
    if spec.startswith("geometric:"):
        try:
            _, start, end, stages, steps = spec.split(":")
            return geometric_schedule(float(start), float(end), int(stages), int(steps))
        except ValueError as exc:
            raise _InputError(f"bad geometric schedule {spec!r}: {exc}") from exc
    try:
        stages = json.loads(spec)
        return [(int(steps), float(kt)) for steps, kt in stages]
    except (ValueError, TypeError) as exc:
        raise _InputError(f"bad schedule {spec!r}: {exc}") from exc


def _write(path: str, text: str) -> None:
    Path(path).write_text(text)


def _cmd_angles(args) -> int:
    chain = _load_chain(args)
    profile = compute_angles(chain)
    if args.json:
        _write(args.out, profile_to_json(profile, meta={"tool": f"frenetfold {__version__}"}))
    else:
        _write(args.out, profile_to_csv(profile, header_lines=_header(args)))
    return EXIT_OK


def _cmd_gauge(args) -> int:
    if not args.pdb and not args.profile:
        raise _UsageError("gauge needs --pdb or --profile")
    if args.pdb:
        profile = compute_angles(_load_chain(args))
    else:
        profile = _load_profile(args.profile)
    unfolded, sites = unfold_gauge(profile, tau_threshold=args.tau_threshold)
    _write(args.out, profile_to_csv(unfolded, header_lines=_header(args)))
    report = {
        "applied_sites": sites,
        "flattening_before": detect_flattening_points(profile),
        "flattening_after": detect_flattening_points(unfolded),
    }
    _write(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_reconstruct(args) -> int:
    profile = _load_profile(args.profile)
    chain = reconstruct(profile)
    _write(args.out, write_chain(chain))
    return EXIT_OK


def _cmd_relax(args) -> int:
    profile = _load_profile(args.profile)
    params = _load_params(args.params)
    kappa_star, report = relax(
        profile.kappa, params, epsilon=args.epsilon, max_iters=args.max_iters, tol=args.tol
    )
    fitted = profile_from_kappa(kappa_star, params, profile.bond_lengths)
    _write(args.out, profile_to_csv(fitted, header_lines=_header(args)))
    payload = {
        "iterations": report.iterations,
        "final_residual": report.final_residual,
        "converged": report.converged,
        "initial_energy": float(report.energy_series[0]),
        "final_energy": float(report.energy_series[-1]),
    }
    _write(args.report, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if report.converged else EXIT_NUMERICAL


def _cmd_fit(args) -> int:
    chain = _load_chain(args)
    try:
        segments = segments_from_json(Path(args.segments).read_text())
    except (OSError, ValueError) as exc:
        raise _InputError(f"cannot read segments {args.segments}: {exc}") from exc
    profile = compute_angles(chain)
    unfolded, _ = unfold_gauge(profile)
    params_list, fitted, report = fit_multisoliton(
        unfolded, segments, epsilon=args.epsilon, max_rounds=args.max_rounds
    )
    _write(args.out_params, segments_to_json(list(zip([r for r, _ in segments], params_list))))
    fitted_chain = reconstruct(fitted)
    _write(args.out_pdb, write_chain(fitted_chain))

    # Per-residue separation after superposition, next to the Debye-Waller band.
    moved = superpose(fitted_chain.coords, chain.coords)
    distances = np.linalg.norm(moved - chain.coords, axis=1)
    dw = (
        np.sqrt(np.asarray(chain.b_factors) / (8.0 * np.pi**2))
        if chain.b_factors is not None
        else np.full(len(chain), np.nan)
    )
    lines = [f"# {line}" for line in _header(args)]
    lines.append(f"# fit_rmsd_A: {report.rmsd:.6f}")
    lines.append("residue,distance_A,debye_waller_A")
    for i, (dist, band) in enumerate(zip(distances, dw)):
        lines.append(f"{i},{dist:.6f},{band:.6f}")
    _write(args.out_report, "\n".join(lines) + "\n")
    print(f"fit RMSD: {report.rmsd:.4f} A after {report.evaluations} trials")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    profile = _load_profile(args.profile)
    params = _load_params(args.params)
    config = MCConfig(
        kT_schedule=_parse_schedule(args.schedule),
        move_sigma_kappa=args.sigma_kappa,
        move_sigma_tau=args.sigma_tau,
        seed=args.seed,
        measure_every=args.measure_every,
    )
    reference = reconstruct(_load_profile(args.reference)) if args.reference else None
    if not self_avoidance_ok(reconstruct(profile)):
        raise _InputError("initial profile is not self-avoiding")
    trajectory = run_schedule(profile, params, config, reference=reference)
    _write(args.out, trajectory.to_csv(header_lines=_header(args, seed=args.seed)))
    return EXIT_OK


def _cmd_theta_scan(args) -> int:
    params = _load_params(args.params)
    config = MCConfig(
        kT_schedule=_parse_schedule(args.schedule),
        move_sigma_kappa=args.sigma_kappa,
        move_sigma_tau=args.sigma_tau,
        seed=args.seed,
        measure_every=args.measure_every,
    )
    lengths = [int(n) for n in args.lengths.split(",")]
    result = theta_scan(params, config, lengths)
    lines = [f"# {line}" for line in _header(args, seed=args.seed)]
    lines.append(f"# nu_high: {result.fit_high.nu:.6f}  R0_high: {result.fit_high.R0:.6f}")
    lines.append(f"# nu_low: {result.fit_low.nu:.6f}  R0_low: {result.fit_low.R0:.6f}")
    lines.append(f"# theta_kT: {result.theta_kT:.6g}")
    lines.append("kT,n_vertices,mean_Rg_A")
    for kt, n, rg in result.rg_table:
        lines.append(f"{kt:.12g},{n},{rg:.12g}")
    _write(args.out, "\n".join(lines) + "\n")
    print(
        f"nu(high kT) = {result.fit_high.nu:.3f}, nu(low kT) = {result.fit_low.nu:.3f}, "
        f"theta kT ~ {result.theta_kT:.4g}"
    )
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="frenetfold", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"frenetfold {__version__}")
    parser.add_argument(
        "--config", default=None, help="JSON file of flag defaults (flags win)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_pdb_options(p):
        p.add_argument("--pdb", required=True, help="input PDB file")
        p.add_argument("--chain", default=None, help="chain id (default: first)")
        p.add_argument("--model", type=int, default=0, help="0-based model index")

    p = sub.add_parser("angles", help="PDB -> bond/torsion angle CSV")
    add_pdb_options(p)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true", help="write JSON instead of CSV")
    p.set_defaults(func=_cmd_angles)

    p = sub.add_parser("gauge", help="unfold the angle profile and report flattening points")
    p.add_argument("--pdb", default=None, help="input PDB file")
    p.add_argument("--chain", default=None)
    p.add_argument("--model", type=int, default=0)
    p.add_argument("--profile", default=None, help="input profile (CSV or JSON)")
    p.add_argument("--tau-threshold", type=float, default=2.5)
    p.add_argument("--out", required=True, help="unfolded profile CSV")
    p.add_argument("--report", required=True, help="JSON gauge/flattening report")
    p.set_defaults(func=_cmd_gauge)

    p = sub.add_parser("reconstruct", help="angle profile -> PDB")
    p.add_argument("--profile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("relax", help="iterate the profile's bond angles to a fixed point")
    p.add_argument("--profile", required=True, help="initial profile (CSV or JSON)")
    p.add_argument("--params", required=True, help="couplings JSON")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=1_000_000)
    p.add_argument("--out", required=True, help="fixed-point profile CSV")
    p.add_argument("--report", required=True, help="JSON convergence report")
    p.set_defaults(func=_cmd_relax)

    p = sub.add_parser("fit", help="train per-segment couplings against a PDB target")
    add_pdb_options(p)
    p.add_argument("--segments", required=True, help="JSON list of {start, stop, params}")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--max-rounds", type=int, default=20)
    p.add_argument("--out-params", required=True)
    p.add_argument("--out-pdb", required=True)
    p.add_argument("--out-report", required=True, help="per-residue distance CSV")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo trajectory under a kT schedule")
    p.add_argument("--profile", required=True, help="initial profile (CSV or JSON)")
    p.add_argument("--params", required=True)
    p.add_argument("--schedule", required=True,
                   help='JSON [[steps, kT], ...] or "geometric:start:end:stages:steps"')
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sigma-kappa", type=float, default=0.1)
    p.add_argument("--sigma-tau", type=float, default=0.2)
    p.add_argument("--measure-every", type=int, default=100)
    p.add_argument("--reference", default=None, help="profile whose chain anchors the RMSD trace")
    p.add_argument("--out", required=True, help="trajectory CSV")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("theta-scan", help="Rg(N, kT) sweep with scaling fits")
    p.add_argument("--params", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--lengths", default="16,24,32,48,64", help="comma-separated vertex counts")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sigma-kappa", type=float, default=0.1)
    p.add_argument("--sigma-tau", type=float, default=0.2)
    p.add_argument("--measure-every", type=int, default=25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_theta_scan)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # A config file supplies defaults; explicit flags still win.
        if "--config" in argv:
            at = argv.index("--config")
            config_path = argv[at + 1] if at + 1 < len(argv) else None
            if config_path is None:
                raise _UsageError("--config needs a path")
            try:
                defaults = json.loads(Path(config_path).read_text())
            except (OSError, ValueError) as exc:
                raise _InputError(f"cannot read config {config_path}: {exc}") from exc
            parser.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (_InputError, PdbError, GeometryError, InsufficientData, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (Diverged, FitDiverged) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
