"""Command-line front end.

Subcommands: `keyrate` (rate-vs-distance scan), `decoy` (synthesize
observables and run the estimation round trip), `bsm` (outcome-probability
table for all 16 polarization pairs), `hom` (coincidence-dip sweep).

Every run resolves a full configuration (defaults, then config file, then
flags), embeds it into the output file, and is deterministic: identical
configurations produce byte-identical files.  Exit codes: 0 success,
2 configuration error, 3 numerical failure; errors are reported as a JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import decoy, hom, keyrate, protocol
from .config import KEY_SPECS, RunConfig, load_config_file
from .errors import ConfigError, NumericalFailure
from .optics import (
    BsmOutcome,
    Polarization,
    SourcePulse,
    coherent_outcome_probs,
    fock_outcome_probs,
)
from .protocol import Basis, loss_adjusted_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_POL_ORDER = (Polarization.H, Polarization.V, Polarization.D, Polarization.A)

BSM_CSV_HEADER = "pol_a,pol_b,p_psi_minus,p_psi_plus,p_fail"
DECOY_CSV_HEADER = "basis,n,m,y_true,y_estimated,e_true,e_estimated"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdiqkd",
        description="Rate, estimation and interference models for "
                    "measurement-device-independent QKD.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (
        ("keyrate", cmd_keyrate, "scan the secret key rate over distance"),
        ("decoy", cmd_decoy, "synthesize decoy observables and invert them"),
        ("bsm", cmd_bsm, "tabulate relay outcome probabilities"),
        ("hom", cmd_hom, "sweep the two-pulse coincidence dip"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.set_defaults(func=func)
        p.add_argument("--config", metavar="PATH", help="key = value configuration file")
        p.add_argument("--out", metavar="PATH", help="output file path")
        if name == "decoy":
            p.add_argument("--observed", metavar="PATH",
                           help="invert an externally produced observed-statistics JSON "
                                "file instead of synthesizing one; emits the estimated "
                                "yield/error table as JSON")
        for spec in KEY_SPECS:
            p.add_argument(f"--{spec.name.replace('_', '-')}", dest=f"key_{spec.name}",
                           metavar="VALUE", help=spec.help)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    mapping: dict[str, str] = {}
    if args.config:
        mapping.update(load_config_file(args.config))
    for spec in KEY_SPECS:
        value = getattr(args, f"key_{spec.name}", None)
        if value is not None:
            mapping[spec.name] = value
    return RunConfig.from_mapping(mapping)


def _write_lines(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _config_comments(config: RunConfig) -> list[str]:
    return [f"{key} = {value}" for key, value in config.resolved_items()]


def _out_path(args: argparse.Namespace, config: RunConfig, stem: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(f"{stem}.{config.format}")


def cmd_keyrate(args: argparse.Namespace, config: RunConfig) -> int:
    system = config.system()
    placement = config.placement()
    grid = np.geomspace(config.opt_grid_min, config.opt_grid_max, config.opt_grid_points)
    fixed = None
    if config.intensity_mode == "fixed":
        fixed = (config.fixed_mu_a, config.fixed_mu_b)
    points = keyrate.distance_scan(system, config.distances_km, placement,
                                   fixed_intensities=fixed, grid=grid)

    path = _out_path(args, config, "keyrate_scan")
    if config.format == "csv":
        _write_lines(path, keyrate.scan_csv_lines(points, comments=_config_comments(config)))
    else:
        _write_json(path, keyrate.scan_json_obj(points, config=config.resolved_dict()))

    cutoff = keyrate.find_cutoff(system, placement, grid=grid, fixed_intensities=fixed)
    print(f"wrote {path}")
    print(f"cutoff_km = {cutoff:.2f}")
    if config.attenuation_db_per_km > 0:
        d40 = 40.0 / config.attenuation_db_per_km
        if fixed is None:
            at40 = keyrate.optimize_intensity(system, d40, placement, grid=grid)
        else:
            at40 = keyrate.evaluate_point(system, d40, fixed[0], fixed[1], placement)
        print(f"rate_at_40db_loss = {at40.key_rate:.6e} (distance {d40:g} km)")
    else:
        print("rate_at_40db_loss = n/a (lossless channel)")
    return EXIT_OK


def _table_entries(table) -> dict:
    errors = [[None if math.isnan(v) else v for v in row] for row in table.errors.tolist()]
    return {"yields": table.yields.tolist(), "errors": errors}


def _error_metrics(true_table, est_table) -> dict:
    y_true, y_est = true_table.yields, est_table.yields
    abs_err = np.abs(y_est - y_true)
    sizable = np.abs(y_true) > 1e-8
    metrics = {
        "max_abs_error_yields": float(abs_err.max()),
        "max_rel_error_yields": float((abs_err[sizable] / np.abs(y_true[sizable])).max())
        if sizable.any() else None,
    }
    both = true_table.error_defined & est_table.error_defined
    if both.any():
        e_abs = np.abs(est_table.errors[both] - true_table.errors[both])
        metrics["max_abs_error_errors"] = float(e_abs.max())
    else:
        metrics["max_abs_error_errors"] = None
    return metrics


def _load_observed(path: str) -> decoy.ObservedStats:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return decoy.ObservedStats.from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read observed-statistics file {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed observed-statistics file {path}: {exc}") from exc


def _invert_external(args: argparse.Namespace, config: RunConfig) -> int:
    obs = _load_observed(args.observed)
    if min(len(obs.grid.alice), len(obs.grid.bob)) < config.estimation_n_max + 1:
        raise ConfigError(
            f"observed grid is too small for estimation_n_max = {config.estimation_n_max}: "
            f"need at least {config.estimation_n_max + 1} intensities per side")
    est = decoy.estimate_table(obs, n_max=config.estimation_n_max)
    path = Path(args.out) if args.out else Path("decoy_estimate.json")
    _write_json(path, {
        "config": config.resolved_dict(),
        "observed": obs.to_json_dict(),
        "estimated": est.table.to_json_dict(),
        "diagnostics": {
            "clamp_events": len(est.clamp_events),
            "max_residual": est.max_residual,
            "max_condition": est.max_condition,
        },
    })
    print(f"wrote {path}")
    print(f"y11_estimated = {est.table.yields[1, 1]:.9e}" if config.estimation_n_max >= 1
          else "y11_estimated = n/a (n_max < 1)")
    return EXIT_OK


def cmd_decoy(args: argparse.Namespace, config: RunConfig) -> int:
    if getattr(args, "observed", None):
        return _invert_external(args, config)
    system = config.system()
    la, lb = keyrate.arm_lengths(config.decoy_distance_km, config.placement())
    channel = keyrate.ChannelModel(length_a_km=la, length_b_km=lb,
                                   attenuation_db_per_km=config.attenuation_db_per_km)
    ta, tb = channel.transmittance_a, channel.transmittance_b
    grid = decoy.IntensityGrid(alice=config.grid_alice, bob=config.grid_bob)
    n_max = config.estimation_n_max

    per_basis: dict[str, dict] = {}
    summary: dict[str, float | None] = {}
    for basis in (Basis.RECT, Basis.DIAG):
        relay = protocol.build_yield_error_table(basis, system.transfer_matrix,
                                                 system.detector, n_max=n_max)
        truth = loss_adjusted_table(relay, ta, tb)
        if config.decoy_synthesis == "table":
            obs = decoy.observed_from_table(truth, grid)
        else:
            obs = decoy.observed_from_model(grid, basis, system.transfer_matrix,
                                            system.detector, transmittances=(ta, tb),
                                            phase_nodes=config.phase_nodes)
        est = decoy.estimate_table(obs, n_max=n_max)
        per_basis[basis.value] = {
            "true": _table_entries(truth),
            "estimated": _table_entries(est.table),
            "metrics": _error_metrics(truth, est.table),
            "clamp_events": len(est.clamp_events),
            "max_residual": est.max_residual,
            "max_condition": est.max_condition,
            "_tables": (truth, est.table),
        }

    rect_truth, rect_est = per_basis["rect"]["_tables"]
    diag_truth, diag_est = per_basis["diag"]["_tables"]
    y11_true = float(rect_truth.yields[1, 1])
    y11_est = float(rect_est.yields[1, 1])
    summary["y11_rect_true"] = y11_true
    summary["y11_rect_estimated"] = y11_est
    summary["y11_rect_rel_error"] = (abs(y11_est - y11_true) / y11_true
                                     if y11_true > 0 else None)
    e11_true = float(diag_truth.errors[1, 1])
    e11_est = float(diag_est.errors[1, 1])
    summary["e11_diag_true"] = None if math.isnan(e11_true) else e11_true
    summary["e11_diag_estimated"] = None if math.isnan(e11_est) else e11_est
    if not math.isnan(e11_true) and not math.isnan(e11_est):
        summary["e11_diag_abs_error"] = abs(e11_est - e11_true)

    q11_value = decoy.q11(config.fixed_mu_a, config.fixed_mu_b, y11_est)
    summary["q11_rect"] = q11_value
    summary["q11_mu_a"] = config.fixed_mu_a
    summary["q11_mu_b"] = config.fixed_mu_b

    for entry in per_basis.values():
        del entry["_tables"]

    path = _out_path(args, config, "decoy_roundtrip")
    if config.format == "json":
        _write_json(path, {
            "config": config.resolved_dict(),
            "distance_km": config.decoy_distance_km,
            "bases": per_basis,
            "summary": summary,
        })
    else:
        lines = [f"# {c}" for c in _config_comments(config)]
        lines.append(DECOY_CSV_HEADER)
        for basis_name, truth, est in (("rect", rect_truth, rect_est),
                                       ("diag", diag_truth, diag_est)):
            for n in range(n_max + 1):
                for m in range(n_max + 1):
                    vals = (truth.yields[n, m], est.yields[n, m],
                            truth.errors[n, m], est.errors[n, m])
                    lines.append(f"{basis_name},{n},{m}," +
                                 ",".join(keyrate.format_float(v) for v in vals))
        _write_lines(path, lines)

    print(f"wrote {path}")
    for basis_name, entry in per_basis.items():
        m = entry["metrics"]
        rel = m["max_rel_error_yields"]
        print(f"{basis_name}: max_abs_error_yields = {m['max_abs_error_yields']:.3e}, "
              f"max_rel_error_yields = {'n/a' if rel is None else f'{rel:.3e}'}, "
              f"clamp_events = {entry['clamp_events']}")
    e11_text = ("n/a" if summary["e11_diag_estimated"] is None
                else f"{summary['e11_diag_estimated']:.6e}")
    print(f"y11_rect_estimated = {y11_est:.9f}")
    print(f"e11_diag_estimated = {e11_text}")
    print(f"q11_rect(mu_a={config.fixed_mu_a:g}, mu_b={config.fixed_mu_b:g}) = {q11_value:.9e}")
    return EXIT_OK


def cmd_bsm(args: argparse.Namespace, config: RunConfig) -> int:
    system = config.system()
    u = system.transfer_matrix
    det = system.detector
    rows = []
    for pol_a in _POL_ORDER:
        for pol_b in _POL_ORDER:
            if config.bsm_input == "fock":
                probs = fock_outcome_probs(
                    config.bsm_photons_a, pol_a, config.bsm_photons_b, pol_b, u, det,
                    n_max=max(config.bsm_photons_a, config.bsm_photons_b, 3))
            else:
                probs = coherent_outcome_probs(
                    SourcePulse(pol_a, config.bsm_mu_a), SourcePulse(pol_b, config.bsm_mu_b),
                    u, det, phase_nodes=config.phase_nodes)
            rows.append((pol_a.value, pol_b.value, probs[BsmOutcome.PSI_MINUS],
                         probs[BsmOutcome.PSI_PLUS], probs[BsmOutcome.FAIL]))

    path = _out_path(args, config, "bsm_table")
    if config.format == "csv":
        lines = [f"# {c}" for c in _config_comments(config)]
        lines.append(BSM_CSV_HEADER)
        for pa, pb, pm, pp, pf in rows:
            lines.append(f"{pa},{pb}," + ",".join(keyrate.format_float(v)
                                                  for v in (pm, pp, pf)))
        _write_lines(path, lines)
    else:
        _write_json(path, {
            "config": config.resolved_dict(),
            "rows": [{"pol_a": pa, "pol_b": pb, "p_psi_minus": pm,
                      "p_psi_plus": pp, "p_fail": pf}
                     for pa, pb, pm, pp, pf in rows],
        })
    print(f"wrote {path}")
    return EXIT_OK


def cmd_hom(args: argparse.Namespace, config: RunConfig) -> int:
    params = config.hom_params()
    points = hom.hom_scan(params)
    dip = hom.coincidence_point(0.0, params)
    far_delay = max(abs(t) for t in params.delays_ps)
    asymptote = hom.coincidence_point(far_delay, params)

    path = _out_path(args, config, "hom_scan")
    if config.format == "csv":
        _write_lines(path, hom.hom_csv_lines(points, comments=_config_comments(config)))
    else:
        _write_json(path, hom.hom_json_obj(points, config=config.resolved_dict()))
    print(f"wrote {path}")
    print(f"dip_c0 = {dip.c_norm:.6f}")
    print(f"asymptote_c = {asymptote.c_norm:.6f} (delay {far_delay:g} ps)")
    return EXIT_OK


def _fail(code: int, exc: Exception) -> int:
    payload = {"error": {"code": code, "type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return args.func(args, config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except NumericalFailure as exc:
        return _fail(EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
