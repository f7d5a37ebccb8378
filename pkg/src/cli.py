"""
Command-line front end: green-eval, sample-field, validate, forward, recover.

Exit codes: 0 success, 2 validation failure, 3 numerical failure (diagnostic.json written).
"""
import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from src.errors import NUMERICAL_ERRORS, VALIDATION_ERRORS, ConfigError, DomainError, error_payload
from src.experiment_config import ExperimentConfig, default_log_level, default_threads, load_config
from src.forward_solver import BornSolver, FarFieldTable
from src.green_function import ModelParams, green
from src.grid_io import CSV_MAX_NODES, write_grid, write_grid_csv
from src.oracle import green_delta_pv
from src.random_source import AssumptionValidator, kernel_eval, sample_field
from src.source_recovery import (
    SeparatingNormal,
    SourceRecovery,
    compute_separating_normal,
    reconstruct,
    support_points,
)
from src.special_functions import crossover_point

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

GREEN_COLUMNS = ["d", "alpha", "k", "r", "re", "im", "method", "err_est", "oracle_re", "oracle_im", "rel_diff"]

# seconds between far-field table rewrites during a sweep
FLUSH_SECONDS = 5.0


def _write_json(path: Path, data: Dict) -> None:
    path.write_text(json.dumps(data, indent=2, default=str))


def _write_field(out: Path, name: str, field: np.ndarray, grid) -> None:
    """Binary grid file, plus a CSV copy when the grid is small enough to read as text."""
    write_grid(out / f"{name}.bin", field, grid)
    if grid.size <= CSV_MAX_NODES:
        write_grid_csv(out / f"{name}.csv", field, grid)


def cmd_green_eval(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> int:
    block = cfg.green_eval
    d = block.d or cfg.model.d
    alpha = block.alpha or cfg.model.alpha
    asymptotic_only = args.asymptotic_only or block.asymptotic_only
    rows: List[List] = []
    for k in block.wavenumbers:
        p = ModelParams(d=d, alpha=alpha, k=k)
        z_cross = crossover_point(d, alpha)
        for r in block.radii:
            if asymptotic_only and k * r / 2 < z_cross:
                raise DomainError(f"k|x|/2 = {k * r / 2:g} is below the crossover {z_cross:g}; "
                                  "the asymptotic expansion is not accurate there")
            result = green(r, p)
            row = [d, alpha, k, r, result.value.real, result.value.imag, result.method, result.err_est]
            if block.compare_oracle:
                ref = green_delta_pv(r, p, outgoing=True)
                rel = abs(result.value - ref) / max(abs(ref), 1e-300)
                row += [ref.real, ref.imag, rel]
            else:
                row += ["", "", ""]
            rows.append(row)
    with open(out / "green_eval.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GREEN_COLUMNS)
        writer.writerows(rows)
    logger.info("Wrote %d Green's function values", len(rows))
    return EXIT_OK


def cmd_sample_field(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> int:
    spec = cfg.source_spec()
    seed = args.seed if args.seed is not None else cfg.sampling.seed
    field = sample_field(spec, seed)
    _write_field(out, "field", field.samples, spec.grid)
    stats = {
        "config_hash": cfg.config_hash(seed),
        "seed": seed,
        "l2_norm": spec.grid.l2_norm(field.samples),
        "max_abs": float(np.max(np.abs(field.samples))),
        "spectral_floor": field.spectral_floor,
    }

    count = cfg.sampling.monte_carlo_seeds
    if count > 1 and cfg.sampling.pairs:
        idx = [(spec.grid.nearest_index(x), spec.grid.nearest_index(y)) for x, y in cfg.sampling.pairs]
        products = {"c": [], "r": []}
        for s in range(seed, seed + count):
            f = sample_field(spec, s).samples
            products["c"].append([np.conj(f[i]) * f[j] for i, j in idx])
            products["r"].append([f[i] * f[j] for i, j in idx])
        report = []
        for n, (x, y) in enumerate(cfg.sampling.pairs):
            entry = {"x": list(x), "y": list(y)}
            for eta in ("c", "r"):
                values = np.array([row[n] for row in products[eta]])
                mean = complex(values.mean())
                stderr = float(values.std(ddof=1) / math.sqrt(count))
                expected = kernel_eval(eta, spec, x, y)
                entry[eta] = {"empirical": [mean.real, mean.imag], "kernel": [expected.real, expected.imag],
                              "stderr": stderr, "pass": abs(mean - expected) <= 3 * stderr}
            report.append(entry)
        stats["covariance_check"] = report
    _write_json(out / "field_stats.json", stats)
    return EXIT_OK


def _validate(cfg: ExperimentConfig) -> Dict:
    spec = cfg.source_spec()
    ok, message, report = AssumptionValidator().validate_assumption(
        cfg.model_params(), spec, k_max=cfg.k_max, tau_max=max(cfg.sweep.tau_grid))
    return {"passed": ok, "message": message, "conditions": report, "config_hash": cfg.config_hash()}


def cmd_validate(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> int:
    result = _validate(cfg)
    _write_json(out / "validation.json", result)
    if not result["passed"]:
        logger.error("Validation failed: %s", result["message"])
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_forward(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> int:
    validation = _validate(cfg)
    _write_json(out / "validation.json", validation)
    if not validation["passed"]:
        logger.error("Validation failed: %s", validation["message"])
        return EXIT_VALIDATION

    spec = cfg.source_spec()
    seed = args.seed if args.seed is not None else cfg.sweep.seed
    field = sample_field(spec, seed)
    _write_field(out, "field", field.samples, spec.grid)
    config_hash = cfg.config_hash(seed)

    ks = cfg.recovery_config().wavenumber_grid()
    table_path = out / "far_field.json"
    existing: Optional[FarFieldTable] = None
    if table_path.exists():
        existing = FarFieldTable.from_json(table_path)
        if existing.params.get("config_hash") != config_hash:
            logger.warning("Existing table has a different config hash, recomputing from scratch")
            existing = None
    if existing is not None:
        done = {round(float(k), 12) for k in existing.wavenumbers}
        ks = np.array([k for k in ks if round(float(k), 12) not in done])
        logger.info("Resuming: %d wavenumbers already computed, %d left", len(done), len(ks))

    solver = BornSolver(spec, cfg.solver)
    p = cfg.model_params()
    directions = cfg.directions()
    params = {**solver.table_params(p), "config_hash": config_hash}
    rows = {round(r["k"], 12): r for r in existing.rows()} if existing is not None else {}
    total = len(rows) + len(ks)

    def flush() -> Optional[FarFieldTable]:
        if not rows:
            return None
        table = FarFieldTable.from_rows(list(rows.values()), directions, seed=seed, params=params)
        table.to_json(table_path)
        return table

    last_flush = time.monotonic()
    try:
        for row in solver.iter_sweep(field, p, ks, directions, threads=args.threads):
            rows[round(float(row["k"]), 12)] = row
            if time.monotonic() - last_flush >= FLUSH_SECONDS:
                flush()
                last_flush = time.monotonic()
                logger.info("Stored %d of %d wavenumbers", len(rows), total)
    finally:
        table = flush()
    if table is None:
        raise ConfigError("the sweep has no wavenumbers", diagnostics=["sweep.K_values"])
    table.to_csv(out / "far_field.csv")
    _write_json(out / "born_certificates.json", {"config_hash": config_hash, "certificates": table.certificates})
    flagged = [float(k) for k, s in zip(table.wavenumbers, table.status) if s != "ok"]
    if flagged:
        logger.warning("%d wavenumbers flagged with ||K_k|| >= 1", len(flagged))
    return EXIT_OK


def _separating_normal(cfg: ExperimentConfig) -> SeparatingNormal:
    spec = cfg.source_spec()
    if spec.q is None or not np.any(spec.q):
        n_hat = np.zeros(spec.d)
        n_hat[0] = 1.0
        return SeparatingNormal(n_hat=n_hat, offset=0.0)
    return compute_separating_normal(support_points(spec.mu_c > 0, spec.grid),
                                     support_points(spec.q != 0, spec.grid))


def cmd_recover(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> int:
    table_path = Path(args.table) if args.table else out / "far_field.json"
    if not table_path.exists():
        raise ConfigError(f"far-field table {table_path} not found", diagnostics=[str(table_path)])
    table = FarFieldTable.from_json(table_path)
    spec = cfg.source_spec()
    recovery = SourceRecovery(table, cfg.recovery_config(), _separating_normal(cfg))

    report = {"config_hash": cfg.config_hash(table.seed), "seed": table.seed,
              "trends": recovery.error_report({"c": spec.mu_c, "r": spec.mu_r}, spec.grid),
              "reconstructions": []}
    for K in cfg.sweep.K_values:
        result = reconstruct(recovery, spec.grid, K)
        for eta in ("c", "r"):
            _write_field(out, f"mu_{eta}_K{K:g}", result[f"mu_{eta}"], spec.grid)
        truth = {"c": spec.mu_c, "r": spec.mu_r}
        entry = {"K": K}
        for eta in ("c", "r"):
            scale = np.linalg.norm(truth[eta])
            diff = np.linalg.norm(result[f"mu_{eta}"] - truth[eta])
            entry[f"relative_l2_{eta}"] = float(diff / scale) if scale > 0 else float(diff)
            entry[f"imag_residual_{eta}"] = result[f"imag_residual_{eta}"]
            entry[f"boundary_discrepancy_{eta}"] = {str(k): v for k, v in result[f"discrepancies_{eta}"].items()}
        report["reconstructions"].append(entry)
    _write_json(out / "recovery.json", report)
    return EXIT_OK


COMMANDS = {
    "green-eval": cmd_green_eval,
    "sample-field": cmd_sample_field,
    "validate": cmd_validate,
    "forward": cmd_forward,
    "recover": cmd_recover,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frachelm", description="Fractional Helmholtz inverse source lab")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="experiment TOML file")
    parser.add_argument("--out", default=None, help="output directory (defaults to output.directory)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--table", default=None, help="far-field table JSON for recover")
    parser.add_argument("--asymptotic-only", action="store_true")
    parser.add_argument("--log-level", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or default_log_level()).upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out: Optional[Path] = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config)
        out = out or Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        args.threads = args.threads or cfg.threads or default_threads()
        return COMMANDS[args.command](cfg, out, args)
    except (*VALIDATION_ERRORS, ValidationError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        for line in getattr(e, "diagnostics", []):
            logger.error("  %s", line)
        _write_diagnostic(out, e)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as e:
        logger.error("%s: %s", type(e).__name__, e)
        _write_diagnostic(out, e)
        return EXIT_NUMERICAL


def _write_diagnostic(out: Optional[Path], exc: Exception) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    payload = error_payload(exc)
    if isinstance(exc, ValidationError):
        payload["diagnostics"] = [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in exc.errors()]
    _write_json(out / "diagnostic.json", payload)


if __name__ == "__main__":
    sys.exit(main())
