"""Command-line entry point.

Three subcommands, each driven by a JSON config file:

    lcpms table   --config cfg.json --out results.csv
    lcpms figure  --config cfg.json --out points.csv
    lcpms predict --config cfg.json --x 1.7

`table` runs the full experiment matrix and writes one CSV row per cell.
`figure` runs a single replication of a one-cell config and writes the
per-test-point records. `predict` runs the pipeline once at the given
covariate and prints the resulting union and selection trace as JSON.

Exit codes: 0 success, 2 config error, 3 runtime cell failure, 4 output
I/O error. No environment variable affects numerical results; LCPMS_LOG
only tunes log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from .core_types import Dataset, GammaGrid, KernelSpec
from .models import NW5, PARAMETRIC10, build_model_bank
from .selection import SelectionResult
from .simulation import (
    CellError,
    DGPFamily,
    DGPSpec,
    PointRecord,
    ResultRow,
    TableConfig,
    derive_rep_seed,
    generate,
    run_replication,
    run_table,
)

__all__ = ["RunConfig", "ConfigError", "parse_config", "emit_results", "emit_figure_data", "main"]

logger = logging.getLogger(__name__)

_MODES = ("table", "figure", "predict")
_KERNELS = ("gaussian", "exponential")
_DEFAULT_KERNEL = "gaussian"
_BANK_DEFAULT_DGP = {NW5: DGPFamily.SINE_CUBED, PARAMETRIC10: DGPFamily.PIECEWISE_SINE}

RESULTS_HEADER = "n,sigma,localizer_bw,ensemble_len,best_single,coverage,best_single_index,n_reps"
FIGURE_HEADER = "x,true_mean,union_parts,selected_model,gamma_lo,gamma_hi"


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    mode: str | None
    bank: str
    dgp: DGPFamily
    n: tuple[int, ...]
    sigma: tuple[float, ...]
    localizer_bw: tuple[float, ...]
    alpha: float
    grid: GammaGrid
    kernel: str
    n_reps: int
    n_test: int
    n_train: int | None
    master_seed: int
    out: str | None


def _fail(field: str, problem: str):
    raise ConfigError(f"{field}: {problem}")


def _as_positive_int(raw, field: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        _fail(field, f"expected an integer, got {raw!r}")
    if raw <= 0:
        _fail(field, f"must be positive, got {raw}")
    return raw


def _as_real(raw, field: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        _fail(field, f"expected a number, got {raw!r}")
    return float(raw)


def _as_list(raw, field: str, convert) -> tuple:
    items = raw if isinstance(raw, list) else [raw]
    if not items:
        _fail(field, "must not be empty")
    return tuple(convert(v, f"{field}[{i}]") for i, v in enumerate(items))


def _positive_real(raw, field: str) -> float:
    v = _as_real(raw, field)
    if v <= 0:
        _fail(field, f"must be positive, got {v}")
    return v


_KNOWN_KEYS = {
    "mode", "bank", "dgp", "n", "sigma", "localizer_bw", "alpha", "grid",
    "kernel", "n_reps", "n_test", "n_train", "master_seed", "out",
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config document, applying defaults
    (alpha 0.1, grid 0.01..0.99 step 0.01, 100 replications, 200 test
    points, master seed 1, one representative cell n=500/sigma=0.1/bw=0.3)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        _fail("config", f"expected a JSON object, got {type(raw).__name__}")

    unknown = sorted(set(raw) - _KNOWN_KEYS)
    if unknown:
        _fail("config", f"unknown key(s): {', '.join(unknown)}")

    mode = raw.get("mode")
    if mode is not None and mode not in _MODES:
        _fail("mode", f"must be one of {_MODES}, got {mode!r}")

    if "bank" not in raw:
        _fail("bank", "missing required key")
    bank = raw["bank"]
    if bank == "custom":
        _fail("bank", "'custom' banks are only available through the library API")
    if bank not in (NW5, PARAMETRIC10):
        _fail("bank", f"must be '{NW5}' or '{PARAMETRIC10}', got {bank!r}")

    dgp_raw = raw.get("dgp")
    if dgp_raw is None:
        dgp = _BANK_DEFAULT_DGP[bank]
    else:
        try:
            dgp = DGPFamily(dgp_raw)
        except ValueError:
            _fail("dgp", f"must be one of {[f.value for f in DGPFamily]}, got {dgp_raw!r}")

    alpha = _as_real(raw.get("alpha", 0.1), "alpha")
    if not (0.0 < alpha < 1.0):
        _fail("alpha", f"must lie in (0, 1), got {alpha}")

    grid_raw = raw.get("grid", {"min": 0.01, "max": 0.99, "step": 0.01})
    if isinstance(grid_raw, list) and len(grid_raw) == 3:
        gmin, gmax, gstep = (_as_real(v, f"grid[{i}]") for i, v in enumerate(grid_raw))
    elif isinstance(grid_raw, dict) and set(grid_raw) <= {"min", "max", "step"}:
        gmin = _as_real(grid_raw.get("min", 0.01), "grid.min")
        gmax = _as_real(grid_raw.get("max", 0.99), "grid.max")
        gstep = _as_real(grid_raw.get("step", 0.01), "grid.step")
    else:
        _fail("grid", "expected [min, max, step] or {min, max, step}")
    if gstep <= 0:
        _fail("grid.step", f"must be positive, got {gstep}")
    try:
        grid = GammaGrid.from_range(gmin, gmax, gstep)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    kernel = raw.get("kernel", _DEFAULT_KERNEL)
    if kernel not in _KERNELS:
        _fail("kernel", f"must be one of {_KERNELS}, got {kernel!r}")

    n = _as_list(raw.get("n", [500]), "n", _as_positive_int)
    sigma = _as_list(raw.get("sigma", [0.1]), "sigma", _positive_real)
    bw = _as_list(raw.get("localizer_bw", [0.3]), "localizer_bw", _positive_real)

    n_train = raw.get("n_train")
    if n_train is not None:
        n_train = _as_positive_int(n_train, "n_train")

    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        _fail("out", f"expected a path string, got {out!r}")

    return RunConfig(
        mode=mode,
        bank=bank,
        dgp=dgp,
        n=n,
        sigma=sigma,
        localizer_bw=bw,
        alpha=alpha,
        grid=grid,
        kernel=kernel,
        n_reps=_as_positive_int(raw.get("n_reps", 100), "n_reps"),
        n_test=_as_positive_int(raw.get("n_test", 200), "n_test"),
        n_train=n_train,
        master_seed=_as_positive_int(raw.get("master_seed", 1), "master_seed"),
        out=out,
    )


def _fmt_num(v: float) -> str:
    """Shortest clean decimal for config-like values (0.1 -> '0.1')."""
    return f"{v:g}"


def emit_results(rows: list[ResultRow], path: str) -> None:
    """Write table rows as CSV, metrics at 4 decimal places."""
    if not rows:
        raise ValueError("no result rows to write")
    lines = [RESULTS_HEADER]
    for r in rows:
        lines.append(
            f"{r.n},{_fmt_num(r.sigma)},{_fmt_num(r.localizer_bw)},"
            f"{r.ensemble_len:.4f},{r.best_single_len:.4f},"
            f"{r.ensemble_coverage:.4f},{r.best_single_index},{r.n_reps}"
        )
    _write_lines(path, lines)


def emit_figure_data(records: list[PointRecord] | tuple[PointRecord, ...], path: str) -> None:
    """Write per-test-point records as CSV; a disjoint union serializes as
    `lo:hi` pairs joined by `|`. The selected model is the pick at the
    tightest admissible level."""
    if not records:
        raise ValueError("no point records to write")
    lines = [FIGURE_HEADER]
    for r in records:
        parts = "|".join(f"{lo:.4f}:{hi:.4f}" for lo, hi in r.union.parts)
        lines.append(
            f"{r.x:.4f},{r.true_mean:.4f},{parts},{r.selected_hi},"
            f"{r.gamma_lo:.4f},{r.gamma_hi:.4f}"
        )
    _write_lines(path, lines)


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _single_cell(cfg: RunConfig, command: str) -> tuple[int, float, float]:
    if len(cfg.n) != 1 or len(cfg.sigma) != 1 or len(cfg.localizer_bw) != 1:
        raise ConfigError(
            f"{command} mode needs a single-cell config; got "
            f"{len(cfg.n)} n x {len(cfg.sigma)} sigma x {len(cfg.localizer_bw)} bw values"
        )
    return cfg.n[0], cfg.sigma[0], cfg.localizer_bw[0]


def _cmd_table(cfg: RunConfig, out: str, naive: bool) -> int:
    table_cfg = TableConfig(
        family=cfg.dgp,
        bank=cfg.bank,
        kernel_family=cfg.kernel,
        n_values=cfg.n,
        sigma_values=cfg.sigma,
        bw_values=cfg.localizer_bw,
        alpha=cfg.alpha,
        grid=cfg.grid,
        n_reps=cfg.n_reps,
        n_test=cfg.n_test,
        n_train=cfg.n_train,
        master_seed=cfg.master_seed,
        naive=naive,
    )
    rows = run_table(table_cfg)
    emit_results(rows, out)
    logger.info("wrote %d rows to %s", len(rows), out)
    return 0


def _cmd_figure(cfg: RunConfig, out: str, naive: bool) -> int:
    n, sigma, bw = _single_cell(cfg, "figure")
    seed = derive_rep_seed(cfg.master_seed, n, sigma, bw, 0)
    spec = DGPSpec(cfg.dgp, sigma, cfg.n_train or n, n, cfg.n_test, seed)
    kernel = KernelSpec(cfg.kernel, bw)
    metrics = run_replication(
        spec, cfg.bank, kernel, cfg.alpha, cfg.grid, naive=naive, with_singles=False
    )
    emit_figure_data(metrics.records, out)
    logger.info("wrote %d point records to %s", len(metrics.records), out)
    return 0


def _result_json(x: float, res: SelectionResult) -> str:
    payload = {
        "x": x,
        "gamma_lo": res.bounds.gamma_lo,
        "gamma_hi": res.bounds.gamma_hi,
        "fallback_lo": res.bounds.fallback_lo,
        "fallback_hi": res.bounds.fallback_hi,
        "uniform_fallback": res.uniform_fallback,
        "union": [[lo, hi] for lo, hi in res.union.parts],
        "trace": [
            {"gamma": t.gamma, "model": t.model_index, "lo": t.interval.lo, "hi": t.interval.hi}
            for t in res.trace
        ],
    }
    return json.dumps(payload, indent=2)


def _cmd_predict(cfg: RunConfig, x: float, naive: bool) -> int:
    n, sigma, bw = _single_cell(cfg, "predict")
    seed = derive_rep_seed(cfg.master_seed, n, sigma, bw, 0)
    spec = DGPSpec(cfg.dgp, sigma, cfg.n_train or n, n, cfg.n_test, seed)
    kernel = KernelSpec(cfg.kernel, bw)
    train, calib, _ = generate(spec)
    models = build_model_bank(cfg.bank, train)
    if naive:
        from .oracle_ref import naive_lcpms

        res = naive_lcpms(calib, x, cfg.alpha, cfg.grid, models, kernel)
    else:
        from .selection import SelectionEngine

        res = SelectionEngine(calib, models, kernel, cfg.grid, cfg.alpha).evaluate(x).result
    print(_result_json(x, res))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcpms", description="Locally adaptive conformal model selection runner."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _MODES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON config file")
        p.add_argument("--naive", action="store_true",
                       help="route through the uncached reference pipeline (slow)")
        if name == "predict":
            p.add_argument("--x", type=float, required=True, help="query covariate")
        else:
            p.add_argument("--out", help="output CSV path (falls back to config 'out')")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("LCPMS_LOG", "WARNING").upper())
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports its own message
        return int(exc.code) if exc.code else 0

    try:
        try:
            with open(args.config, "r") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        cfg = parse_config(text)
        if cfg.mode is not None and cfg.mode != args.command:
            raise ConfigError(
                f"mode: config says {cfg.mode!r} but the {args.command!r} command was invoked"
            )
        if args.command == "predict":
            return _cmd_predict(cfg, args.x, args.naive)
        out = args.out or cfg.out
        if not out:
            raise ConfigError("out: no output path given (pass --out or set 'out' in the config)")
        if args.command == "table":
            return _cmd_table(cfg, out, args.naive)
        return _cmd_figure(cfg, out, args.naive)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CellError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
