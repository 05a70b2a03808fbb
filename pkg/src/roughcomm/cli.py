"""Command-line runner: ``roughcomm run | list | validate``.

Exit status is 0 when every experiment passes, 1 when any fails or errors, and
2 on a configuration error.  Output files (one row file per experiment,
``summary.json``, and ``manifest.json``) are written by the main thread after
all experiments finish, in the order the config lists them.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, checker_inputs, checker_params, parse_config
from .harness import CHECKERS, BoundReport

__all__ = ["main", "run_experiments", "list_experiments", "ExperimentResult", "EXIT_OK", "EXIT_FAIL", "EXIT_CONFIG"]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DESCRIPTIONS = {
    "lemma23": "sup |Q_s W_{Omega,j}| multipliers against 2^-j log^-beta(1 + 2^j/s)",
    "khat_decay": "shell maxima of |K_hat_j| against 2^(-jk) min(1, log^-beta(2 + 2^j|xi|))",
    "mu_fourier": "Fourier decay of the mollification defects mu_{j,l} and of their gradients",
    "hormander": "Hormander integrals of the smoothed kernels H_l (kernel and transposed)",
    "approx_convergence": "||T - [a,R_{2^l}]^k|| and telescoping differences against 2^((1-epsilon beta) l)",
    "difference_growth": "L^p and L^2 norms of [a,R_{2^(l+1)}]^k - [a,R_{2^l}]^k against 2^l",
    "squarefunction": "sum over l of 2^(kl) [a,S_l]^k f, primal and dual square-function bounds",
    "qst1": "sup of |Q_s T^j 1| on the quarter box against 2^-j s ||Omega||_1",
}


@dataclass
class ExperimentResult:
    name: str
    status: str  # "pass", "fail" or "errored"
    report: BoundReport | None = None
    error: str = ""
    seconds: float = 0.0


def list_experiments() -> str:
    lines = []
    for name in CHECKERS:
        inputs = ", ".join(i for i in checker_inputs(name) if i != "seed")
        params = ", ".join(checker_params(name))
        lines.append(f"{name}: {DESCRIPTIONS[name]}; inputs: {inputs or 'none'}; parameters: {params}")
    return "\n".join(lines)


def _run_one(cfg: ExperimentConfig, name: str) -> ExperimentResult:
    t0 = time.perf_counter()
    try:
        report = CHECKERS[name](**cfg.checker_kwargs(name))
    except Exception as exc:  # precondition failures are recorded, not raised
        logger.warning("%s errored: %s", name, exc)
        return ExperimentResult(name, "errored", error=f"{type(exc).__name__}: {exc}", seconds=time.perf_counter() - t0)
    status = "pass" if report.verdict else "fail"
    return ExperimentResult(name, status, report, seconds=time.perf_counter() - t0)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def report_csv(report: BoundReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", *report.param_names, "measured", "envelope", "ratio"])
    for row in report.rows():
        w.writerow([report.name, *(_cell(v) for v in row)])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if v is None or isinstance(v, str):
        return v
    return str(v)


def report_json(report: BoundReport) -> str:
    rows = [dict(zip((*report.param_names, "measured", "envelope", "ratio"), row)) for row in report.rows()]
    return json.dumps(_jsonable({"experiment": report.name, "rows": rows}), indent=2) + "\n"


def _summary_entry(res: ExperimentResult) -> dict:
    out = {"status": res.status, "seconds": round(res.seconds, 3)}
    if res.report is None:
        out["error"] = res.error
        return out
    r = res.report
    out.update(
        fitted_C=r.fitted_C,
        argmax=r.argmax,
        argmax_params=list(r.params[r.argmax]),
        fitted_C_per_grid=list(r.stability) if r.stability is not None else None,
        stability_ratio=r.stability_ratio,
        verdict=r.verdict,
        extras=r.extras,
    )
    return _jsonable(out)


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiments(cfg: ExperimentConfig, output_dir=None, threads: int | None = None) -> tuple[int, dict]:
    """Run every configured experiment and write the outputs; returns ``(exit_status, manifest)``."""
    out = Path(output_dir) if output_dir is not None else cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = max(1, threads or os.cpu_count() or 1)
    started = datetime.now(timezone.utc).isoformat()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda name: _run_one(cfg, name), cfg.experiments))

    for res in results:
        if res.report is None:
            continue
        if cfg.output_format in ("csv", "both"):
            _atomic_write(out / f"{res.name}.csv", report_csv(res.report))
        if cfg.output_format in ("json", "both"):
            _atomic_write(out / f"{res.name}.json", report_json(res.report))
    summary = {res.name: _summary_entry(res) for res in results}
    _atomic_write(out / "summary.json", json.dumps(summary, indent=2) + "\n")

    status = EXIT_OK if all(r.status == "pass" for r in results) else EXIT_FAIL
    manifest = {
        "config_hash": cfg.digest(),
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "threads": threads,
        "seed": cfg.seed,
        "experiments": {r.name: r.status for r in results},
        "exit_status": status,
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return status, manifest


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughcomm", description="Run numerical checks on rough-kernel Calderon commutators.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the configured experiments")
    run.add_argument("--config", required=True, help="configuration file")
    run.add_argument("--output-dir", help="override output.dir")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    val = sub.add_parser("validate", help="parse and validate a configuration file")
    val.add_argument("--config", required=True, help="configuration file")
    sub.add_parser("list", help="list the available checkers")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        print(list_experiments())
        return EXIT_OK
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("config error: --threads: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {len(cfg.experiments)} experiment(s), config hash {cfg.digest()}")
        return EXIT_OK
    status, manifest = run_experiments(cfg, args.output_dir, args.threads)
    for name, verdict in manifest["experiments"].items():
        print(f"{name}: {verdict}")
    return status


if __name__ == "__main__":
    sys.exit(main())
