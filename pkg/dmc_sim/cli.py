"""
Command-line front end.

    python -m dmc_sim run --config configs/m1_0.8kV.cfg --out out/
    python -m dmc_sim batch --out out/
    python -m dmc_sim summarize out/m1_0.8kV/telemetry.csv --config configs/m1_0.8kV.cfg
    python -m dmc_sim validate-config --config configs/default.cfg
"""

import argparse
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .config import apply_overrides, configure_logging, dump_scenario, get_runtime_config, load_scenario
from .errors import DmcSimError
from .models import ErrorResponse, RunManifest, ScenarioConfig, SummaryRow
from .scenario import canonical_cases, run
from .telemetry import (
    SUMMARY_FILENAME,
    render_summary_table,
    summarize_csv,
    write_summary_csv,
    write_telemetry,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_IO = 3


def safe_print(*args, **kwargs):
    """Print to stderr, falling back to ASCII markers when the console can't encode emoji."""
    file = kwargs.pop("file", sys.stderr)
    try:
        print(*args, file=file, **kwargs)
    except UnicodeEncodeError:
        text = " ".join(str(arg) for arg in args)
        text = text.replace("⚡", "[RUN]")
        text = text.replace("✅", "[OK]")
        text = text.replace("⚠️", "[WARN]")
        text = text.replace("📁", "[OUT]")
        text = text.replace("🔋", "[DONE]")
        print(text, file=file, **kwargs)


def _report(code: str, message: str) -> None:
    print(ErrorResponse(error=message, code=code).model_dump_json(), file=sys.stderr)


# ============================================================================
# OUTPUT
# ============================================================================

def write_run_outputs(
    config: ScenarioConfig,
    telemetry,
    summary: SummaryRow,
    out_root: Path,
    config_path: Optional[Path],
    runtime_s: float,
) -> Path:
    """Populate out_root/<name>/ through a temp directory and a rename."""
    out_root.mkdir(parents=True, exist_ok=True)
    target = out_root / config.name
    tmp = Path(tempfile.mkdtemp(prefix=f".{config.name}.", dir=out_root))
    try:
        write_telemetry(telemetry, tmp / "telemetry.csv")
        write_summary_csv([summary], tmp / SUMMARY_FILENAME)
        (tmp / "summary.txt").write_text(render_summary_table([summary]), encoding="utf-8")
        (tmp / "resolved.cfg").write_text(dump_scenario(config), encoding="utf-8")
        manifest = RunManifest(
            config_path=str(config_path) if config_path else None,
            output_dir=str(target),
            scenario_ids=[config.name],
            tool_version=__version__,
            runtime_s={config.name: runtime_s},
        )
        (tmp / "manifest.json").write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        if target.exists():
            shutil.rmtree(target)
        os.replace(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return target


def _run_one(config: ScenarioConfig, out_root: Path, config_path: Optional[Path]) -> tuple[SummaryRow, float]:
    started = time.perf_counter()
    result = run(config)
    runtime = time.perf_counter() - started
    write_run_outputs(config, result.telemetry, result.summary, out_root, config_path, runtime)
    return result.summary, runtime


def _batch_worker(args: tuple[ScenarioConfig, str, Optional[str], str]) -> tuple[SummaryRow, float]:
    config, out_root, config_path, log_level = args
    logging.basicConfig(level=log_level, force=True)
    return _run_one(config, Path(out_root), Path(config_path) if config_path else None)


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def _load(args: argparse.Namespace, path: Path) -> ScenarioConfig:
    config = load_scenario(path)
    return apply_overrides(config, dt=args.dt, duration=args.duration, decimation=args.decimation)


def cmd_run(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    config = _load(args, config_path)
    out_root = Path(args.out)
    safe_print(f"⚡ Running '{config.name}' ({config.test_setting}, dt={config.dt:g} s)")
    summary, runtime = _run_one(config, out_root, config_path)
    safe_print(f"✅ Finished in {runtime:.1f} s")
    safe_print(f"📁 {out_root / config.name}")
    sys.stdout.write(render_summary_table([summary]))
    return EXIT_OK


def cmd_batch(args: argparse.Namespace) -> int:
    runtime = get_runtime_config()
    if args.config:
        cases = [(Path(p), _load(args, Path(p))) for p in args.config]
    else:
        cases = [
            (path, apply_overrides(cfg, dt=args.dt, duration=args.duration, decimation=args.decimation))
            for path, cfg in canonical_cases()
        ]
    names = [cfg.name for _, cfg in cases]
    if len(set(names)) != len(names):
        raise DmcSimError(f"batch scenario names must be unique, got {names}", code="CONFIG_INVALID")

    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    workers = max(1, min(runtime.threads, len(cases)))
    safe_print(f"⚡ Running {len(cases)} scenarios on {workers} worker(s)")

    jobs = [(cfg, str(out_root), str(path), runtime.log_level) for path, cfg in cases]
    if workers == 1:
        results = [_batch_worker(job) for job in jobs]
    else:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_batch_worker, jobs))
        except BrokenProcessPool as exc:
            raise DmcSimError(f"batch worker died: {exc}", code="BATCH_WORKER_FAILED") from exc

    summaries = [summary for summary, _ in results]
    write_summary_csv(summaries, out_root / SUMMARY_FILENAME)
    table = render_summary_table(summaries)
    (out_root / "summary.txt").write_text(table, encoding="utf-8")
    manifest = RunManifest(
        config_path=None if not args.config else ",".join(args.config),
        output_dir=str(out_root),
        scenario_ids=names,
        tool_version=__version__,
        runtime_s={name: secs for name, (_, secs) in zip(names, results)},
    )
    (out_root / "manifest.json").write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    safe_print(f"🔋 Batch complete: {out_root}")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    config = _load(args, Path(args.config))
    summary = summarize_csv(args.telemetry, config, attenuation_count=args.attenuation_count)
    sys.stdout.write(render_summary_table([summary]))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load(args, Path(args.config))
    if args.dump:
        sys.stdout.write(dump_scenario(config))
    return EXIT_OK


# ============================================================================
# ENTRY POINT
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dt", type=float, help="plant step [s]")
    common.add_argument("--duration", type=float, help="simulated time cap [s]")
    common.add_argument("--decimation", type=int, help="record every n-th step")
    common.add_argument("--seed", type=int, help="reserved; the model is deterministic")

    parser = argparse.ArgumentParser(prog="dmc_sim", description="MVDC supercapacitor charging with DMC")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    default_out = get_runtime_config().output_dir

    p_run = sub.add_parser("run", parents=[common], help="run one scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=default_out)
    p_run.set_defaults(handler=cmd_run)

    p_batch = sub.add_parser("batch", parents=[common], help="run the canonical test cases")
    p_batch.add_argument("--config", action="append", help="scenario file (repeatable); default: the shipped four")
    p_batch.add_argument("--out", default=default_out)
    p_batch.set_defaults(handler=cmd_batch)

    p_sum = sub.add_parser("summarize", parents=[common], help="summary row from a telemetry CSV")
    p_sum.add_argument("telemetry")
    p_sum.add_argument("--config", required=True)
    p_sum.add_argument("--attenuation-count", type=int,
                       help="default: read from summary.csv next to the telemetry, else 0")
    p_sum.set_defaults(handler=cmd_summarize)

    p_val = sub.add_parser("validate-config", parents=[common], help="check a scenario file")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--dump", action="store_true", help="print the resolved config")
    p_val.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        configure_logging()
        return args.handler(args)
    except DmcSimError as exc:
        _report(exc.code, exc.message)
        return EXIT_ERROR
    except ValidationError as exc:
        _report("CONFIG_INVALID", str(exc.errors()[0]["msg"]))
        return EXIT_ERROR
    except OSError as exc:
        _report("IO_ERROR", str(exc))
        return EXIT_IO
