"""
Main entry point for the Structural ETKF Toolkit
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to Python path
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from src.config import APP_NAME, APP_VERSION, DEFAULT_RUNS_DIR, PRESETS, TABLE1_VARIANTS
from src.core.errors import AssimilationToolkitError
from src.core.harness import (config_from_values, config_hash, dump_config, emit_plot_data, generate_truth,
                              load_config, preset_values, run_scenario)
from src.core.metrics import format_summary, summarize
from src.core.run_store import RunStore
from src.utils.log import log_to_file, setup_logging

logger = logging.getLogger("src.main")


def _default_out(config_path: str, digest: str) -> Path:
    return DEFAULT_RUNS_DIR / f"{Path(config_path).stem}-{digest[:8]}"


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    store = RunStore(args.out or _default_out(args.config, config_hash(cfg)))
    store.ensure_dirs()
    progress = not args.quiet and sys.stderr.isatty()
    with log_to_file(store.log_path):
        record = run_scenario(cfg, progress=progress)
        store.save(record)
    if record.summary is None:
        print("no assimilation cycles")
    else:
        print(format_summary(record.summary))
    return 0


def cmd_truth_gen(args) -> int:
    cfg = load_config(args.config)
    store = RunStore(args.out or _default_out(args.config, config_hash(cfg)))
    store.ensure_dirs()
    with log_to_file(store.log_path):
        truths = generate_truth(cfg)
        store.save_truth(cfg, truths)
    print(f"wrote {len(truths)} truth fields to {store.run_dir / RunStore.TRUTH_DIR}")
    return 0


def cmd_metrics(args) -> int:
    print(format_summary(summarize(RunStore(args.run_dir).load_series())))
    return 0


def cmd_plot_data(args) -> int:
    record = RunStore(args.run_dir).load_record()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            emit_plot_data(record, args.what, f)
    else:
        emit_plot_data(record, args.what, sys.stdout)
    return 0


def cmd_init_config(args) -> int:
    text = dump_config(config_from_values(preset_values(args.preset, args.variant)))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etkf", description=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug output on the console")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only, no progress bar")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a twin experiment")
    p.add_argument("config")
    p.add_argument("--out", help="run directory")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("truth-gen", help="generate the truth fields of a scenario")
    p.add_argument("config")
    p.add_argument("--out", help="output directory")
    p.set_defaults(handler=cmd_truth_gen)

    p = sub.add_parser("metrics", help="print the summary metrics of a run")
    p.add_argument("run_dir")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("plot-data", help="emit plot-ready CSV from a run")
    p.add_argument("run_dir")
    p.add_argument("--what", required=True,
                   help="metrics | cross_section:y=<v>,t=<t> | cross_section:x=<v>,t=<t> | stats_field:<kind>,t=<t>")
    p.add_argument("--out", help="CSV file (stdout when omitted)")
    p.set_defaults(handler=cmd_plot_data)

    p = sub.add_parser("init-config", help="write a complete preset scenario file")
    p.add_argument("preset", choices=sorted(PRESETS))
    p.add_argument("--variant", choices=sorted(TABLE1_VARIANTS), help="weighting variant to apply")
    p.add_argument("--out", help="scenario file (stdout when omitted)")
    p.set_defaults(handler=cmd_init_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    try:
        return args.handler(args)
    except AssimilationToolkitError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception("unexpected failure")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
