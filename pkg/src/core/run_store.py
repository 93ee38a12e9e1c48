"""
Run directory persistence
Handles saving and loading of run records and generated truths
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from src.core.errors import ConfigError, GridError
from src.core.grid import Field2D, Grid2D, read_field, write_field
from src.core.harness import (RunRecord, ScenarioConfig, config_hash, dump_config, format_time,
                              load_config)
from src.core.metrics import (MetricSeries, SummaryMetrics, burn_in_start, format_summary, parse_summary,
                              read_metric_series, write_metric_series)

logger = logging.getLogger(__name__)

# Posterior means are stored as <t>.field, the other kinds as <t>.<kind>.field
SNAPSHOT_KINDS = ("truth", "prior_mean", "variance", "s_x", "s_y", "s_diag")


class RunStore:
    """Reads and writes one run directory"""

    CONFIG_FILE = "config.snapshot"
    METRICS_FILE = "metrics.csv"
    SUMMARY_FILE = "summary.txt"
    LOG_FILE = "diagnostics.log"
    SNAPSHOT_DIR = "snapshots"
    TRUTH_DIR = "truth"

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)

    @property
    def log_path(self) -> Path:
        return self.run_dir / self.LOG_FILE

    def ensure_dirs(self):
        """Ensure the run directory exists"""
        self.run_dir.mkdir(parents=True, exist_ok=True)

    def _require(self, name: str) -> Path:
        path = self.run_dir / name
        if not path.exists():
            raise ConfigError(f"{self.run_dir} is not a run directory: {name} is missing")
        return path

    # Writing

    def save(self, record: RunRecord):
        """Write config snapshot, metrics, summary and field snapshots"""
        self.ensure_dirs()
        (self.run_dir / self.CONFIG_FILE).write_text(dump_config(record.config), encoding="utf-8")
        write_metric_series(record.series, self.run_dir / self.METRICS_FILE)
        if record.summary is not None:
            (self.run_dir / self.SUMMARY_FILE).write_text(format_summary(record.summary) + "\n", encoding="utf-8")
        if record.snapshots:
            snapshot_dir = self.run_dir / self.SNAPSHOT_DIR
            snapshot_dir.mkdir(exist_ok=True)
            for label, fields in record.snapshots.items():
                write_field(fields["posterior"], snapshot_dir / f"{label}.field")
                for kind in SNAPSHOT_KINDS:
                    if kind in fields:
                        write_field(fields[kind], snapshot_dir / f"{label}.{kind}.field")
        logger.info("saved run %s to %s", record.config_hash[:12], self.run_dir)

    def save_truth(self, cfg: ScenarioConfig, truths: List[Field2D]):
        """Write the config snapshot and truth/<t>.field for q = 0..L_obs"""
        self.ensure_dirs()
        (self.run_dir / self.CONFIG_FILE).write_text(dump_config(cfg), encoding="utf-8")
        truth_dir = self.run_dir / self.TRUTH_DIR
        truth_dir.mkdir(exist_ok=True)
        for q, truth in enumerate(truths):
            write_field(truth, truth_dir / f"{format_time(cfg.cycle_time(q))}.field")

    # Reading

    def load_config(self) -> ScenarioConfig:
        return load_config(self._require(self.CONFIG_FILE))

    def load_series(self) -> MetricSeries:
        return read_metric_series(self._require(self.METRICS_FILE))

    def load_summary(self, L_obs: int) -> Optional[SummaryMetrics]:
        path = self.run_dir / self.SUMMARY_FILE
        if not path.exists():
            return None
        return parse_summary(path.read_text(encoding="utf-8"), burn_in_start(L_obs))

    def load_snapshots(self, grid: Grid2D) -> Dict[str, Dict[str, Field2D]]:
        snapshots: Dict[str, Dict[str, Field2D]] = {}
        snapshot_dir = self.run_dir / self.SNAPSHOT_DIR
        if not snapshot_dir.is_dir():
            return snapshots
        for path in sorted(snapshot_dir.glob("*.field")):
            stem = path.name[:-len(".field")]
            label, _, kind = stem.rpartition(".")
            if kind not in SNAPSHOT_KINDS:
                label, kind = stem, "posterior"
            snapshots.setdefault(label, {})[kind] = read_field(path, grid)
        return snapshots

    def load_truth(self, grid: Grid2D) -> Dict[str, Field2D]:
        truth_dir = self.run_dir / self.TRUTH_DIR
        if not truth_dir.is_dir():
            raise GridError(f"{self.run_dir} holds no generated truth")
        return {path.name[:-len(".field")]: read_field(path, grid) for path in sorted(truth_dir.glob("*.field"))}

    def load_record(self) -> RunRecord:
        """Rebuild a RunRecord from disk; per-cycle diagnostics live only in diagnostics.log"""
        cfg = self.load_config()
        series = self.load_series()
        summary = self.load_summary(len(series)) if len(series) else None
        snapshots = self.load_snapshots(cfg.grid.build())
        return RunRecord(cfg, config_hash(cfg), series, summary, snapshots, [])
