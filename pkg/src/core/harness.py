"""
Experiment harness
Scenario configuration files, truth and observation generation, the
assimilation engine that runs forecast/analysis cycles, and plot-ready
CSV output of recorded runs
"""
import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, TextIO, Tuple, Union

import numpy as np
from tqdm import tqdm

from src.config import DEFAULT_SCENARIO, PRESETS, SCHEMA_VERSION, TABLE1_VARIANTS
from src.core.assimilation import PATTERNS, AnalysisDiagnostics, ObservationModel, analysis_step, observe_truth
from src.core.ensemble import Ensemble, ensemble_mean, forecast, init_ensemble
from src.core.errors import (AssimilationToolkitError, ConfigError, CycleError, GridError, ParameterError,
                             SnapshotMissingError)
from src.core.grid import Field2D, Grid2D
from src.core.metrics import (MetricSeries, SummaryMetrics, format_metric_series, pattern_correlation,
                              pointwise_error, relative_errors, restrict_to_coarse, summarize)
from src.core.solver import (Burgers, LinearAdvection, advance, box_profile, initial_condition, make_model,
                             max_wave_speed)
from src.core.statistics import gradient_stats, pointwise_variance
from src.core.weighting import WeightingScheme
from src.utils.resources import memory_usage_mb
from src.utils.rng import RngStream
from src.utils.schema import check_schema_version

logger = logging.getLogger(__name__)

TIME_TOLERANCE = 1e-9
TRUTH_SOURCES = ("analytic", "reference")
STAT_KINDS = ("variance", "s_x", "s_y", "s_diag", "prior_mean", "posterior", "truth", "error")
PathLike = Union[str, Path]


# Scenario configuration

@dataclass(frozen=True)
class PdeSpec:
    kind: str
    a_x: float
    a_y: float
    initial: str


@dataclass(frozen=True)
class GridSpec:
    n_x: int
    n_y: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    closed: bool

    def build(self) -> Grid2D:
        return Grid2D(self.x_min, self.x_max, self.y_min, self.y_max, self.n_x, self.n_y, self.closed)


@dataclass(frozen=True)
class TimeSpec:
    dt: float
    t_final: float
    obs_interval: int


@dataclass(frozen=True)
class EnsembleSpec:
    K: int
    noise_std: float
    seed: int
    n_jobs: int


@dataclass(frozen=True)
class ObservationSpec:
    pattern: str
    gamma: float
    seed: int


@dataclass(frozen=True)
class TruthSpec:
    source: str
    refine: int


@dataclass(frozen=True)
class OutputSpec:
    snapshot_times: Tuple[float, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One twin experiment

    The time axis has n_steps = t_final / dt solver steps grouped into
    L_obs = n_steps / obs_interval assimilation cycles; both must be integers.
    """

    pde: PdeSpec
    grid: GridSpec
    time: TimeSpec
    ensemble: EnsembleSpec
    observation: ObservationSpec
    weighting: WeightingScheme
    truth: TruthSpec
    output: OutputSpec

    def __post_init__(self):
        t = self.time
        if not t.dt > 0:
            raise ConfigError(f"time.dt must be positive, got {t.dt!r}")
        if t.t_final < 0:
            raise ConfigError(f"time.t_final must be >= 0, got {t.t_final!r}")
        if t.obs_interval < 1:
            raise ConfigError(f"time.obs_interval must be >= 1, got {t.obs_interval!r}")
        n_steps = round(t.t_final / t.dt)
        if abs(n_steps * t.dt - t.t_final) > TIME_TOLERANCE * max(1.0, t.t_final):
            raise ConfigError(f"time.t_final = {t.t_final!r} is not a whole number of steps of {t.dt!r}")
        if n_steps % t.obs_interval:
            raise ConfigError(f"{n_steps} solver steps do not split into cycles of {t.obs_interval}")

        try:
            self.grid.build()
        except GridError as e:
            raise ConfigError(f"grid: {e}") from e
        if self.pde.kind not in (LinearAdvection.name, Burgers.name):
            raise ConfigError(f"unknown pde.kind {self.pde.kind!r}")
        try:
            box_profile(self.pde.initial, np.zeros(1), np.zeros(1))
        except ParameterError as e:
            raise ConfigError(f"pde.initial: {e}") from e
        if self.ensemble.K < 2:
            raise ConfigError(f"ensemble.K must be >= 2, got {self.ensemble.K}")
        if self.ensemble.noise_std < 0 or self.ensemble.n_jobs < 0:
            raise ConfigError("ensemble.noise_std and ensemble.n_jobs must be >= 0")
        if self.observation.pattern not in PATTERNS:
            raise ConfigError(f"unknown observation.pattern {self.observation.pattern!r}")
        if not self.observation.gamma > 0:
            raise ConfigError(f"observation.gamma must be positive, got {self.observation.gamma!r}")
        if self.truth.source not in TRUTH_SOURCES:
            raise ConfigError(f"unknown truth.source {self.truth.source!r}, expected one of {TRUTH_SOURCES}")
        if self.truth.refine < 1:
            raise ConfigError(f"truth.refine must be a positive integer, got {self.truth.refine!r}")
        if self.truth.source == "analytic" and self.pde.kind != LinearAdvection.name:
            raise ConfigError("an analytic truth exists only for linear advection")

        times = self.cycle_times()
        for s in self.output.snapshot_times:
            if not any(abs(s - tq) <= TIME_TOLERANCE for tq in times):
                raise ConfigError(f"snapshot time {s!r} is not an assimilation time")

    @property
    def n_steps(self) -> int:
        return round(self.time.t_final / self.time.dt)

    @property
    def L_obs(self) -> int:
        return self.n_steps // self.time.obs_interval

    def cycle_time(self, q: int) -> float:
        """Model time of cycle q (q = 0 is the initial time)"""
        return round(q * self.time.obs_interval * self.time.dt, 12)

    def cycle_times(self) -> List[float]:
        return [self.cycle_time(q) for q in range(1, self.L_obs + 1)]


def format_time(t: float) -> str:
    """Label used for snapshot files and plot requests"""
    return f"{t:.10g}"


def _parse_value(key: str, text: str, default):
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            return [float(v) for v in text.split(",") if v.strip()]
        return text
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from e


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def preset_values(name: str, variant: Optional[str] = None) -> Dict[str, object]:
    """Flat key -> value mapping of a preset, optionally with a weighting variant applied"""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}")
    values = dict(DEFAULT_SCENARIO)
    values.update(PRESETS[name])
    if variant is not None:
        if variant not in TABLE1_VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}, expected one of {sorted(TABLE1_VARIANTS)}")
        values.update(TABLE1_VARIANTS[variant])
    return values


def config_from_values(values: Dict[str, object]) -> ScenarioConfig:
    sections: Dict[str, Dict[str, object]] = {}
    for key, value in values.items():
        section, name = key.split(".", 1)
        if key == "weighting.scheme":
            name = "kind"
        sections.setdefault(section, {})[name] = value
    try:
        return ScenarioConfig(
            pde=PdeSpec(**sections["pde"]),
            grid=GridSpec(**sections["grid"]),
            time=TimeSpec(**sections["time"]),
            ensemble=EnsembleSpec(**sections["ensemble"]),
            observation=ObservationSpec(**sections["observation"]),
            weighting=WeightingScheme(**sections["weighting"]),
            truth=TruthSpec(**sections["truth"]),
            output=OutputSpec(tuple(float(t) for t in sections["output"]["snapshot_times"])),
        )
    except ParameterError as e:
        raise ConfigError(str(e)) from e
    except AssimilationToolkitError:
        raise
    except (KeyError, TypeError) as e:
        raise ConfigError(f"incomplete scenario: {e}") from e


def config_values(cfg: ScenarioConfig) -> Dict[str, object]:
    """Inverse of config_from_values"""
    values = {}
    for section in ("pde", "grid", "time", "ensemble", "observation", "weighting", "truth", "output"):
        for name, value in asdict(getattr(cfg, section)).items():
            key = "weighting.scheme" if (section, name) == ("weighting", "kind") else f"{section}.{name}"
            values[key] = list(value) if isinstance(value, tuple) else value
    return values


def preset(name: str, variant: Optional[str] = None) -> ScenarioConfig:
    return config_from_values(preset_values(name, variant))


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """
    Parse the key = value scenario format

    Keys not given take the value of the selected preset, or the built-in
    defaults when no preset key is present.

    Raises:
        ConfigError: Malformed line, unknown or duplicate key, bad value or
            unsupported schema_version
    """
    seen = set()
    raw: Dict[str, str] = {}
    schema = None
    preset_name = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        if key == "schema_version":
            schema = value
        elif key == "preset":
            preset_name = value
        elif key in DEFAULT_SCENARIO:
            raw[key] = value
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
    if schema is None:
        raise ConfigError(f"{source}: schema_version is missing")
    check_schema_version(schema)
    values = preset_values(preset_name) if preset_name is not None else dict(DEFAULT_SCENARIO)
    for key, value in raw.items():
        values[key] = _parse_value(key, value, DEFAULT_SCENARIO[key])
    return config_from_values(values)


def load_config(path: PathLike) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}") from e
    return parse_config(text, str(path))


def dump_config(cfg: ScenarioConfig) -> str:
    """Canonical text: schema_version first, then every key sorted"""
    values = config_values(cfg)
    lines = [f"schema_version = {SCHEMA_VERSION}"]
    lines += [f"{key} = {_format_value(values[key])}" for key in sorted(values)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


# Truth and observations

def _period(lo: float, hi: float, n: int, closed: bool) -> float:
    return hi - lo if closed else n * (hi - lo) / (n - 1)


def analytic_truth(cfg: ScenarioConfig, t: float, grid: Optional[Grid2D] = None) -> Field2D:
    """u0((x - a_x t) mod P_x, (y - a_y t) mod P_y) at the grid points"""
    grid = grid or cfg.grid.build()
    X, Y = grid.coordinates()
    xs = grid.x_min + np.mod(X - grid.x_min - cfg.pde.a_x * t, _period(grid.x_min, grid.x_max, grid.n_x, grid.closed))
    ys = grid.y_min + np.mod(Y - grid.y_min - cfg.pde.a_y * t, _period(grid.y_min, grid.y_max, grid.n_y, grid.closed))
    return Field2D(grid, box_profile(cfg.pde.initial, xs, ys))


def reference_truth(cfg: ScenarioConfig, refine: int, grid: Optional[Grid2D] = None) -> List[Field2D]:
    """Integrate on the refined grid with dt / refine and subsample at every cycle time"""
    if int(refine) != refine or refine < 1:
        raise ConfigError(f"refinement factor must be a positive integer, got {refine!r}")
    refine = int(refine)
    grid = grid or cfg.grid.build()
    fine = grid.refine(refine)
    model = make_model(cfg.pde.kind, cfg.pde.a_x, cfg.pde.a_y)
    dt = cfg.time.dt / refine
    steps = cfg.time.obs_interval * refine
    logger.info("reference truth on %dx%d, dt=%.3e, %d cycles", fine.n_x, fine.n_y, dt, cfg.L_obs)
    u = initial_condition(cfg.pde.initial, fine)
    truths = [restrict_to_coarse(u, grid, refine)]
    for _ in range(cfg.L_obs):
        u = advance(u, steps, dt, model)
        truths.append(restrict_to_coarse(u, grid, refine))
    return truths


def generate_truth(cfg: ScenarioConfig, grid: Optional[Grid2D] = None) -> List[Field2D]:
    """Truth at q = 0..L_obs (index 0 is the initial time)"""
    grid = grid or cfg.grid.build()
    if cfg.truth.source == "analytic":
        return [analytic_truth(cfg, cfg.cycle_time(q), grid) for q in range(cfg.L_obs + 1)]
    return reference_truth(cfg, cfg.truth.refine, grid)


def generate_observations(cfg: ScenarioConfig, truths: List[Field2D],
                          obs: Optional[ObservationModel] = None) -> List[np.ndarray]:
    """Noisy observations y_1..y_L drawn from the observation-noise stream only"""
    if obs is None:
        obs = ObservationModel.from_pattern(cfg.observation.pattern, cfg.observation.gamma, truths[0].grid)
    rng = RngStream(cfg.observation.seed)
    return [observe_truth(truths[q], obs, rng) for q in range(1, len(truths))]


# Runs

@dataclass
class RunRecord:
    """
    Everything one run produced

    Attributes:
        config: The effective scenario
        config_hash: SHA-256 of the canonical config text
        series: Per-cycle metrics
        summary: Burn-in averaged metrics, None for a run without cycles
        snapshots: Time label -> kind -> field
        diagnostics: One entry per analysis step
    """

    config: ScenarioConfig
    config_hash: str
    series: MetricSeries
    summary: Optional[SummaryMetrics]
    snapshots: Dict[str, Dict[str, Field2D]] = field(default_factory=dict)
    diagnostics: List[AnalysisDiagnostics] = field(default_factory=list)


CycleCallback = Callable[[int, float, Dict[str, float]], None]


class AssimilationEngine:
    """Runs the forecast/analysis cycles of one scenario"""

    def __init__(self, cfg: ScenarioConfig):
        """
        Args:
            cfg: Validated scenario configuration
        """
        self.cfg = cfg
        self.grid = cfg.grid.build()
        self.model = make_model(cfg.pde.kind, cfg.pde.a_x, cfg.pde.a_y)
        self.obs = ObservationModel.from_pattern(cfg.observation.pattern, cfg.observation.gamma, self.grid)
        self.snapshot_labels = {format_time(t) for t in cfg.output.snapshot_times}
        self.is_running = False
        self.on_cycle_completed: Optional[CycleCallback] = None
        self._reset()

    def _reset(self):
        self.cycle = 0
        self.truths: List[Field2D] = []
        self.observations: List[np.ndarray] = []
        self.ensemble: Optional[Ensemble] = None
        self.series = MetricSeries()
        self.snapshots: Dict[str, Dict[str, Field2D]] = {}
        self.diagnostics: List[AnalysisDiagnostics] = []

    def prepare(self):
        """Generate truth and observations and draw the initial ensemble"""
        self._reset()
        cfg = self.cfg
        self.truths = generate_truth(cfg, self.grid)
        self.observations = generate_observations(cfg, self.truths, self.obs)
        u0 = initial_condition(cfg.pde.initial, self.grid)
        self.ensemble = init_ensemble(u0, cfg.ensemble.K, cfg.ensemble.noise_std, RngStream(cfg.ensemble.seed))
        logger.info("prepared %s on %dx%d: K=%d, %d cycles, %s weighting, %d observations per cycle",
                    cfg.pde.kind, self.grid.n_x, self.grid.n_y, cfg.ensemble.K, cfg.L_obs,
                    cfg.weighting.label, self.obs.m_obs)

    def step(self) -> Dict[str, float]:
        """
        Run the next cycle

        Raises:
            CycleError: Any component failed; carries the 1-based cycle index
        """
        q = self.cycle + 1
        t = self.cfg.cycle_time(q)
        try:
            metrics = self._assimilate(q, t)
        except Exception as e:
            raise CycleError(q, e, t) from e
        self.cycle = q
        if self.on_cycle_completed:
            self.on_cycle_completed(q, t, metrics)
        return metrics

    def _assimilate(self, q: int, t: float) -> Dict[str, float]:
        cfg = self.cfg
        prior = forecast(self.ensemble, cfg.time.obs_interval, cfg.time.dt, self.model, cfg.ensemble.n_jobs)
        result = analysis_step(prior, self.observations[q - 1], self.obs, cfg.weighting)
        truth = self.truths[q]
        err_l1, err_l2 = relative_errors(result.posterior_mean, truth)
        pcorr = pattern_correlation(result.posterior_mean, truth)
        if math.isnan(pcorr):
            result.diagnostics.messages.append(f"pattern correlation undefined at t={format_time(t)}")
        self.series.append(t, err_l1, err_l2, pcorr)
        self.diagnostics.append(result.diagnostics)

        label = format_time(t)
        if label in self.snapshot_labels:
            self.snapshots[label] = self._snapshot(prior, result.posterior_mean, truth)
        self.ensemble = result.posterior_ensemble
        lam_x, lam_y = max_wave_speed(result.posterior_mean, self.model)
        logger.debug("cycle %d t=%s: err_l1=%.4e err_l2=%.4e pcorr=%.6f spread %.3e -> %.3e, "
                     "wave speed (%.3f, %.3f), seam gap %.2e, rss %.0f MiB",
                     q, label, err_l1, err_l2, pcorr, result.diagnostics.prior_spread,
                     result.diagnostics.posterior_spread, lam_x, lam_y, result.diagnostics.seam_gap,
                     memory_usage_mb())
        return {"err_l1": err_l1, "err_l2": err_l2, "pcorr": pcorr}

    def _snapshot(self, prior: Ensemble, posterior: Field2D, truth: Field2D) -> Dict[str, Field2D]:
        stats = gradient_stats(prior, self.cfg.weighting.theta, self.cfg.weighting.phi)
        return {
            "posterior": posterior,
            "truth": truth,
            "prior_mean": ensemble_mean(prior),
            "variance": pointwise_variance(prior),
            "s_x": stats.s_x,
            "s_y": stats.s_y,
            "s_diag": stats.s_diag,
        }

    def run(self, progress: bool = False) -> RunRecord:
        """Prepare and run every cycle; stop() from a callback ends the run early"""
        self.prepare()
        self.is_running = True
        try:
            with tqdm(total=self.cfg.L_obs, disable=not progress, unit="cycle",
                      desc=self.cfg.weighting.kind) as bar:
                while self.is_running and self.cycle < self.cfg.L_obs:
                    metrics = self.step()
                    bar.set_postfix(err_l1=f"{metrics['err_l1']:.2e}")
                    bar.update(1)
        finally:
            self.is_running = False
        return self.record()

    def stop(self):
        self.is_running = False

    def record(self) -> RunRecord:
        summary = summarize(self.series) if len(self.series) else None
        if summary is not None:
            logger.info("summary over cycles %d..%d: e_l1=%.4e e_l2=%.4e Pc=%.6f",
                        summary.q0, len(self.series), summary.e_l1, summary.e_l2, summary.Pc)
        return RunRecord(self.cfg, config_hash(self.cfg), self.series, summary,
                         dict(self.snapshots), list(self.diagnostics))


def run_scenario(cfg: ScenarioConfig, progress: bool = False,
                 on_cycle_completed: Optional[CycleCallback] = None) -> RunRecord:
    engine = AssimilationEngine(cfg)
    engine.on_cycle_completed = on_cycle_completed
    return engine.run(progress)


# Plot data

def parse_plot_request(what: str) -> Tuple[str, Dict[str, str]]:
    """
    Split a plot request into its kind and parameters

    metrics | cross_section:y=<v>,t=<t> | cross_section:x=<v>,t=<t> |
    stats_field:<kind>,t=<t>
    """
    kind, _, rest = what.strip().partition(":")
    params: Dict[str, str] = {}
    for part in filter(None, (p.strip() for p in rest.split(","))):
        if "=" in part:
            key, value = (s.strip() for s in part.split("=", 1))
            params[key] = value
        else:
            params["kind"] = part
    if kind == "metrics":
        if params:
            raise ParameterError("the metrics request takes no parameters")
    elif kind == "cross_section":
        if "t" not in params or len({"x", "y"} & params.keys()) != 1:
            raise ParameterError(f"expected cross_section:y=<value>,t=<time> or x=<value>, got {what!r}")
    elif kind == "stats_field":
        if "t" not in params or params.get("kind") not in STAT_KINDS:
            raise ParameterError(f"expected stats_field:<kind>,t=<time> with kind in {STAT_KINDS}, got {what!r}")
    else:
        raise ParameterError(f"unknown plot request {what!r}")
    return kind, params


def _snapshot_at(record: RunRecord, t_text: str) -> Dict[str, Field2D]:
    try:
        label = format_time(float(t_text))
    except ValueError as e:
        raise ParameterError(f"bad time {t_text!r}") from e
    if label not in record.snapshots:
        recorded = ", ".join(sorted(record.snapshots, key=float)) or "none"
        raise SnapshotMissingError(f"no snapshot recorded at t={label} (recorded: {recorded})")
    return record.snapshots[label]


def _stat_field(fields: Dict[str, Field2D], kind: str) -> Field2D:
    if kind == "error":
        return pointwise_error(fields["posterior"], fields["truth"])
    if kind not in fields:
        raise SnapshotMissingError(f"snapshot holds no {kind} field")
    return fields[kind]


def _line_index(coords: np.ndarray, value: float, spacing: float) -> int:
    index = int(np.argmin(np.abs(coords - value)))
    if abs(coords[index] - value) > 0.5 * spacing + TIME_TOLERANCE:
        raise ParameterError(f"{value!r} lies outside the grid")
    return index


def emit_plot_data(record: RunRecord, what: str, out: TextIO):
    """
    Write the requested plot data as CSV

    Raises:
        ParameterError: Malformed request
        SnapshotMissingError: The requested time was not recorded
    """
    kind, params = parse_plot_request(what)
    if kind == "metrics":
        out.write(format_metric_series(record.series))
        return
    fields = _snapshot_at(record, params["t"])
    writer = csv.writer(out, lineterminator="\n")
    if kind == "cross_section":
        posterior, truth = fields["posterior"], fields["truth"]
        grid = posterior.grid
        if "y" in params:
            j = _line_index(grid.y, float(params["y"]), grid.dy)
            axis, line = grid.x, (slice(None), j)
            writer.writerow(["x", "posterior", "truth", "error"])
        else:
            i = _line_index(grid.x, float(params["x"]), grid.dx)
            axis, line = grid.y, (i, slice(None))
            writer.writerow(["y", "posterior", "truth", "error"])
        for c, u, ut in zip(axis, posterior.values[line], truth.values[line]):
            writer.writerow([repr(float(c)), repr(float(u)), repr(float(ut)), repr(float(abs(u - ut)))])
        return
    f = _stat_field(fields, params["kind"])
    writer.writerow(["x", "y", "value"])
    for j, y in enumerate(f.grid.y):
        for i, x in enumerate(f.grid.x):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(f.values[i, j]))])
