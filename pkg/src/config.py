"""
Configuration constants for the structural ETKF toolkit
"""
from pathlib import Path

# Application info
APP_NAME = "Structural ETKF Toolkit"
APP_VERSION = "1.0.0"
SCHEMA_VERSION = "1.0"

# Run directories are created here unless --out is given
DEFAULT_RUNS_DIR = Path("runs")

# Every scenario key with its default; the default's type is the key's type
DEFAULT_SCENARIO = {
    "pde.kind": "linear_advection",
    "pde.a_x": 0.5,
    "pde.a_y": -1.0,
    "pde.initial": "advection_box",
    "grid.n_x": 101,
    "grid.n_y": 101,
    "grid.x_min": 0.0,
    "grid.x_max": 1.0,
    "grid.y_min": 0.0,
    "grid.y_max": 1.0,
    "grid.closed": True,
    "time.dt": 5e-3,
    "time.t_final": 2.0,
    "time.obs_interval": 5,
    "ensemble.K": 100,
    "ensemble.noise_std": 0.1,
    "ensemble.seed": 1,
    "ensemble.n_jobs": 1,
    "observation.pattern": "dense",
    "observation.gamma": 0.01,
    "observation.seed": 2,
    "weighting.scheme": "grad_diag",
    "weighting.alpha": 4.0,
    "weighting.theta": 1.0,
    "weighting.phi": 1.0,
    "weighting.beta_tilde": 1e-3,
    "weighting.mask": False,
    "weighting.d_thresh": 4.0,
    "weighting.ensemble_inflation": 1.0,
    "truth.source": "analytic",
    "truth.refine": 4,
    "output.snapshot_times": [2.0],
}

# Scenario presets, as overrides of DEFAULT_SCENARIO
PRESETS = {
    "advection": {},
    "burgers_dense": {
        "pde.kind": "burgers",
        "pde.initial": "burgers_box",
        "time.dt": 2e-3,
        "truth.source": "reference",
        "output.snapshot_times": [1.0, 2.0],
    },
    "burgers_sparse": {
        "pde.kind": "burgers",
        "pde.initial": "burgers_box",
        "time.dt": 2e-3,
        "observation.pattern": "checkerboard",
        "observation.gamma": 0.005,
        "weighting.scheme": "grad_banded",
        "weighting.beta_tilde": 1e-4,
        "weighting.mask": True,
        "truth.source": "reference",
        "output.snapshot_times": [1.0, 2.0],
    },
}

# Weighting variants compared on the advection scenario
TABLE1_VARIANTS = {
    "cov_diag_a4": {"weighting.scheme": "cov_diag", "weighting.alpha": 4.0},
    "cov_diag_a6": {"weighting.scheme": "cov_diag", "weighting.alpha": 6.0},
    "grad_diag_t0.5_p1": {"weighting.scheme": "grad_diag", "weighting.theta": 0.5,
                          "weighting.phi": 1.0, "weighting.beta_tilde": 1e-4},
    "grad_diag_t0.5_p2": {"weighting.scheme": "grad_diag", "weighting.theta": 0.5,
                          "weighting.phi": 2.0, "weighting.beta_tilde": 1e-3},
    "grad_diag_t1_p1": {"weighting.scheme": "grad_diag", "weighting.theta": 1.0,
                        "weighting.phi": 1.0, "weighting.beta_tilde": 1e-3},
    "grad_diag_t1_p2": {"weighting.scheme": "grad_diag", "weighting.theta": 1.0,
                        "weighting.phi": 2.0, "weighting.beta_tilde": 1e-1},
    "grad_diag_t2_p1": {"weighting.scheme": "grad_diag", "weighting.theta": 2.0,
                        "weighting.phi": 1.0, "weighting.beta_tilde": 1e-1},
    "grad_diag_t2_p2": {"weighting.scheme": "grad_diag", "weighting.theta": 2.0,
                        "weighting.phi": 2.0, "weighting.beta_tilde": 1e2},
}
