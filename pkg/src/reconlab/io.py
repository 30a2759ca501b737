"""CSV and JSON interchange for panels, weights and reports.

File schemas: ``obs.csv`` has a ``time`` column followed by one column per
bottom label; ``base.csv`` has ``time`` plus one column per node label in
hierarchy row order.  The ``time`` column is an opaque sort key.  Floats are
written with 17 significant digits so a write/read round trip is bit exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .hierarchy import Hierarchy
from .panel import ForecastPanel
from .reconcile import ReconWeights

__all__ = [
    "read_panel",
    "write_panel",
    "write_matrix",
    "read_matrix",
    "write_weights",
    "read_weights",
    "load_study_config",
]

FLOAT_FORMAT = "%.17g"


def _read_aligned(path, labels: tuple[str, ...], what: str) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    if "time" not in df.columns:
        raise ValueError(f"{what} file {path} is missing the 'time' column")
    for lab in labels:
        if lab not in df.columns:
            raise ValueError(f"{what} file {path} is missing column {lab!r}")
    df = df.sort_values("time", kind="stable").reset_index(drop=True)
    block = df[list(labels)]
    bad = block.columns[block.isna().any()].tolist()
    if bad:
        raise ValueError(f"{what} file {path} has missing values in columns {bad}")
    return df[["time", *labels]]


def read_panel(obs_path, base_path, h: Hierarchy) -> ForecastPanel:
    """Load an aligned observation/base-forecast panel for a hierarchy."""
    obs = _read_aligned(obs_path, h.bottom_labels, "observations")
    base = _read_aligned(base_path, h.labels, "base forecasts")
    if len(obs) != len(base) or list(obs["time"]) != list(base["time"]):
        raise ValueError(
            f"time columns of {obs_path} and {base_path} do not align "
            f"({len(obs)} vs {len(base)} rows)"
        )
    return ForecastPanel(
        Y=obs[list(h.bottom_labels)].to_numpy(dtype=float),
        Yhat=base[list(h.labels)].to_numpy(dtype=float),
        times=tuple(obs["time"]),
    )


def write_panel(panel: ForecastPanel, h: Hierarchy, obs_path, base_path) -> None:
    times = list(panel.times) if panel.times else list(range(panel.t_obs))
    obs = pd.DataFrame(panel.Y, columns=list(h.bottom_labels))
    obs.insert(0, "time", times)
    obs.to_csv(obs_path, index=False, float_format=FLOAT_FORMAT)
    base = pd.DataFrame(panel.Yhat, columns=list(h.labels))
    base.insert(0, "time", times)
    base.to_csv(base_path, index=False, float_format=FLOAT_FORMAT)


def write_matrix(path, matrix, row_labels, col_labels) -> None:
    df = pd.DataFrame(np.asarray(matrix, dtype=float), columns=list(col_labels))
    df.insert(0, "row", list(row_labels))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_matrix(path) -> tuple[np.ndarray, list[str], list[str]]:
    df = pd.read_csv(path, float_precision="round_trip")
    if "row" not in df.columns:
        raise ValueError(f"matrix file {path} is missing the 'row' column")
    rows = [str(r) for r in df["row"]]
    cols = [c for c in df.columns if c != "row"]
    return df[cols].to_numpy(dtype=float), rows, cols


def write_weights(path, weights: ReconWeights) -> None:
    h = weights.hierarchy
    write_matrix(path, weights.P, h.bottom_labels, h.labels)


def read_weights(path, h: Hierarchy, lam: float = 0.0, tol: float = 1e-9) -> ReconWeights:
    """Load a weight matrix; the coherency constraint is re-checked on load."""
    p, rows, cols = read_matrix(path)
    if cols != list(h.labels) or rows != list(h.bottom_labels):
        raise ValueError(f"weight file {path} does not match the hierarchy labels")
    return ReconWeights(
        P=p, hierarchy=h, lam=lam, sigma_kind="loaded", coherency_tol=tol
    )


def load_study_config(path) -> dict:
    """Parse a simulation-study config JSON into plain keyword arguments.

    Recognized keys: ``m``, ``a_diag``, ``a_offdiag``, ``t_grid``,
    ``t_test``, ``reps``, ``seed``, ``estimators``.
    """
    with open(path) as fh:
        raw = json.load(fh)
    cfg = {
        "m": int(raw.get("m", 4)),
        "a_diag": float(raw.get("a_diag", 0.6)),
        "a_offdiag": float(raw.get("a_offdiag", 0.1)),
        "t_grid": [int(t) for t in raw.get("t_grid", [120])],
        "t_test": None if raw.get("t_test") is None else int(raw["t_test"]),
        "reps": int(raw.get("reps", 50)),
        "seed": int(raw.get("seed", 0)),
        "estimators": list(raw.get("estimators", ["SHRINK", "SREML", "PAR", "BASE"])),
    }
    if not cfg["t_grid"]:
        raise ValueError(f"study config {Path(path).name}: empty t_grid")
    return cfg
