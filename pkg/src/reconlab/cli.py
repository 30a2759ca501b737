"""Batch command-line front door; a thin client over the runner layer."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import io as rio
from .hierarchy import load_spec
from .runner import DEFAULT_KINDS, run_anova, run_fit, run_score, run_simulate

KIND_CHOICES = ["ml", "reml", "map", "shrink", "sreml", "par"]


def _lam_option(value: str):
    return value if value == "auto" else float(value)


def _load_inputs(obs, base, hierarchy):
    h = load_spec(hierarchy)
    return h, rio.read_panel(obs, base, h)


def _out_dir(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
def main():
    """Forecast reconciliation with uncertainty quantification."""


@main.command()
@click.option("--obs", required=True, type=click.Path(exists=True))
@click.option("--base", required=True, type=click.Path(exists=True))
@click.option("--hierarchy", required=True, type=click.Path(exists=True))
@click.option("--lambda", "lam", default="auto", show_default=True)
@click.option(
    "--variance",
    "variances",
    multiple=True,
    type=click.Choice(KIND_CHOICES),
    help="Covariance kinds to emit (repeatable).",
)
@click.option("--out", required=True, type=click.Path())
@click.option("--tol", default=1e-9, show_default=True, type=float)
def fit(obs, base, hierarchy, lam, variances, out, tol):
    """Fit reconciliation weights; write weights, standard errors and covariances."""
    h, panel = _load_inputs(obs, base, hierarchy)
    kinds = tuple(variances) or DEFAULT_KINDS
    result = run_fit(h, panel, lam=_lam_option(lam), kinds=kinds, coherency_tol=tol)
    out_path = _out_dir(out)
    rio.write_weights(out_path / "weights.csv", result.weights)
    rio.write_matrix(
        out_path / "weights_se.csv", result.weights_se, h.bottom_labels, h.labels
    )
    for kind, sigma in result.sigmas.items():
        rio.write_matrix(
            out_path / f"sigma_{kind.lower()}.csv",
            sigma.value,
            h.bottom_labels,
            h.bottom_labels,
        )
    with open(out_path / "fit.json", "w") as fh:
        json.dump(result.to_dict(), fh, indent=2)
    click.echo(f"fit: lambda={result.lam:.6g} -> {out_path}")


@main.command()
@click.option("--obs", required=True, type=click.Path(exists=True))
@click.option("--base", required=True, type=click.Path(exists=True))
@click.option("--hierarchy", required=True, type=click.Path(exists=True))
@click.option("--lambda", "lam", default="auto", show_default=True)
@click.option("--out", required=True, type=click.Path())
def anova(obs, base, hierarchy, lam, out):
    """Write the per-level variance-separation table."""
    h, panel = _load_inputs(obs, base, hierarchy)
    table = run_anova(h, panel, lam=_lam_option(lam))
    out_path = _out_dir(out)
    table.to_csv(out_path / "anova.csv")
    with open(out_path / "anova.json", "w") as fh:
        json.dump(
            {
                "df1": table.df1,
                "df2": table.df2,
                "lambda": table.lam,
                "rows": [r.__dict__ for r in table.rows],
            },
            fh,
            indent=2,
        )
    click.echo(f"anova: {len(table.rows)} rows (df {table.df1}, {table.df2}) -> {out_path}")


@main.command()
@click.option("--obs", required=True, type=click.Path(exists=True))
@click.option("--base", required=True, type=click.Path(exists=True))
@click.option("--test-obs", required=True, type=click.Path(exists=True))
@click.option("--test-base", required=True, type=click.Path(exists=True))
@click.option("--hierarchy", required=True, type=click.Path(exists=True))
@click.option("--lambda", "lam", default="auto", show_default=True)
@click.option(
    "--variance",
    "variances",
    multiple=True,
    type=click.Choice(KIND_CHOICES),
)
@click.option("--out", required=True, type=click.Path())
def score(obs, base, test_obs, test_base, hierarchy, lam, variances, out):
    """Fit on a training panel and score base vs reconciled on held-out data."""
    h = load_spec(hierarchy)
    train = rio.read_panel(obs, base, h)
    test = rio.read_panel(test_obs, test_base, h)
    kinds = tuple(variances) or DEFAULT_KINDS
    report = run_score(h, train, test, lam=_lam_option(lam), kinds=kinds)
    out_path = _out_dir(out)
    report.to_csv(out_path / "scores.csv")
    report.to_json(out_path / "scores.json")
    click.echo(f"score: {report.n_obs} held-out rows -> {out_path}")


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=None, type=int, help="Override the config seed.")
def simulate(config, out, seed):
    """Run the simulation study and write raw plus aggregated score curves."""
    cfg = rio.load_study_config(config)
    if seed is not None:
        cfg["seed"] = seed
    result = run_simulate(**cfg)
    out_path = _out_dir(out)
    result.to_csv(out_path / "study_raw.csv", out_path / "study_aggregated.csv")
    with open(out_path / "study.json", "w") as fh:
        json.dump(
            {
                "config": cfg,
                "records": list(result.records),
                "aggregated": result.aggregated().to_dict(orient="records"),
            },
            fh,
            indent=2,
        )
    click.echo(f"simulate: {len(result.records)} cells -> {out_path}")


@main.command()
@click.option("--obs", required=True, type=click.Path(exists=True))
@click.option("--base", required=True, type=click.Path(exists=True))
@click.option("--hierarchy", required=True, type=click.Path(exists=True))
@click.option("--lambda", "lam", default="auto", show_default=True)
@click.option("--out", default=None, type=click.Path(), help="Directory; stdout if omitted.")
def weights(obs, base, hierarchy, lam, out):
    """Fit and display (or write) the weight matrix with standard errors."""
    h, panel = _load_inputs(obs, base, hierarchy)
    result = run_fit(h, panel, lam=_lam_option(lam), kinds=())
    if out is None:
        click.echo(f"lambda = {result.lam:.6g}")
        header = "\t".join(["row", *h.labels])
        click.echo(header)
        for i, label in enumerate(h.bottom_labels):
            cells = "\t".join(f"{v:.4f}" for v in result.weights.P[i])
            click.echo(f"{label}\t{cells}")
    else:
        out_path = _out_dir(out)
        rio.write_weights(out_path / "weights.csv", result.weights)
        rio.write_matrix(
            out_path / "weights_se.csv", result.weights_se, h.bottom_labels, h.labels
        )
        click.echo(f"weights -> {out_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service exposing fit/anova/score/simulate."""
    import uvicorn

    uvicorn.run("reconlab.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
