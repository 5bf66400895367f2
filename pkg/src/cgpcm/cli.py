"""Command-line harness: ``cgpcm sample|fit|predict|eval|learning-curve``.

Every command writes into ``--out``. Series are CSV with a header row,
metrics and metadata are JSON, matrices are little-endian float64 blobs.
``CGPCM_THREADS`` caps BLAS threads and tensor-assembly workers.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import artifact, pipeline
from .moments import assemble_tensors
from .predict import mll, predict_filter, predict_function, predict_kernel, predict_psd, smse
from .prior import default_lags
from .synthetic import ROUGHNESS_THRESHOLD, second_difference_ratio

THREADS_ENV = "CGPCM_THREADS"
_LC_KEYS = ("lc_blocks", "lc_block", "lc_draws")


def n_threads() -> int | None:
    """Thread cap from ``CGPCM_THREADS``; ``None`` when unset."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise click.UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise click.UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _workers():
    return n_threads() or 1


def _load_config(path):
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise click.BadParameter(f"cannot read config {path}: {err}", param_hint="--config")
    if not isinstance(d, dict):
        raise click.BadParameter("config must be a JSON object", param_hint="--config")
    return d


def _build(cls, d, **overrides):
    d = dict(d)
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls.from_dict(d)
    except pipeline.ConfigError as err:
        raise click.UsageError("\n".join(["invalid configuration:"] + [f"  - {p}" for p in err.problems]))


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_series(path):
    try:
        return artifact.read_series(path)
    except (OSError, ValueError) as err:
        raise click.UsageError(str(err))


def _load_fit(path):
    try:
        return pipeline.load_fit(path)
    except (OSError, ValueError, KeyError) as err:
        raise click.UsageError(f"cannot load artifact {path}: {err}")


def _summary_columns(s, x_name, scale=1.0):
    return {x_name: s.grid, "mean": s.mean * scale, "sd": s.sd * scale,
            "lower": s.lower * scale, "upper": s.upper * scale}


def _svg(path, cols, x_name, title, extra=None):
    from .plots import line_plot

    series = [("mean", cols[x_name], cols["mean"])] + list(extra or [])
    line_plot(path, series, title=title, band=(cols[x_name], cols["lower"], cols["upper"]), xlabel=x_name)


seed_option = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                           help="Random seed (overrides the config).")
config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                             help="JSON file of settings.")
out_option = click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
mode_option = click.option("--mode", type=click.Choice(["causal", "acausal"]), default=None)
scheme_option = click.option("--scheme", type=click.Choice(list(pipeline.SCHEMES)), default=None)
svg_option = click.option("--svg", is_flag=True, help="Also render static SVG plots.")


@click.group()
@click.version_option(package_name="cgpcm")
def main():
    """Causal and acausal Gaussian process convolution models."""


@main.command()
@config_option
@seed_option
@out_option
@mode_option
@svg_option
def sample(config_path, seed, out, mode, svg):
    """Draw a synthetic series; writes data.csv and truth.json."""
    cfg = _build(pipeline.SampleConfig, _load_config(config_path), seed=seed, mode=mode)
    with threadpool_limits(n_threads()):
        t, y, truth = pipeline.simulate(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    artifact.write_csv(out / "data.csv", {"t": t, "y": y})
    ratio = second_difference_ratio(y)
    truth["roughness"] = {"second_difference_ratio": ratio, "smooth": bool(ratio > ROUGHNESS_THRESHOLD)}
    _write_json(out / "truth.json", truth)
    if svg:
        from .plots import line_plot

        line_plot(out / "data.svg", [("y", t, y)], title="sample", xlabel="t")
    click.echo(json.dumps({"out": str(out), "n": int(t.size), "seed": cfg.seed}))


@main.command()
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@config_option
@seed_option
@out_option
@mode_option
@scheme_option
def fit(data, config_path, seed, out, mode, scheme):
    """Fit a model to a ``t,y`` CSV; writes an artifact directory."""
    cfg = _build(pipeline.FitConfig, _load_config(config_path), seed=seed, mode=mode, scheme=scheme)
    t, y = _read_series(data)
    with threadpool_limits(n_threads()):
        try:
            result = pipeline.fit(t, y, cfg, n_workers=_workers())
        except (ValueError, RuntimeError) as err:
            raise click.ClickException(f"fit failed: {err}")
    digest = pipeline.save_fit(result, out)
    report = {
        "out": str(out),
        "hash": digest,
        "final_elbo": result.final_elbo,
        "converged": result.mf.converged,
        "message": result.mf.message,
        "hyperparams": result.mf.hp.to_dict(),
    }
    if result.smf is not None:
        report["smf_mc_elbo"] = list(result.smf.mc_elbo)
    click.echo(json.dumps(report, sort_keys=True))


def _grid_from(path, n, span):
    if path is None:
        return np.linspace(span[0], span[1], n)
    cols = artifact.read_csv(path, required=["t"])
    g = cols["t"]
    if g.size < 1 or np.any(np.diff(g) <= 0):
        raise click.UsageError(f"{path}: grid times must be strictly increasing")
    return g


@main.command()
@click.argument("model", type=click.Path(exists=True, file_okay=False))
@out_option
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV with a 't' column of prediction times (default: uniform over the data).")
@click.option("--n-grid", type=click.IntRange(2, None), default=400, show_default=True)
@click.option("--observed", is_flag=True, help="Include observation noise in the bands for f.")
@seed_option
@svg_option
def predict(model, out, grid_path, n_grid, observed, seed, svg):
    """Posterior mean and +-2 sd bands for f, the kernel, the filter and the PSD."""
    res = _load_fit(model)
    obs, layout = res.obs, res.layout
    hp = res.mf.hp
    grid = _grid_from(grid_path, n_grid, (obs.times[0], obs.times[-1]))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with threadpool_limits(n_threads()):
        post = res.posterior
        try:
            gt = assemble_tensors(grid, layout, hp, n_workers=_workers())
            train = res.ensure_tensors() if res.smf is not None else None
            f = predict_function(gt, post, train, obs, observed=observed)
        except ValueError as err:
            raise click.ClickException(f"grid/artifact mismatch: {err}")
        lags = default_lags(res.spec.tau_w)
        k = predict_kernel(lags, post, layout)
        tau = np.linspace(layout.t_u[0], layout.t_u[-1], 301)
        h = predict_filter(tau, post, layout)
        p = predict_psd(lags, post, layout, seed=0 if seed is None else seed)
    sc = obs.scale
    f_cols = _summary_columns(f, "t", sc)
    for key in ("mean", "lower", "upper"):
        f_cols[key] = f_cols[key] + obs.offset
    files = {
        "f.csv": (f_cols, "t"),
        "kernel.csv": (_summary_columns(k, "lag", sc**2), "lag"),
        "filter.csv": (_summary_columns(h, "tau", sc), "tau"),
        "psd.csv": (_summary_columns(p, "freq", sc**2), "freq"),
    }
    for name, (cols, x_name) in files.items():
        artifact.write_csv(out / name, cols)
        if svg:
            extra = [("data", obs.times, obs.to_raw(obs.values))] if name == "f.csv" else None
            _svg(out / name.replace(".csv", ".svg"), cols, x_name, name[:-4], extra)
    meta = {
        "artifact": str(model),
        "posterior": "smf" if res.smf is not None else "mf",
        "observed": observed,
        "kernel_slope_at_origin": k.extra["slope_at_origin"] * sc**2,
        "psd_negative_bins": p.extra["n_negative"],
        "units": "original data units",
    }
    _write_json(out / "predict.json", meta)
    click.echo(json.dumps({"out": str(out), "files": sorted(files)}))


@main.command(name="eval")
@click.argument("model", type=click.Path(exists=True, file_okay=False))
@click.argument("heldout", type=click.Path(exists=True, dir_okay=False))
@out_option
@click.option("--latent", is_flag=True, help="Score MLL with the latent variance of f instead of y.")
def eval_cmd(model, heldout, out, latent):
    """SMSE, MLL and final ELBO on a held-out ``t,y`` CSV."""
    res = _load_fit(model)
    t, y = _read_series(heldout)
    obs = res.obs
    with threadpool_limits(n_threads()):
        try:
            gt = assemble_tensors(t, res.layout, res.mf.hp, n_workers=_workers())
            train = res.ensure_tensors() if res.smf is not None else None
            f = predict_function(gt, res.posterior, train, obs, observed=not latent)
        except ValueError as err:
            raise click.ClickException(f"grid/artifact mismatch: {err}")
    mean, var = obs.to_raw(f.mean, f.var)
    metrics = {
        "n": int(t.size),
        "smse": smse(mean, y),
        "mll": mll(mean, var, y),
        "final_elbo": res.final_elbo,
        "variance": "latent" if latent else "observed",
    }
    if res.smf is not None:
        metrics["smf_mc_elbo"] = res.smf.mc_elbo[0]
        metrics["smf_mc_elbo_se"] = res.smf.mc_elbo[1]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", metrics)
    width = max(len(k) for k in metrics)
    lines = [f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}" for k, v in metrics.items()]
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    click.echo("\n".join(lines))


@main.command(name="learning-curve")
@click.argument("source", type=click.Path(exists=True))
@config_option
@seed_option
@out_option
@mode_option
@svg_option
def learning_curve(source, config_path, seed, out, mode, svg):
    """Bound against wall time for unsaturated MF, saturated MF and SMF.

    SOURCE is a ``t,y`` CSV or a fitted artifact directory (whose data and
    configuration are reused).
    """
    d = _load_config(config_path)
    lc = {k: d.pop(k) for k in _LC_KEYS if k in d}
    src = Path(source)
    if src.is_dir():
        res = _load_fit(src)
        t, y = res.obs.times, res.obs.to_raw(res.obs.values)
        d = {**asdict(res.config), **d}
    else:
        t, y = _read_series(src)
    cfg = _build(pipeline.FitConfig, d, seed=seed, mode=mode)
    with threadpool_limits(n_threads()):
        curves, states = pipeline.learning_curves(
            t, y, cfg, smf_blocks=int(lc.get("lc_blocks", 5)), smf_block=int(lc.get("lc_block", 200)),
            smf_draws=int(lc.get("lc_draws", 300)), n_workers=_workers(),
        )
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names, secs, vals, ses = [], [], [], []
    for scheme, series in curves.items():
        for s_, v, e in series:
            names.append(scheme)
            secs.append(s_)
            vals.append(v)
            ses.append(e)
    artifact.write_csv(out / "curves.csv", {"scheme": np.array(names), "seconds": secs, "elbo": vals, "se": ses})
    final = {k: {"seconds": v[-1][0], "elbo": v[-1][1], "se": v[-1][2]} for k, v in curves.items() if v}
    sat, uns, smf_ = final.get("mf"), final.get("mf-unsaturated"), final.get("smf")
    summary = {
        "final": final,
        "saturated_ge_unsaturated": bool(sat and uns and sat["elbo"] >= uns["elbo"]),
        "smf_ge_saturated_minus_3se": bool(sat and smf_ and smf_["elbo"] >= sat["elbo"] - 3 * smf_["se"]),
        "config": asdict(cfg),
    }
    _write_json(out / "summary.json", summary)
    if svg:
        from .plots import line_plot

        series = [(k, [p[0] for p in v], [p[1] for p in v]) for k, v in curves.items() if v]
        line_plot(out / "curves.svg", series, title="bound against wall time", xlabel="seconds", ylabel="bound")
    click.echo(json.dumps(final, sort_keys=True))


if __name__ == "__main__":
    main()
