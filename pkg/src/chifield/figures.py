"""Report figures.

Every CLI subcommand that writes a delimited result also renders a
matching PNG next to it; these helpers hold the rendering so the command
layer stays thin.  The Agg backend is forced because the command line
never has a display, and every function returns the path it wrote.

All functions accept plain data (arrays, frames, dicts) rather than
figure/axis objects: they are end-of-pipeline sinks, not a plotting
toolkit.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .exceptions import DomainError  # noqa: E402
from .inference import VariogramEstimate  # noqa: E402
from .process import Site  # noqa: E402

__all__ = [
    "save_simulation_figure",
    "save_fit_figure",
    "save_prediction_figure",
    "save_scores_figure",
    "save_study_figure",
    "save_variogram_figure",
    "save_copula_figure",
    "save_tail_figure",
    "save_pipeline_figure",
]

_DPI = 150
_FIGSIZE = (7.0, 4.5)


def _finish(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def save_simulation_figure(
    path, sites: Sequence[Site], draws, max_reps: int = 5
) -> str:
    """Draw simulated fields: profiles along the line for 1-D sites, a
    color-coded scatter of the first replicate otherwise."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] != len(sites):
        raise DomainError("draws must be (n_sites, n_replicates) aligned with sites")
    coords = np.asarray([s.coords for s in sites], dtype=float)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    if coords.shape[1] == 1:
        x = coords[:, 0]
        order = np.argsort(x)
        for r in range(min(max_reps, draws.shape[1])):
            ax.plot(x[order], draws[order, r], lw=1.0, alpha=0.8,
                    label=f"replicate {r}")
        ax.set_xlabel("location")
        ax.set_ylabel("value")
        ax.legend(loc="best", fontsize=8)
    else:
        sc = ax.scatter(
            coords[:, 0], coords[:, 1], c=draws[:, 0], s=28, cmap="viridis"
        )
        fig.colorbar(sc, ax=ax, label="value (first replicate)")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title(f"{len(sites)} sites, {draws.shape[1]} replicate(s)")
    return _finish(fig, path)


def save_fit_figure(path, fit) -> str:
    """Point estimates with two-standard-error bars (when available)."""
    names = list(fit.theta_names)
    theta = np.asarray(fit.theta_hat, dtype=float)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    xs = np.arange(len(names))
    if fit.std_errors is not None:
        ax.errorbar(
            xs, theta, yerr=2.0 * np.asarray(fit.std_errors), fmt="o",
            capsize=4, color="tab:blue", ecolor="tab:gray",
        )
        ax.set_title("estimates with 2-standard-error bars")
    else:
        ax.plot(xs, theta, "o", color="tab:blue")
        ax.set_title("estimates (no variance available)")
    ax.axhline(0.0, color="0.8", lw=0.8, zorder=0)
    ax.set_xticks(xs)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("estimate")
    return _finish(fig, path)


def save_prediction_figure(path, frame: pd.DataFrame) -> str:
    """Observed-versus-predicted scatter when truth is present, MSPE
    profile over targets otherwise."""
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    if "observed" in frame.columns:
        obs = frame["observed"].to_numpy(dtype=float)
        pred = frame["point"].to_numpy(dtype=float)
        ax.scatter(obs, pred, s=22, alpha=0.7, color="tab:blue")
        lo = float(min(obs.min(), pred.min()))
        hi = float(max(obs.max(), pred.max()))
        pad = 0.05 * (hi - lo if hi > lo else 1.0)
        ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "--", color="0.5")
        ax.set_xlabel("observed")
        ax.set_ylabel("predicted")
        ax.set_title("prediction versus truth")
    else:
        ax.errorbar(
            np.arange(len(frame)),
            frame["point"],
            yerr=np.sqrt(np.clip(frame["mspe"].to_numpy(dtype=float), 0, None)),
            fmt="o",
            capsize=3,
            color="tab:blue",
            ecolor="tab:gray",
        )
        ax.set_xlabel("target")
        ax.set_ylabel("prediction ± root MSPE")
        ax.set_title("point predictions")
    return _finish(fig, path)


def save_scores_figure(path, scores: Mapping[str, Mapping[str, float]]) -> str:
    """Grouped bars of each accuracy metric per forecasting method."""
    methods = [m for m in scores if isinstance(scores[m], Mapping)]
    if not methods:
        raise DomainError("scores must map method names to metric dictionaries")
    metrics = ["rmse", "mae", "mean_crps"]
    present = [
        k for k in metrics if any(k in scores[m] for m in methods)
    ]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    width = 0.8 / len(methods)
    for i, method in enumerate(methods):
        vals = [scores[method].get(k, np.nan) for k in present]
        ax.bar(
            np.arange(len(present)) + i * width, vals, width=width,
            label=method,
        )
    ax.set_xticks(np.arange(len(present)) + 0.4 - width / 2)
    ax.set_xticklabels(present)
    ax.set_ylabel("score (lower is better)")
    ax.set_title("forecast accuracy")
    ax.legend()
    return _finish(fig, path)


def save_study_figure(
    path,
    table: pd.DataFrame,
    value_col: str,
    se_col: Optional[str] = None,
    ylabel: Optional[str] = None,
) -> str:
    """One line per shape value: the study metric against the range
    parameter, with error bars when a standard-error column is given."""
    for col in ("kappa", "phi", value_col):
        if col not in table.columns:
            raise DomainError(f"study table lacks a {col!r} column")
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for kappa, sub in table.groupby("kappa"):
        sub = sub.sort_values("phi")
        err = sub[se_col] if se_col and se_col in sub.columns else None
        ax.errorbar(
            sub["phi"], sub[value_col], yerr=err, marker="o", capsize=4,
            label=f"shape {kappa:g}",
        )
    ax.set_xlabel("range parameter")
    ax.set_ylabel(ylabel or value_col.replace("_", " "))
    ax.set_title("study summary")
    ax.legend()
    return _finish(fig, path)


def save_variogram_figure(
    path,
    estimate: VariogramEstimate,
    model_lags=None,
    model_semivariance=None,
    label: str = "fitted model",
) -> str:
    """Binned empirical semivariance dots, optionally with a model curve."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(
        estimate.bin_centers, estimate.semivariance, "o", color="tab:blue",
        label="empirical",
    )
    if model_lags is not None and model_semivariance is not None:
        ax.plot(model_lags, model_semivariance, "-", color="tab:red", label=label)
    ax.set_xlabel(
        "temporal lag" if estimate.axis == "temporal" else "spatial lag"
    )
    ax.set_ylabel("semivariance")
    ax.set_ylim(bottom=0.0)
    ax.set_title(f"{estimate.axis} semivariogram")
    ax.legend()
    return _finish(fig, path)


def save_copula_figure(path, z1, z2, density) -> str:
    """Filled contours of the pair dependence density on the normal-score
    scale."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    dens = np.asarray(density, dtype=float)
    if dens.shape != (z1.size, z2.size):
        raise DomainError("density must have shape (len(z1), len(z2))")
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    cs = ax.contourf(z1, z2, dens.T, levels=14, cmap="magma")
    fig.colorbar(cs, ax=ax, label="density")
    ax.set_xlabel("normal score, site 1")
    ax.set_ylabel("normal score, site 2")
    ax.set_title("pair dependence on the score scale")
    return _finish(fig, path)


def save_tail_figure(path, quantiles, chi, reference: Optional[float] = None) -> str:
    """Upper-tail co-exceedance curve; an optional horizontal reference
    marks the independence (or model) level."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(quantiles, chi, "o-", color="tab:blue", label="empirical")
    if reference is not None:
        ax.axhline(reference, color="0.5", ls="--", label="reference")
        ax.legend()
    ax.set_xlabel("quantile level")
    ax.set_ylabel("co-exceedance ratio")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("upper-tail dependence")
    return _finish(fig, path)


def save_pipeline_figure(path, frame: pd.DataFrame, max_stations: int = 6) -> str:
    """Held-out period per station: observed series with each model's
    day-ahead forecast overlaid."""
    if "station" not in frame.columns or "t" not in frame.columns:
        raise DomainError("pipeline frame needs station and t columns")
    stations = sorted(frame["station"].unique())[:max_stations]
    pred_cols = [c for c in frame.columns if c.startswith("pred_")]
    n = len(stations)
    fig, axes = plt.subplots(
        n, 1, figsize=(8.0, 2.2 * n), sharex=True, squeeze=False
    )
    for ax, lab in zip(axes[:, 0], stations):
        sub = frame[frame["station"] == lab].sort_values("t")
        ax.plot(sub["t"], sub["observed"], color="black", lw=1.2, label="observed")
        for col in pred_cols:
            ax.plot(
                sub["t"], sub[col], lw=0.9, alpha=0.85,
                label=col.removeprefix("pred_"),
            )
        ax.set_ylabel(lab, fontsize=8)
    axes[0, 0].legend(loc="upper right", fontsize=7, ncol=len(pred_cols) + 1)
    axes[-1, 0].set_xlabel("time")
    fig.suptitle("held-out forecasts by station", y=0.995)
    return _finish(fig, path)
