"""Delimited and JSON artifacts.

Datasets, simulation draws, predictions and diagnostic curves travel as
CSV; fitted models and score summaries as JSON.  All floating-point
values are written with 17 significant digits so that a round trip
through disk reproduces the numbers bit for bit.
"""

from __future__ import annotations

import json
import math
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .exceptions import DomainError
from .inference import Dataset, FitResult, ModelSpec, VariogramEstimate
from .process import Site

__all__ = [
    "save_dataset",
    "load_dataset",
    "save_fit",
    "load_fit",
    "save_predictions",
    "load_predictions",
    "save_simulations",
    "save_copula_grid",
    "save_variogram",
    "save_scores",
    "load_scores",
]

_FLOAT_FMT = "%.17g"


def _coord_columns(n_dims: int) -> list:
    if n_dims == 1:
        return ["x"]
    if n_dims == 2:
        return ["x", "y"]
    return [f"x{k + 1}" for k in range(n_dims)]


def save_dataset(dataset: Dataset, path) -> None:
    """Write one observation per row: optional station label, the
    coordinates, optional time stamp, the value, covariates, and the
    optional per-station scale factor."""
    n_dims = dataset.coords.shape[1]
    frame = {}
    if dataset.stations is not None:
        frame["station"] = dataset.stations
    for k, name in enumerate(_coord_columns(n_dims)):
        frame[name] = dataset.coords[:, k]
    if dataset.times is not None:
        frame["t"] = dataset.times
    frame["value"] = dataset.values
    for k in range(dataset.covariates.shape[1]):
        frame[f"cov_{k + 1}"] = dataset.covariates[:, k]
    if dataset.station_scale is not None:
        if dataset.stations is None:
            raise DomainError("station_scale requires station labels")
        frame["station_scale"] = [
            dataset.station_scale[s] for s in dataset.stations
        ]
    pd.DataFrame(frame).to_csv(path, index=False, float_format=_FLOAT_FMT)


def load_dataset(path, zero_offset: Optional[float] = None) -> Dataset:
    """Read a dataset written by :func:`save_dataset` (or shaped like
    one).

    ``zero_offset`` replaces exact-zero values by the given positive
    amount; without it zero values are rejected, since every supported
    marginal density requires strictly positive observations.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    coord_names = [c for c in ("x", "y") if c in df.columns] or sorted(
        (c for c in df.columns if len(c) > 1 and c[0] == "x" and c[1:].isdigit()),
        key=lambda c: int(c[1:]),
    )
    if not coord_names or "value" not in df.columns:
        raise DomainError(
            "dataset file must carry coordinate columns and a 'value' column"
        )
    values = df["value"].to_numpy(dtype=float)
    if zero_offset is not None:
        if not (zero_offset > 0.0):
            raise DomainError(f"zero_offset must be > 0, got {zero_offset}")
        values = np.where(values == 0.0, zero_offset, values)
    cov_names = sorted(
        (c for c in df.columns if c.startswith("cov_")),
        key=lambda c: int(c.split("_")[1]),
    )
    has_t = "t" in df.columns
    coords = df[coord_names].to_numpy(dtype=float)
    covs = (
        df[cov_names].to_numpy(dtype=float)
        if cov_names
        else np.empty((len(df), 0))
    )
    times = df["t"].to_numpy(dtype=float) if has_t else None
    sites = [
        Site(
            coords=tuple(coords[r]),
            time=None if times is None else float(times[r]),
            covariates=tuple(covs[r]),
        )
        for r in range(len(df))
    ]
    stations = df["station"].to_numpy() if "station" in df.columns else None
    station_scale = None
    if "station_scale" in df.columns:
        if stations is None:
            raise DomainError("station_scale column requires a station column")
        station_scale = {
            str(s): float(v)
            for s, v in zip(df["station"], df["station_scale"])
        }
    return Dataset(
        sites,
        values,
        stations=None if stations is None else stations.astype(str),
        station_scale=station_scale,
    )


def _fit_to_jsonable(fit: FitResult) -> dict:
    spec = fit.spec
    return {
        "estimates": fit.named_estimates(),
        "theta_names": list(fit.theta_names),
        "theta_hat": [float(v) for v in fit.theta_hat],
        "std_errors": (
            None
            if fit.std_errors is None
            else [float(v) for v in fit.std_errors]
        ),
        "loglik": float(fit.loglik),
        "plic": None if fit.plic is None else float(fit.plic),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "n_evaluations": int(fit.n_evaluations),
        "n_pairs": int(fit.n_pairs),
        "hessian": None if fit.hessian is None else fit.hessian.tolist(),
        "j_matrix": None if fit.j_matrix is None else fit.j_matrix.tolist(),
        "subsample_info": fit.subsample_info,
        "spec": {
            "marginal": spec.marginal,
            "correlation": spec.correlation,
            "n_covariates": spec.n_covariates,
            "nu_m": spec.nu_m,
            "phi_st": spec.phi_st,
        },
    }


def save_fit(fit: FitResult, path) -> None:
    """Serialize a fit (estimates, uncertainty, criterion, bookkeeping)
    to JSON."""
    with open(path, "w") as fh:
        json.dump(_fit_to_jsonable(fit), fh, indent=2)
        fh.write("\n")


def load_fit(path) -> FitResult:
    """Rebuild a :class:`~chifield.inference.FitResult` from JSON."""
    with open(path) as fh:
        doc = json.load(fh)
    spec = ModelSpec(**doc["spec"])
    return FitResult(
        theta_hat=np.asarray(doc["theta_hat"], dtype=float),
        theta_names=list(doc["theta_names"]),
        loglik=float(doc["loglik"]),
        converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]),
        n_evaluations=int(doc["n_evaluations"]),
        n_pairs=int(doc["n_pairs"]),
        spec=spec,
        std_errors=(
            None
            if doc["std_errors"] is None
            else np.asarray(doc["std_errors"], dtype=float)
        ),
        plic=None if doc["plic"] is None else float(doc["plic"]),
        hessian=(
            None
            if doc["hessian"] is None
            else np.asarray(doc["hessian"], dtype=float)
        ),
        j_matrix=(
            None
            if doc["j_matrix"] is None
            else np.asarray(doc["j_matrix"], dtype=float)
        ),
        subsample_info=doc["subsample_info"],
    )


def save_predictions(
    path,
    target_ids: Sequence,
    points,
    mspes,
    observed=None,
    crps=None,
) -> None:
    """Write one prediction per row: target id, point forecast, mean
    squared prediction error, and — when available — the realized value
    and its CRPS."""
    points = np.asarray(points, dtype=float)
    mspes = np.asarray(mspes, dtype=float)
    if len(target_ids) != points.size or points.shape != mspes.shape:
        raise DomainError("prediction columns must be aligned")
    frame = {"target_id": list(target_ids), "point": points, "mspe": mspes}
    if observed is not None:
        obs = np.asarray(observed, dtype=float)
        if obs.shape != points.shape:
            raise DomainError("observed column must align with points")
        frame["observed"] = obs
    if crps is not None:
        cr = np.asarray(crps, dtype=float)
        if cr.shape != points.shape:
            raise DomainError("crps column must align with points")
        frame["crps"] = cr
    pd.DataFrame(frame).to_csv(path, index=False, float_format=_FLOAT_FMT)


def load_predictions(path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    if "point" not in df.columns or "target_id" not in df.columns:
        raise DomainError("prediction file must carry target_id and point columns")
    return df


def save_simulations(path, sites: Sequence[Site], draws) -> None:
    """Write simulated fields in long format: one row per site and
    replicate, with the site's coordinates (and time stamp if any)."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] != len(sites):
        raise DomainError(
            "draws must be a (n_sites, n_replicates) array aligned with sites"
        )
    coords = np.asarray([s.coords for s in sites], dtype=float)
    n_dims = coords.shape[1]
    n, reps = draws.shape
    frame = {"site_id": np.repeat(np.arange(n), reps)}
    for k, name in enumerate(_coord_columns(n_dims)):
        frame[name] = np.repeat(coords[:, k], reps)
    if sites[0].time is not None:
        frame["t"] = np.repeat(
            np.asarray([s.time for s in sites], dtype=float), reps
        )
    frame["rep"] = np.tile(np.arange(reps), n)
    frame["value"] = draws.ravel()
    pd.DataFrame(frame).to_csv(path, index=False, float_format=_FLOAT_FMT)


def save_copula_grid(path, z1, z2, density) -> None:
    """Write a rank-scale dependence surface evaluated on a grid."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    dens = np.asarray(density, dtype=float)
    if dens.shape != (z1.size, z2.size):
        raise DomainError(
            "density must have shape (len(z1), len(z2)) for the output grid"
        )
    g1, g2 = np.meshgrid(z1, z2, indexing="ij")
    pd.DataFrame(
        {"z1": g1.ravel(), "z2": g2.ravel(), "density": dens.ravel()}
    ).to_csv(path, index=False, float_format=_FLOAT_FMT)


def save_variogram(path, estimate: VariogramEstimate) -> None:
    pd.DataFrame(
        {
            "lag": estimate.bin_centers,
            "semivariance": estimate.semivariance,
            "n_pairs": estimate.counts,
        }
    ).to_csv(path, index=False, float_format=_FLOAT_FMT)


def save_scores(path, scores: dict) -> None:
    """Write a metric dictionary (e.g. rmse/mae/mean_crps per method)
    as JSON, rejecting non-finite entries loudly rather than silently
    writing nulls."""

    def check(node):
        if isinstance(node, dict):
            for v in node.values():
                check(v)
        elif isinstance(node, (int, float)) and not math.isfinite(node):
            raise DomainError("scores contain non-finite values")

    check(scores)
    with open(path, "w") as fh:
        json.dump(scores, fh, indent=2)
        fh.write("\n")


def load_scores(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
