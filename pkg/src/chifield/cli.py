"""Command line driver.

One executable, eight subcommands: ``simulate``, ``fit``, ``predict``,
``score``, ``study-table1``, ``study-table2``, ``pipeline-wind`` and
``diagnostics``.  Every subcommand reads plain CSV/JSON, writes plain
CSV/JSON at full precision, and renders a PNG next to each tabular
artifact so a run leaves both machine-readable and human-readable
output behind.

Configuration comes from flags, optionally layered over a JSON config
file (``--config``); explicit flags win.  Every stochastic subcommand
requires ``--seed`` and is deterministic given it.

Exit codes: 0 on success, 2 for configuration problems (bad flags,
unreadable or malformed inputs), 3 for numerical failures
(non-convergence, singular systems, domain violations during
computation).  Failures are reported as a single JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import dataio, figures
from .correlation import (
    Exponential,
    Matern,
    SpaceTimeGW,
    copula_density_normal_scale,
    corr,
    Lag,
    weibull_corr,
    weibull_nu,
    weibull_sigma2,
)
from .exceptions import ChifieldError, DomainError, NotConvergedError
from .inference import (
    Dataset,
    ModelSpec,
    WeightSpec,
    empirical_semivariogram,
    fit_mwpl,
    harmonic_design,
    normal_scores,
    tail_dependence_diagnostic,
)
from .predict import (
    crps_loggaussian,
    crps_weibull,
    loggaussian_krige,
    score as score_predictions,
    simple_krige,
)
from .process import (
    LogGaussianFieldModel,
    Site,
    WeibullFieldModel,
    mean_values,
    simulate_loggaussian,
    simulate_weibull,
)
from .studies import (
    run_table1_study,
    run_table2_study,
    run_wind_pipeline,
    synthetic_wind_dataset,
)

__all__ = ["main"]


class UsageError(Exception):
    """A problem with the requested configuration or its input files."""


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems through the JSON error channel
    instead of printing usage and exiting on its own."""

    def error(self, message):  # noqa: D102 (argparse hook)
        raise UsageError(message)


def _fail(kind: str, exc: BaseException, code: int) -> int:
    payload = {
        "error": kind,
        "type": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
    }
    print(json.dumps(payload), file=sys.stderr)
    return code


def _float_list(text: str) -> List[float]:
    try:
        return [float(tok) for tok in str(text).split(",") if tok != ""]
    except ValueError as err:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from err


def _str_list(text: str) -> List[str]:
    return [tok.strip() for tok in str(text).split(",") if tok.strip()]


def _fixed_or_free(text) -> Optional[float]:
    if text is None or text == "free":
        return None
    try:
        return float(text)
    except (TypeError, ValueError) as err:
        raise UsageError(
            f"expected a number or 'free', got {text!r}"
        ) from err


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise UsageError(f"cannot read config file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return doc


def _merge_config(ns: argparse.Namespace, defaults: dict) -> dict:
    """Layer flag values over config-file values over defaults.

    The parsers register every option with SUPPRESS, so ``ns`` only
    carries what the user typed; anything else falls through to the
    config file and then to the subcommand's default table.
    """
    given = dict(vars(ns))
    merged = dict(defaults)
    config_path = given.get("config")
    if config_path is not None:
        doc = _load_config_file(config_path)
        unknown = set(doc) - set(defaults)
        if unknown:
            raise UsageError(
                f"config file keys not understood: {sorted(unknown)}"
            )
        merged.update(doc)
    skip = {"func", "defaults", "subcommand", "config"}
    merged.update({k: v for k, v in given.items() if k not in skip})
    return merged


def _require(cfg: dict, *names: str) -> None:
    for name in names:
        if cfg.get(name) is None:
            flag = "--" + name.replace("_", "-")
            raise UsageError(f"{flag} is required")


def _out_dir(cfg: dict) -> str:
    path = cfg["out_dir"]
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as err:
        raise UsageError(f"cannot create output directory {path}: {err}") from err
    return path


def _threads_note(cfg: dict) -> None:
    n = cfg.get("threads")
    if n is not None and int(n) < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")


def _emit(cfg: dict, message: str) -> None:
    if not cfg.get("quiet"):
        print(message)


# --------------------------------------------------------------------------
# model construction from config values


def _correlation_from_cfg(cfg: dict):
    family = cfg["correlation"]
    if family == "exponential":
        _require(cfg, "phi")
        return Exponential(phi=float(cfg["phi"]))
    if family == "matern":
        _require(cfg, "phi", "nu_m")
        return Matern(phi=float(cfg["phi"]), nu_m=float(cfg["nu_m"]))
    if family == "spacetime":
        _require(cfg, "phi_s", "phi_t")
        phi_st = _fixed_or_free(cfg.get("phi_st", 0.0))
        if phi_st is None:
            raise UsageError(
                "simulation needs a numeric interaction value, not 'free'"
            )
        return SpaceTimeGW(
            phi_s=float(cfg["phi_s"]), phi_t=float(cfg["phi_t"]), phi_st=phi_st
        )
    raise UsageError(f"unknown correlation family {family!r}")


def _field_model_from_cfg(cfg: dict, n_covariates: int):
    beta = cfg["beta"]
    if isinstance(beta, str):
        beta = _float_list(beta)
    beta = tuple(float(b) for b in beta)
    if len(beta) != 1 + n_covariates:
        raise UsageError(
            f"--beta needs 1 + {n_covariates} entries for this site set, "
            f"got {len(beta)}"
        )
    corr_model = _correlation_from_cfg(cfg)
    if cfg["marginal"] == "weibull":
        _require(cfg, "kappa")
        return WeibullFieldModel(
            kappa=float(cfg["kappa"]), beta=beta, corr=corr_model
        )
    if cfg["marginal"] == "loggaussian":
        _require(cfg, "sigma2")
        return LogGaussianFieldModel(
            sigma2=float(cfg["sigma2"]), beta=beta, corr=corr_model
        )
    raise UsageError(f"unknown marginal family {cfg['marginal']!r}")


def _sites_from_cfg(cfg: dict) -> List[Site]:
    grid = cfg.get("grid")
    sites_path = cfg.get("sites")
    if (grid is None) == (sites_path is None):
        raise UsageError("exactly one of --grid or --sites is required")
    if grid is not None:
        shape = [int(v) for v in _float_list(str(grid))]
        if any(v < 2 for v in shape) or len(shape) not in (1, 2):
            raise UsageError(
                f"--grid takes N or NX,NY with each count >= 2, got {grid!r}"
            )
        if len(shape) == 1:
            return [Site(coords=(p,)) for p in np.linspace(0.0, 1.0, shape[0])]
        xs = np.linspace(0.0, 1.0, shape[0])
        ys = np.linspace(0.0, 1.0, shape[1])
        return [Site(coords=(float(x), float(y))) for x in xs for y in ys]
    frame = _read_table(sites_path)
    sites, _, _, _ = _sites_from_frame(frame, sites_path)
    return sites


def _read_table(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}") from err
    except Exception as err:  # malformed CSV
        raise UsageError(f"cannot parse {path} as CSV: {err}") from err


def _sites_from_frame(frame: pd.DataFrame, label):
    """Sites plus bookkeeping columns from a targets/sites table."""
    coord_names = [c for c in ("x", "y") if c in frame.columns] or sorted(
        (
            c
            for c in frame.columns
            if len(c) > 1 and c[0] == "x" and c[1:].isdigit()
        ),
        key=lambda c: int(c[1:]),
    )
    if not coord_names:
        raise UsageError(f"{label} lacks coordinate columns (x, y or x1..xk)")
    cov_names = sorted(
        (c for c in frame.columns if c.startswith("cov_")),
        key=lambda c: int(c.split("_")[1]),
    )
    coords = frame[coord_names].to_numpy(dtype=float)
    covs = (
        frame[cov_names].to_numpy(dtype=float)
        if cov_names
        else np.empty((len(frame), 0))
    )
    times = (
        frame["t"].to_numpy(dtype=float) if "t" in frame.columns else None
    )
    sites = [
        Site(
            coords=tuple(coords[r]),
            time=None if times is None else float(times[r]),
            covariates=tuple(covs[r]),
        )
        for r in range(len(frame))
    ]
    ids = (
        frame["target_id"].astype(str).tolist()
        if "target_id" in frame.columns
        else [str(r) for r in range(len(frame))]
    )
    observed = (
        frame["observed"].to_numpy(dtype=float)
        if "observed" in frame.columns
        else None
    )
    return sites, ids, observed, times


def _with_harmonics(dataset: Dataset, q: Optional[int], period: float) -> Dataset:
    if not q:
        return dataset
    if dataset.times is None:
        raise UsageError("--harmonics needs a time column in the data")
    return dataset.with_covariates(harmonic_design(dataset.times, int(q), period))


def _load_fit(path):
    try:
        return dataio.load_fit(path)
    except OSError as err:
        raise UsageError(f"cannot read fit file {path}: {err}") from err
    except (KeyError, ValueError, TypeError) as err:
        raise UsageError(f"fit file {path} is malformed: {err}") from err


def _load_data(cfg: dict, key: str = "data") -> Dataset:
    _require(cfg, key)
    try:
        return dataio.load_dataset(cfg[key], zero_offset=cfg.get("zero_offset"))
    except OSError as err:
        raise UsageError(f"cannot read {cfg[key]}: {err}") from err
    except DomainError as err:
        raise UsageError(f"{cfg[key]}: {err}") from err


# --------------------------------------------------------------------------
# subcommands


SIMULATE_DEFAULTS = dict(
    out_dir=None,
    marginal="weibull",
    kappa=None,
    sigma2=None,
    beta="0",
    correlation="exponential",
    phi=None,
    nu_m=None,
    phi_s=None,
    phi_t=None,
    phi_st=0.0,
    grid=None,
    sites=None,
    n_reps=1,
    seed=None,
    metric="euclidean",
    threads=None,
    quiet=False,
)


def cmd_simulate(cfg: dict) -> int:
    _require(cfg, "out_dir", "seed")
    _threads_note(cfg)
    if int(cfg["n_reps"]) < 1:
        raise UsageError(f"--n-reps must be >= 1, got {cfg['n_reps']}")
    sites = _sites_from_cfg(cfg)
    n_cov = len(sites[0].covariates)
    model = _field_model_from_cfg(cfg, n_cov)
    out = _out_dir(cfg)

    if isinstance(model, WeibullFieldModel):
        draws = simulate_weibull(
            model, sites, int(cfg["n_reps"]), int(cfg["seed"]), metric=cfg["metric"]
        )
    else:
        draws = simulate_loggaussian(
            model, sites, int(cfg["n_reps"]), int(cfg["seed"]), metric=cfg["metric"]
        )

    csv_path = os.path.join(out, "simulations.csv")
    dataio.save_simulations(csv_path, sites, draws)
    fig_path = figures.save_simulation_figure(
        os.path.join(out, "simulations.png"), sites, draws
    )
    _emit(cfg, f"wrote {csv_path} and {fig_path}")
    return 0


FIT_DEFAULTS = dict(
    data=None,
    zero_offset=None,
    out=None,
    marginal="weibull",
    correlation="exponential",
    nu_m=None,
    phi_st=0.0,
    harmonics=None,
    period=365.25,
    delta_space=math.inf,
    delta_time=math.inf,
    init=None,
    budget=4000,
    metric="euclidean",
    block_length=None,
    skip_variance=False,
    seed=None,  # accepted for uniformity; fitting is deterministic
    threads=None,
    quiet=False,
)


def cmd_fit(cfg: dict) -> int:
    _require(cfg, "data", "out")
    _threads_note(cfg)
    dataset = _load_data(cfg)
    dataset = _with_harmonics(dataset, cfg.get("harmonics"), float(cfg["period"]))
    if cfg["correlation"] == "matern" and cfg.get("nu_m") is None:
        raise UsageError("--nu-m is required with the matern family")
    spec = ModelSpec(
        cfg["marginal"],
        cfg["correlation"],
        n_covariates=dataset.covariates.shape[1],
        nu_m=None if cfg.get("nu_m") is None else float(cfg["nu_m"]),
        phi_st=_fixed_or_free(cfg.get("phi_st")),
    )
    weights = WeightSpec(
        delta_space=float(cfg["delta_space"]),
        delta_time=float(cfg["delta_time"]),
    )
    init = cfg.get("init")
    if init is not None:
        init = np.asarray(
            _float_list(init) if isinstance(init, str) else init, dtype=float
        )
        if init.size != spec.n_params:
            raise UsageError(
                f"--init needs {spec.n_params} values "
                f"({', '.join(spec.param_names)}), got {init.size}"
            )

    fit = fit_mwpl(
        dataset,
        weights,
        spec,
        init=init,
        metric=cfg["metric"],
        budget=int(cfg["budget"]),
        compute_godambe=not cfg["skip_variance"],
        block_length=cfg.get("block_length"),
    )
    dataio.save_fit(fit, cfg["out"])
    fig_path = figures.save_fit_figure(
        os.path.splitext(cfg["out"])[0] + ".png", fit
    )
    plic_txt = "n/a" if fit.plic is None else f"{fit.plic:.6g}"
    _emit(
        cfg,
        f"wrote {cfg['out']} and {fig_path} "
        f"(converged={fit.converged}, loglik={fit.loglik:.6g}, plic={plic_txt})",
    )
    if not fit.converged:
        raise NotConvergedError(
            f"optimizer exhausted its budget of {cfg['budget']} evaluations; "
            f"outputs were written for inspection"
        )
    return 0


PREDICT_DEFAULTS = dict(
    fit=None,
    data=None,
    targets=None,
    zero_offset=None,
    out=None,
    harmonics=None,
    period=365.25,
    metric="euclidean",
    threads=None,
    quiet=False,
)


def cmd_predict(cfg: dict) -> int:
    _require(cfg, "fit", "data", "targets", "out")
    _threads_note(cfg)
    fit = _load_fit(cfg["fit"])
    dataset = _load_data(cfg)
    dataset = _with_harmonics(dataset, cfg.get("harmonics"), float(cfg["period"]))
    frame = _read_table(cfg["targets"])
    targets, ids, observed, times = _sites_from_frame(frame, cfg["targets"])
    if cfg.get("harmonics"):
        if times is None:
            raise UsageError("--harmonics needs a t column in the targets file")
        design = harmonic_design(times, int(cfg["harmonics"]), float(cfg["period"]))
        targets = [
            Site(coords=s.coords, time=s.time, covariates=tuple(row))
            for s, row in zip(targets, design)
        ]
    spec = fit.spec
    p = spec.n_covariates
    if dataset.covariates.shape[1] != p:
        raise UsageError(
            f"data carries {dataset.covariates.shape[1]} covariates but the "
            f"fit expects {p}"
        )
    if any(len(s.covariates) != p for s in targets):
        raise UsageError(f"every target needs {p} covariates to match the fit")

    model = spec.build_field_model(fit.theta_hat)
    krige = simple_krige if spec.marginal == "weibull" else loggaussian_krige
    points = np.empty(len(targets))
    mspes = np.empty(len(targets))
    for k, site in enumerate(targets):
        res = krige(
            model, dataset.sites, dataset.values, site, metric=cfg["metric"]
        )
        points[k] = res.point
        mspes[k] = res.mspe

    crps = None
    if observed is not None:
        estimates = fit.named_estimates()
        if spec.marginal == "weibull":
            kappa_hat = estimates["kappa"]
            nu = weibull_nu(kappa_hat)
            crps = [
                crps_weibull(kappa_hat, nu * pt, ob)
                for pt, ob in zip(points, observed)
            ]
        else:
            sigma2_hat = estimates["sigma2"]
            crps = [
                crps_loggaussian(math.log(pt), sigma2_hat, ob)
                for pt, ob in zip(points, observed)
            ]

    dataio.save_predictions(
        cfg["out"], ids, points, mspes, observed=observed, crps=crps
    )
    fig_path = figures.save_prediction_figure(
        os.path.splitext(cfg["out"])[0] + ".png",
        dataio.load_predictions(cfg["out"]),
    )
    _emit(cfg, f"wrote {cfg['out']} and {fig_path} ({len(targets)} targets)")
    return 0


SCORE_DEFAULTS = dict(
    predictions=None,
    fit=None,
    out=None,
    label=None,
    threads=None,
    quiet=False,
)


def cmd_score(cfg: dict) -> int:
    _require(cfg, "predictions", "out")
    frame = _read_table(cfg["predictions"])
    for col in ("point", "observed"):
        if col not in frame.columns:
            raise UsageError(
                f"{cfg['predictions']} needs a {col!r} column to be scored"
            )
    marginal = None
    label = cfg.get("label")
    if cfg.get("fit") is not None:
        fit = _load_fit(cfg["fit"])
        name = fit.spec.marginal
        param = fit.named_estimates()[
            "kappa" if name == "weibull" else "sigma2"
        ]
        marginal = (name, param)
        label = label or name
    label = label or "forecast"

    entry = score_predictions(
        frame["point"].to_numpy(dtype=float),
        frame["observed"].to_numpy(dtype=float),
        marginal=marginal,
    )
    entry["n_scored"] = int(len(frame))
    scores = {label: entry}
    dataio.save_scores(cfg["out"], scores)
    fig_path = figures.save_scores_figure(
        os.path.splitext(cfg["out"])[0] + ".png", scores
    )
    _emit(cfg, f"wrote {cfg['out']} and {fig_path}")
    return 0


TABLE1_DEFAULTS = dict(
    out_dir=None,
    kappas="1,3,10",
    phis="0.03333333333333333,0.06666666666666667,0.1",
    n_sites=150,
    n_reps=200,
    budget=3000,
    n_bootstrap=200,
    seed=None,
    threads=None,
    quiet=False,
)


def cmd_study_table1(cfg: dict) -> int:
    _require(cfg, "out_dir", "seed")
    _threads_note(cfg)
    if int(cfg["n_reps"]) < 100:
        raise UsageError(
            f"--n-reps must be >= 100 for a stable efficiency table, "
            f"got {cfg['n_reps']}"
        )
    out = _out_dir(cfg)
    table = run_table1_study(
        kappas=_float_list(cfg["kappas"]),
        phis=_float_list(cfg["phis"]),
        n_sites=int(cfg["n_sites"]),
        n_reps=int(cfg["n_reps"]),
        seed=int(cfg["seed"]),
        budget=int(cfg["budget"]),
        n_bootstrap=int(cfg["n_bootstrap"]),
        progress=None if cfg.get("quiet") else print,
    )
    csv_path = os.path.join(out, "estimator_efficiency.csv")
    table.to_csv(csv_path, index=False, float_format="%.17g")
    fig_path = figures.save_study_figure(
        os.path.join(out, "estimator_efficiency.png"),
        table,
        "relative_efficiency",
        se_col="re_se",
        ylabel="pairwise-vs-exact efficiency",
    )
    _emit(cfg, f"wrote {csv_path} and {fig_path}")
    return 0


TABLE2_DEFAULTS = dict(
    out_dir=None,
    kappas="1,3,10",
    phis="0.03333333333333333,0.06666666666666667,0.1",
    n_reps=500,
    n_bootstrap=200,
    seed=None,
    threads=None,
    quiet=False,
)


def cmd_study_table2(cfg: dict) -> int:
    _require(cfg, "out_dir", "seed")
    _threads_note(cfg)
    if int(cfg["n_reps"]) < 200:
        raise UsageError(
            f"--n-reps must be >= 200 for a stable prediction table, "
            f"got {cfg['n_reps']}"
        )
    out = _out_dir(cfg)
    table = run_table2_study(
        kappas=_float_list(cfg["kappas"]),
        phis=_float_list(cfg["phis"]),
        n_reps=int(cfg["n_reps"]),
        seed=int(cfg["seed"]),
        n_bootstrap=int(cfg["n_bootstrap"]),
        progress=None if cfg.get("quiet") else print,
    )
    csv_path = os.path.join(out, "predictor_efficiency.csv")
    table.to_csv(csv_path, index=False, float_format="%.17g")
    fig_path = figures.save_study_figure(
        os.path.join(out, "predictor_efficiency.png"),
        table,
        "mspe_ratio",
        se_col="ratio_se",
        ylabel="conditional-mean vs linear MSPE ratio",
    )
    _emit(cfg, f"wrote {csv_path} and {fig_path}")
    return 0


PIPELINE_DEFAULTS = dict(
    data=None,
    zero_offset=None,
    synthetic=False,
    n_stations=10,
    n_times=730,
    gen_kappa=2.0,
    gen_phi_s=0.3,
    gen_phi_t=2.5,
    gen_beta="0.3,0.2,-0.1",
    seed=None,
    out_dir=None,
    q=4,
    period=365.25,
    delta_space=math.inf,
    delta_time=1.0,
    phi_st=0.0,
    train_fraction=0.8,
    marginals="weibull,loggaussian",
    rescale_stations=False,
    window=5.0,
    budget=4000,
    metric="euclidean",
    threads=None,
    quiet=False,
)


def cmd_pipeline_wind(cfg: dict) -> int:
    _require(cfg, "out_dir")
    _threads_note(cfg)
    out = _out_dir(cfg)
    if bool(cfg["synthetic"]) == (cfg.get("data") is not None):
        raise UsageError("exactly one of --data or --synthetic is required")
    if cfg["synthetic"]:
        _require(cfg, "seed")
        gen_beta = _float_list(cfg["gen_beta"])
        if len(gen_beta) < 3 or len(gen_beta) % 2 == 0:
            raise UsageError(
                "--gen-beta needs an odd number of entries >= 3 "
                "(intercept plus harmonic pairs)"
            )
        dataset = synthetic_wind_dataset(
            n_stations=int(cfg["n_stations"]),
            n_times=int(cfg["n_times"]),
            kappa=float(cfg["gen_kappa"]),
            beta=gen_beta,
            q=(len(gen_beta) - 1) // 2,
            period=float(cfg["period"]),
            phi_s=float(cfg["gen_phi_s"]),
            phi_t=float(cfg["gen_phi_t"]),
            seed=int(cfg["seed"]),
        )
        data_path = os.path.join(out, "dataset.csv")
        dataio.save_dataset(dataset, data_path)
        _emit(cfg, f"wrote {data_path} (synthetic stand-in records)")
    else:
        dataset = _load_data(cfg)
        if dataset.stations is None or dataset.times is None:
            raise UsageError(
                f"{cfg['data']} needs station and t columns for the pipeline"
            )

    result = run_wind_pipeline(
        dataset,
        q=int(cfg["q"]),
        period=float(cfg["period"]),
        delta_space=float(cfg["delta_space"]),
        delta_time=float(cfg["delta_time"]),
        phi_st=_fixed_or_free(cfg.get("phi_st")),
        train_fraction=float(cfg["train_fraction"]),
        marginals=tuple(_str_list(cfg["marginals"])),
        rescale_stations=bool(cfg["rescale_stations"]),
        window=float(cfg["window"]),
        budget=int(cfg["budget"]),
        metric=cfg["metric"],
        progress=None if cfg.get("quiet") else print,
    )

    written = []
    for name, fit in result.fits.items():
        fit_path = os.path.join(out, f"fit_{name}.json")
        dataio.save_fit(fit, fit_path)
        figures.save_fit_figure(os.path.join(out, f"fit_{name}.png"), fit)
        written.append(fit_path)
    if result.predictions is not None:
        pred_path = os.path.join(out, "predictions.csv")
        result.predictions.to_csv(pred_path, index=False, float_format="%.17g")
        figures.save_pipeline_figure(
            os.path.join(out, "predictions.png"), result.predictions
        )
        written.append(pred_path)
    if result.scores is not None:
        scores_path = os.path.join(out, "scores.json")
        dataio.save_scores(scores_path, result.scores)
        figures.save_scores_figure(
            os.path.join(out, "scores.png"), result.scores
        )
        written.append(scores_path)
    _emit(cfg, "wrote " + ", ".join(written))
    stuck = [n for n, f in result.fits.items() if not f.converged]
    if stuck:
        raise NotConvergedError(
            f"fits did not converge for: {', '.join(stuck)}; "
            f"outputs were written for inspection"
        )
    return 0


DIAGNOSTICS_DEFAULTS = dict(
    data=None,
    zero_offset=None,
    fit=None,
    out_dir=None,
    n_bins=15,
    max_lag=None,
    copula_rho=0.6,
    copula_m=2,
    copula_n=201,
    max_pairs=6,
    metric="euclidean",
    threads=None,
    quiet=False,
)


def _model_semivariogram(fit, lags: np.ndarray, axis: str) -> np.ndarray:
    """Plug-in semivariance of the standardized field at the given lags."""
    model = fit.spec.build_field_model(fit.theta_hat)
    out = np.empty(lags.size)
    for k, h in enumerate(lags):
        lag = Lag(float(h), 0.0) if axis == "spatial" else Lag(0.0, float(h))
        if fit.spec.marginal == "weibull":
            sig2 = weibull_sigma2(model.kappa)
            rho_f = weibull_corr(model.corr, lag, model.kappa)
        else:
            s2 = model.sigma2
            r = corr(model.corr, lag)
            sig2 = math.expm1(s2)
            rho_f = math.expm1(s2 * r) / math.expm1(s2)
        out[k] = sig2 * (1.0 - rho_f)
    return out


def cmd_diagnostics(cfg: dict) -> int:
    _require(cfg, "data", "out_dir")
    _threads_note(cfg)
    out = _out_dir(cfg)
    dataset = _load_data(cfg)
    fit = _load_fit(cfg["fit"]) if cfg.get("fit") is not None else None

    values = dataset.values
    if fit is not None:
        model = fit.spec.build_field_model(fit.theta_hat)
        if dataset.covariates.shape[1] != fit.spec.n_covariates:
            raise UsageError(
                f"data carries {dataset.covariates.shape[1]} covariates but "
                f"the fit expects {fit.spec.n_covariates}"
            )
        values = values / mean_values(model.beta, dataset.covariates)
    residual_ds = Dataset(
        dataset.sites,
        values,
        stations=dataset.stations,
        station_scale=dataset.station_scale,
    )

    written = []
    axes = ["spatial"] + (["temporal"] if dataset.times is not None else [])
    for axis in axes:
        est = empirical_semivariogram(
            residual_ds,
            axis=axis,
            n_bins=int(cfg["n_bins"]),
            max_lag=cfg.get("max_lag"),
            metric=cfg["metric"],
        )
        csv_path = os.path.join(out, f"variogram_{axis}.csv")
        if fit is not None:
            model_vals = _model_semivariogram(fit, est.bin_centers, axis)
            pd.DataFrame(
                {
                    "lag": est.bin_centers,
                    "semivariance": est.semivariance,
                    "n_pairs": est.counts,
                    "model_semivariance": model_vals,
                }
            ).to_csv(csv_path, index=False, float_format="%.17g")
            dense = np.linspace(
                0.0, float(est.bin_centers.max()), 120, endpoint=True
            )[1:]
            figures.save_variogram_figure(
                os.path.join(out, f"variogram_{axis}.png"),
                est,
                model_lags=dense,
                model_semivariance=_model_semivariogram(fit, dense, axis),
            )
        else:
            dataio.save_variogram(csv_path, est)
            figures.save_variogram_figure(
                os.path.join(out, f"variogram_{axis}.png"), est
            )
        written.append(csv_path)

    # dependence surface on the normal-score scale at a reference correlation
    n_grid = int(cfg["copula_n"])
    zs = np.linspace(-3.0, 3.0, n_grid)
    g1, g2 = np.meshgrid(zs, zs, indexing="ij")
    pairs = np.column_stack([g1.ravel(), g2.ravel()])
    dens = copula_density_normal_scale(
        pairs, float(cfg["copula_rho"]), int(cfg["copula_m"])
    ).reshape(n_grid, n_grid)
    copula_path = os.path.join(out, "copula_grid.csv")
    dataio.save_copula_grid(copula_path, zs, zs, dens)
    figures.save_copula_figure(
        os.path.join(out, "copula_grid.png"), zs, zs, dens
    )
    written.append(copula_path)

    # paired-station diagnostics need repeated co-observation times
    if dataset.stations is not None and dataset.times is not None:
        labs = sorted(set(str(s) for s in dataset.stations))
        pairs_done = 0
        tail_written = False
        for i in range(len(labs)):
            for j in range(i + 1, len(labs)):
                if pairs_done >= int(cfg["max_pairs"]):
                    break
                a, b = labs[i], labs[j]
                mask_a = dataset.stations.astype(str) == a
                mask_b = dataset.stations.astype(str) == b
                t_a = dataset.times[mask_a]
                t_b = dataset.times[mask_b]
                common, ia, ib = np.intersect1d(t_a, t_b, return_indices=True)
                if common.size < 3:
                    continue
                va = residual_ds.values[mask_a][ia]
                vb = residual_ds.values[mask_b][ib]
                za = normal_scores(va)
                zb = normal_scores(vb)
                pair_path = os.path.join(out, f"scores_{a}_{b}.csv")
                pd.DataFrame({"t": common, f"z_{a}": za, f"z_{b}": zb}).to_csv(
                    pair_path, index=False, float_format="%.17g"
                )
                written.append(pair_path)
                pairs_done += 1
                if not tail_written and common.size >= 4:
                    q = np.linspace(0.80, 0.99, 20)
                    chi = tail_dependence_diagnostic(va, vb, quantiles=q)
                    tail_path = os.path.join(out, "tail_dependence.csv")
                    pd.DataFrame(
                        {"quantile": q, "chi": chi, "station_a": a, "station_b": b}
                    ).to_csv(tail_path, index=False, float_format="%.17g")
                    figures.save_tail_figure(
                        os.path.join(out, "tail_dependence.png"), q, chi
                    )
                    written.append(tail_path)
                    tail_written = True
            if pairs_done >= int(cfg["max_pairs"]):
                break

    _emit(cfg, "wrote " + ", ".join(written))
    return 0


# --------------------------------------------------------------------------
# parser wiring


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument(
        "--threads",
        type=int,
        help="cap on worker threads (replicates currently run serially; "
        "the results never depend on this value)",
    )
    p.add_argument(
        "--quiet", action="store_true", help="suppress progress output"
    )


def _add_model_flags(p: _Parser) -> None:
    p.add_argument(
        "--marginal", choices=["weibull", "loggaussian"], help="marginal family"
    )
    p.add_argument(
        "--correlation",
        choices=["exponential", "matern", "spacetime"],
        help="parent correlation family",
    )
    p.add_argument("--kappa", type=float, help="shape of the positive margin")
    p.add_argument(
        "--sigma2", type=float, help="log-scale variance of the log-normal margin"
    )
    p.add_argument("--beta", help="regression coefficients, comma separated")
    p.add_argument("--phi", type=float, help="range of the spatial correlation")
    p.add_argument("--nu-m", type=float, help="smoothness (matern family)")
    p.add_argument("--phi-s", type=float, help="spatial range (space-time family)")
    p.add_argument("--phi-t", type=float, help="temporal range (space-time family)")
    p.add_argument(
        "--phi-st",
        help="space-time interaction in [0,1]; 'free' estimates it where "
        "estimation applies",
    )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="chifield",
        description=(
            "Simulation, pairwise-likelihood fitting, prediction and "
            "diagnostics for positive random fields with chi-square "
            "dependence"
        ),
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    def new(name: str, help_text: str, func: Callable, defaults: dict) -> _Parser:
        p = sub.add_parser(
            name, help=help_text, argument_default=argparse.SUPPRESS
        )
        p.set_defaults(func=func, defaults=defaults)
        _add_common(p)
        return p

    p = new(
        "simulate",
        "draw field realizations on a grid or at listed sites",
        cmd_simulate,
        SIMULATE_DEFAULTS,
    )
    _add_model_flags(p)
    p.add_argument("--grid", help="N for a line on [0,1], NX,NY for a lattice on [0,1]^2")
    p.add_argument("--sites", help="CSV of sites (x[,y][,t][,cov_*])")
    p.add_argument("--n-reps", type=int, help="number of replicates")
    p.add_argument("--seed", type=int, help="random seed (required)")
    p.add_argument("--metric", choices=["euclidean", "haversine"])
    p.add_argument("--out-dir", help="output directory (required)")

    p = new(
        "fit",
        "estimate model parameters by weighted pairwise likelihood",
        cmd_fit,
        FIT_DEFAULTS,
    )
    p.add_argument("--data", help="observation CSV (required)")
    p.add_argument("--zero-offset", type=float, help="replacement for exact zeros")
    p.add_argument(
        "--marginal", choices=["weibull", "loggaussian"], help="marginal family"
    )
    p.add_argument(
        "--correlation",
        choices=["exponential", "matern", "spacetime"],
        help="parent correlation family",
    )
    p.add_argument("--nu-m", type=float, help="fixed smoothness (matern)")
    p.add_argument(
        "--phi-st", help="space-time interaction: a value to fix it, or 'free'"
    )
    p.add_argument(
        "--harmonics", type=int, help="seasonal harmonic count (builds covariates from t)"
    )
    p.add_argument("--period", type=float, help="seasonal period in time units")
    p.add_argument("--delta-space", type=float, help="pair cutoff distance")
    p.add_argument("--delta-time", type=float, help="pair cutoff time lag")
    p.add_argument("--init", help="starting values, comma separated")
    p.add_argument("--budget", type=int, help="optimizer evaluation budget")
    p.add_argument("--metric", choices=["euclidean", "haversine"])
    p.add_argument(
        "--block-length", type=float, help="subsampling window length override"
    )
    p.add_argument(
        "--skip-variance",
        action="store_true",
        help="skip the sandwich variance (faster; no standard errors)",
    )
    p.add_argument("--seed", type=int, help="accepted but unused; fits are deterministic")
    p.add_argument("--out", help="output JSON path (required)")

    p = new(
        "predict",
        "krige targets from observations under a fitted model",
        cmd_predict,
        PREDICT_DEFAULTS,
    )
    p.add_argument("--fit", help="fit JSON from the fit subcommand (required)")
    p.add_argument("--data", help="conditioning observation CSV (required)")
    p.add_argument(
        "--targets",
        help="CSV of targets (coordinates, optional t/target_id/observed/cov_*)",
    )
    p.add_argument("--zero-offset", type=float, help="replacement for exact zeros")
    p.add_argument(
        "--harmonics",
        type=int,
        help="rebuild seasonal covariates from t for data and targets",
    )
    p.add_argument("--period", type=float, help="seasonal period in time units")
    p.add_argument("--metric", choices=["euclidean", "haversine"])
    p.add_argument("--out", help="output CSV path (required)")

    p = new(
        "score",
        "summarize forecast accuracy of a prediction table",
        cmd_score,
        SCORE_DEFAULTS,
    )
    p.add_argument(
        "--predictions", help="CSV with point and observed columns (required)"
    )
    p.add_argument(
        "--fit", help="fit JSON enabling the distributional score column"
    )
    p.add_argument("--label", help="method name used in the report")
    p.add_argument("--out", help="output JSON path (required)")

    p = new(
        "study-table1",
        "estimator-efficiency study: pairwise versus exact likelihood",
        cmd_study_table1,
        TABLE1_DEFAULTS,
    )
    p.add_argument("--kappas", help="shape values, comma separated")
    p.add_argument("--phis", help="range values, comma separated")
    p.add_argument("--n-sites", type=int, help="sites per replicate")
    p.add_argument("--n-reps", type=int, help="replicates per cell (>= 100)")
    p.add_argument("--budget", type=int, help="optimizer evaluation budget")
    p.add_argument("--n-bootstrap", type=int, help="bootstrap draws for standard errors")
    p.add_argument("--seed", type=int, help="random seed (required)")
    p.add_argument("--out-dir", help="output directory (required)")

    p = new(
        "study-table2",
        "predictor-efficiency study: conditional mean versus kriging",
        cmd_study_table2,
        TABLE2_DEFAULTS,
    )
    p.add_argument("--kappas", help="shape values, comma separated")
    p.add_argument("--phis", help="range values, comma separated")
    p.add_argument("--n-reps", type=int, help="replicates per cell (>= 200)")
    p.add_argument("--n-bootstrap", type=int, help="bootstrap draws for standard errors")
    p.add_argument("--seed", type=int, help="random seed (required)")
    p.add_argument("--out-dir", help="output directory (required)")

    p = new(
        "pipeline-wind",
        "seasonal station workflow: split, fit, forecast, score",
        cmd_pipeline_wind,
        PIPELINE_DEFAULTS,
    )
    p.add_argument("--data", help="station records CSV (station, x, y, t, value)")
    p.add_argument("--zero-offset", type=float, help="replacement for exact zeros")
    p.add_argument(
        "--synthetic",
        action="store_true",
        help="generate stand-in records instead of reading --data",
    )
    p.add_argument("--n-stations", type=int, help="stations for --synthetic")
    p.add_argument("--n-times", type=int, help="days for --synthetic")
    p.add_argument("--gen-kappa", type=float, help="shape for --synthetic")
    p.add_argument("--gen-phi-s", type=float, help="spatial range for --synthetic")
    p.add_argument("--gen-phi-t", type=float, help="temporal range for --synthetic")
    p.add_argument(
        "--gen-beta", help="seasonal coefficients for --synthetic, comma separated"
    )
    p.add_argument("--seed", type=int, help="random seed (required with --synthetic)")
    p.add_argument("--q", type=int, help="harmonics in the fitted seasonal mean")
    p.add_argument("--period", type=float, help="seasonal period in time units")
    p.add_argument("--delta-space", type=float, help="pair cutoff distance")
    p.add_argument("--delta-time", type=float, help="pair cutoff time lag")
    p.add_argument(
        "--phi-st", help="space-time interaction: a value to fix it, or 'free'"
    )
    p.add_argument("--train-fraction", type=float, help="fraction of days for training")
    p.add_argument("--marginals", help="families to fit, comma separated")
    p.add_argument(
        "--rescale-stations",
        action="store_true",
        help="divide each station by its training mean before fitting",
    )
    p.add_argument("--window", type=float, help="days of history behind each forecast")
    p.add_argument("--budget", type=int, help="optimizer evaluation budget")
    p.add_argument("--metric", choices=["euclidean", "haversine"])
    p.add_argument("--out-dir", help="output directory (required)")

    p = new(
        "diagnostics",
        "variograms, score scatters, dependence surface, tail curve",
        cmd_diagnostics,
        DIAGNOSTICS_DEFAULTS,
    )
    p.add_argument("--data", help="observation CSV (required)")
    p.add_argument("--zero-offset", type=float, help="replacement for exact zeros")
    p.add_argument(
        "--fit",
        help="fit JSON; standardizes by the fitted mean and overlays the "
        "model curve",
    )
    p.add_argument("--n-bins", type=int, help="variogram bins")
    p.add_argument("--max-lag", type=float, help="variogram lag ceiling")
    p.add_argument(
        "--copula-rho", type=float, help="reference correlation of the surface"
    )
    p.add_argument("--copula-m", type=int, help="chi-square copies of the surface")
    p.add_argument("--copula-n", type=int, help="surface grid resolution per axis")
    p.add_argument(
        "--max-pairs", type=int, help="station pairs to emit score scatters for"
    )
    p.add_argument("--metric", choices=["euclidean", "haversine"])
    p.add_argument("--out-dir", help="output directory (required)")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not hasattr(ns, "func"):
            parser.print_help()
            return 2
        func = ns.func
        cfg = _merge_config(ns, ns.defaults)
    except UsageError as err:
        return _fail("configuration", err, 2)
    except SystemExit as err:  # --help
        return int(err.code or 0)

    try:
        return func(cfg)
    except UsageError as err:
        return _fail("configuration", err, 2)
    except (ChifieldError, ArithmeticError, np.linalg.LinAlgError) as err:
        return _fail("numerical", err, 3)
    except OSError as err:
        return _fail("configuration", err, 2)


if __name__ == "__main__":
    sys.exit(main())
