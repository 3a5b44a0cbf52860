"""
experiments.py

Simulation designs and evaluation metrics.

- Curves T(t) = a cos 2t + b sin 4t + c (t^2 - pi t + 2 pi^2 / 9) on [0, pi]
- Model 1: m = int t cos t T'(t)^2 dt + eta + gamma
- Model 2: Model 1 + omega + beta
- Error laws: trimodal and claw normal mixtures
- MASE / MISE / MSFE / MAFE / coverage
- Replicated studies (optionally over a process pool), the irrelevant
  regressor study, the bootstrap forecast comparison, and a synthetic
  spectroscopy table with the shape of the public fat-content data.
"""

import time
from dataclasses import asdict, dataclass, replace
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import simpson
from scipy.stats import norm

from config import CV_BUDGET, FAT_THRESHOLD, PRED_GRID, SIM_GRID_SIZE, parse_grid
from dataset import Dataset, DiscreteKind, Schema, bootstrap_replicate, split
from errdensity import error_density_grid
from fitting import fit_model, predict
from posterior import PriorSpec
from sampler import McmcConfig
from semimetric import SemiMetricSpec
from utils import FunBayesError, rng_for, seed_for

# (weights, means, standard deviations)
MIXTURES: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {
    "trimodal": (
        np.array([0.45, 0.45, 0.10]),
        np.array([-1.2, 1.2, 0.0]),
        np.array([0.6, 0.6, 0.25]),
    ),
    "claw": (
        np.array([0.5] + [0.1] * 5),
        np.array([0.0] + [l / 2.0 - 1.0 for l in range(5)]),
        np.array([1.0] + [0.1] * 5),
    ),
}

Generator = Union[int, np.random.Generator]


def _rng(seed: Generator) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else rng_for(seed)


@dataclass(frozen=True)
class SimConfig:
    n: int = 50
    model: int = 1
    error_law: str = "trimodal"
    n_replications: int = 20
    seed: int = 7
    grid_size: int = SIM_GRID_SIZE
    include_discrete: bool = True

    def __post_init__(self):
        if self.n < 10:
            raise ValueError(f"n must be at least 10, got {self.n}")
        if self.model not in (1, 2):
            raise ValueError(f"model must be 1 or 2, got {self.model}")
        if self.error_law not in MIXTURES:
            raise ValueError(f"error_law must be one of {sorted(MIXTURES)}, got {self.error_law!r}")


# -----------------------
# Curves and regression functions
# -----------------------
def sim_grid(size: int = SIM_GRID_SIZE) -> np.ndarray:
    return np.linspace(0.0, np.pi, size)


def curve_values(coefs: np.ndarray, grid: np.ndarray) -> np.ndarray:
    coefs = np.atleast_2d(coefs)
    t = np.asarray(grid, dtype=float)
    quad = t ** 2 - np.pi * t + 2.0 * np.pi ** 2 / 9.0
    return coefs[:, [0]] * np.cos(2 * t) + coefs[:, [1]] * np.sin(4 * t) + coefs[:, [2]] * quad


def curve_derivative(coefs: np.ndarray, grid: np.ndarray) -> np.ndarray:
    coefs = np.atleast_2d(coefs)
    t = np.asarray(grid, dtype=float)
    return -2 * coefs[:, [0]] * np.sin(2 * t) + 4 * coefs[:, [1]] * np.cos(4 * t) + coefs[:, [2]] * (2 * t - np.pi)


def gen_curves(n: int, seed: Generator, grid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(curves (n, G), coefficients (n, 3)) with a, b, c ~ U[0, 1]."""
    grid = sim_grid() if grid is None else grid
    coefs = _rng(seed).uniform(0.0, 1.0, size=(n, 3))
    return curve_values(coefs, grid), coefs


def functional_part(coefs: np.ndarray, n_points: int = 1001) -> np.ndarray:
    """int_0^pi t cos(t) T'(t)^2 dt, composite Simpson on the analytic derivative."""
    t = np.linspace(0.0, np.pi, n_points)
    integrand = t * np.cos(t) * curve_derivative(coefs, t) ** 2
    return simpson(integrand, x=t, axis=1)


def true_regression(model: int, coefs: Sequence[float], eta: float, omega: float = 0.0, gamma: float = 0.0, beta: float = 0.0) -> float:
    m = float(functional_part(np.asarray(coefs, dtype=float))[0]) + eta + gamma
    if model == 2:
        m += omega + beta
    return m


# -----------------------
# Error laws
# -----------------------
def draw_error(law: str, seed: Generator, size: Optional[int] = None):
    weights, means, sds = MIXTURES[law]
    rng = _rng(seed)
    k = rng.choice(weights.size, size=size, p=weights)
    return means[k] + sds[k] * rng.standard_normal(size)


def density_pdf(law: str, x) -> np.ndarray:
    weights, means, sds = MIXTURES[law]
    x = np.asarray(x, dtype=float)
    return np.sum(weights * norm.pdf((x[..., None] - means) / sds) / sds, axis=-1)


# -----------------------
# Simulated data sets
# -----------------------
@dataclass(frozen=True)
class SimulatedData:
    dataset: Dataset
    true_m: np.ndarray
    eps: np.ndarray
    law: str


def simulate_dataset(cfg: SimConfig, seed: Generator, irrelevant: bool = False) -> SimulatedData:
    """
    eta ~ N(0, 1), omega ~ Exp(1), gamma ~ Bernoulli(1/2), beta ~ U{0..5}.
    With irrelevant=True the observed regressors also include an N(0, 1)
    continuous and a uniform ordered(6) discrete variable that m ignores.
    """
    rng = _rng(seed)
    grid = sim_grid(cfg.grid_size)
    curves, coefs = gen_curves(cfg.n, rng, grid)
    eta = rng.standard_normal(cfg.n)
    omega = rng.exponential(1.0, cfg.n)
    gamma = rng.integers(0, 2, cfg.n)
    beta = rng.integers(0, 6, cfg.n)
    eps = draw_error(cfg.error_law, rng, cfg.n)

    m = functional_part(coefs) + eta + gamma
    xc: List[np.ndarray] = [eta]
    xd: List[np.ndarray] = [gamma]
    kinds = [DiscreteKind(ordered=False, levels=2)]
    if cfg.model == 2:
        m = m + omega + beta
        xc.append(omega)
        xd.append(beta)
        kinds.append(DiscreteKind(ordered=True, levels=6))
    if irrelevant:
        xc.append(rng.standard_normal(cfg.n))
        xd.append(rng.integers(0, 6, cfg.n))
        kinds.append(DiscreteKind(ordered=True, levels=6))
    if not cfg.include_discrete:
        xd, kinds = [], []

    ds = Dataset(
        grid=grid,
        curves=curves,
        xc=np.column_stack(xc),
        xd=np.column_stack(xd) if xd else np.empty((cfg.n, 0), dtype=np.int64),
        y=m + eps,
        kinds=tuple(kinds),
    )
    return SimulatedData(dataset=ds, true_m=m, eps=eps, law=cfg.error_law)


# -----------------------
# Metrics
# -----------------------
def mase(true_m: Sequence[np.ndarray], fitted: Sequence[np.ndarray]) -> Tuple[float, float]:
    """Mean over replications of (1/n) sum (m - m_hat)^2, and its sd across replications."""
    per_rep = np.array([np.mean((np.asarray(t) - np.asarray(f)) ** 2) for t, f in zip(true_m, fitted)])
    sd = float(np.std(per_rep, ddof=1)) if per_rep.size > 1 else 0.0
    return float(per_rep.mean()), sd


def mise(law: str, fitted_density: Sequence[np.ndarray], grid: np.ndarray) -> Tuple[float, float]:
    """Mean over replications of ((b - a) / kappa) sum (f - f_hat)^2 on the grid, and its sd."""
    grid = np.asarray(grid, dtype=float)
    f = density_pdf(law, grid)
    width = grid[-1] - grid[0]
    per_rep = np.array([width / grid.size * np.sum((f - np.asarray(fh)) ** 2) for fh in fitted_density])
    sd = float(np.std(per_rep, ddof=1)) if per_rep.size > 1 else 0.0
    return float(per_rep.mean()), sd


def msfe_mafe(y_test: Sequence[float], y_pred: Sequence[float]) -> Dict[str, float]:
    err = np.asarray(y_test, dtype=float) - np.asarray(y_pred, dtype=float)
    sq, ab = err ** 2, np.abs(err)
    ddof = 1 if err.size > 1 else 0
    return {
        "msfe": float(sq.mean()),
        "mafe": float(ab.mean()),
        "sd_sq": float(np.std(sq, ddof=ddof)),
        "sd_abs": float(np.std(ab, ddof=ddof)),
    }


def coverage(y_test: Sequence[float], lower: Sequence[float], upper: Sequence[float]) -> float:
    y = np.asarray(y_test, dtype=float)
    inside = (y >= np.asarray(lower)) & (y <= np.asarray(upper))
    return float(inside.mean())


# -----------------------
# Replicated studies
# -----------------------
@dataclass(frozen=True)
class StudySettings:
    method: str = "bayes-local"
    prior: PriorSpec = PriorSpec()
    mcmc: McmcConfig = McmcConfig()
    semimetric: SemiMetricSpec = SemiMetricSpec()
    cv_budget: int = CV_BUDGET
    density_grid: Tuple[float, float, int] = (-5.0, 5.0, 1001)
    pred_grid: Tuple[float, float, int] = parse_grid(PRED_GRID)


def run_replication(cfg: SimConfig, settings: StudySettings, rep: int, irrelevant: bool = False) -> Optional[dict]:
    """
    One replication: simulate, fit, score. Returns None on a numerical failure.
    """
    started = time.time()
    sim = simulate_dataset(cfg, rng_for(cfg.seed, rep), irrelevant=irrelevant)
    mcmc = replace(settings.mcmc, seed=seed_for(cfg.seed, rep, 1))
    try:
        model = fit_model(
            settings.method,
            sim.dataset,
            settings.semimetric,
            prior=settings.prior,
            mcmc=mcmc,
            cv_budget=settings.cv_budget,
            seed=seed_for(cfg.seed, rep, 2),
        )
        fitted = model.fitted()
    except (FunBayesError, ValueError) as e:
        print(f"[ERROR] rep={rep} method={settings.method}: {e}")
        return None

    out = {
        "rep": rep,
        "method": settings.method,
        "ase": float(np.mean((sim.true_m - fitted) ** 2)),
        "seconds": time.time() - started,
        "true_m": sim.true_m,
        "fitted": fitted,
    }
    bandwidths = model.bandwidths.as_dict()
    if settings.method == "cv":
        # no error-density fields for CV
        bandwidths.pop("b", None)
        bandwidths.pop("tau", None)
        out.update(bandwidths)
        print(f"[OK] rep={rep} method=cv ase={out['ase']:.4f} seconds={out['seconds']:.1f}")
        return out

    out.update(bandwidths)
    out.update({f"median_{k}": v for k, v in model.summary["median"].items()})
    out["acceptance_rate"] = model.chain.acceptance_rate
    lo, hi, count = settings.density_grid
    grid = np.linspace(lo, hi, count)
    out["density"] = error_density_grid(model.residuals, model.bandwidths.b, model.bandwidths.tau, grid)
    out["ise"] = mise(sim.law, [out["density"]], grid)[0]
    print(
        f"[OK] rep={rep} method={settings.method} ase={out['ase']:.4f} ise={out['ise']:.4f} "
        f"accept={out['acceptance_rate']:.3f} seconds={out['seconds']:.1f}"
    )
    return out


def _run_many(cfg: SimConfig, settings: StudySettings, jobs: int, irrelevant: bool) -> List[dict]:
    args = [(cfg, settings, rep, irrelevant) for rep in range(cfg.n_replications)]
    if jobs > 1:
        with Pool(processes=jobs) as pool:
            results = pool.starmap(run_replication, args)
    else:
        results = [run_replication(*a) for a in args]
    ok = [r for r in results if r is not None]
    print(f"Study complete. ok={len(ok)} failed={len(results) - len(ok)}")
    return ok


def run_study(cfg: SimConfig, settings: StudySettings, jobs: int = 1) -> Tuple[pd.DataFrame, Dict[str, float]]:
    """
    Per-replication table and aggregate MASE / MISE (mean and sd across
    replications). Cross validation has no error density, so no MISE.
    """
    results = _run_many(cfg, settings, jobs, irrelevant=False)
    if not results:
        return pd.DataFrame(), {}
    table = pd.DataFrame([{k: v for k, v in r.items() if k not in ("true_m", "fitted", "density", "seconds")} for r in results])
    agg: Dict[str, float] = {"method": settings.method, "n": cfg.n, "model": cfg.model, "reps": len(results)}
    agg["mase"], agg["mase_sd"] = mase([r["true_m"] for r in results], [r["fitted"] for r in results])
    if settings.method != "cv":
        lo, hi, count = settings.density_grid
        agg["mise"], agg["mise_sd"] = mise(cfg.error_law, [r["density"] for r in results], np.linspace(lo, hi, count))
    return table, agg


def run_irrelevant_study(cfg: SimConfig, settings: StudySettings, jobs: int = 1) -> pd.DataFrame:
    """
    Model 1 with one irrelevant continuous and one irrelevant ordered
    regressor added. Summarises per-replication posterior medians by their
    median, 10th and 90th percentiles.
    """
    cfg = replace(cfg, model=1, include_discrete=True)
    results = _run_many(cfg, settings, jobs, irrelevant=True)
    cols = [k for k in results[0] if k.startswith("median_")] if results else []
    rows = []
    for col in cols:
        vals = np.array([r[col] for r in results])
        rows.append(
            {
                "parameter": col[len("median_"):],
                "median": float(np.median(vals)),
                "p10": float(np.quantile(vals, 0.1)),
                "p90": float(np.quantile(vals, 0.9)),
            }
        )
    return pd.DataFrame(rows)


def bootstrap_scores(ds: Dataset, rep: int, n_train: int, settings: StudySettings, seed: int) -> Tuple[List[dict], int]:
    """Forecast scores of one bootstrap replicate for the Bayesian method and CV; (rows, failures)."""
    boot = bootstrap_replicate(ds, seed_for(seed, rep, 0))
    train, test = split(boot, n_train)
    rows: List[dict] = []
    failed = 0
    for method in (settings.method, "cv"):
        try:
            model = fit_model(
                method,
                train,
                settings.semimetric,
                prior=settings.prior,
                mcmc=replace(settings.mcmc, seed=seed_for(seed, rep, 1)),
                cv_budget=settings.cv_budget,
                seed=seed_for(seed, rep, 2),
            )
            pred = predict(model, test, grid=settings.pred_grid)
        except (FunBayesError, ValueError) as e:
            failed += 1
            print(f"[ERROR] rep={rep} method={method}: {e}")
            continue
        scores = msfe_mafe(test.y, pred["point"])
        scores["coverage"] = coverage(test.y, pred["lower"], pred["upper"])
        rows.append({"rep": rep, "method": method, **scores, "rmsfe": float(np.sqrt(scores["msfe"]))})
        print(f"[OK] rep={rep} method={method} rmsfe={rows[-1]['rmsfe']:.4f}")
    return rows, failed


def run_bootstrap_comparison(
    ds: Dataset,
    n_reps: int,
    n_train: int,
    settings: StudySettings,
    seed: int = 7,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Resample with replacement, split each replicate into n_train / rest, and
    compare forecast errors of the Bayesian estimator with functional CV.
    """
    args = [(ds, rep, n_train, settings, seed) for rep in range(n_reps)]
    if jobs > 1:
        with Pool(processes=jobs) as pool:
            results = pool.starmap(bootstrap_scores, args)
    else:
        results = [bootstrap_scores(*a) for a in args]
    rows = [row for rep_rows, _ in results for row in rep_rows]
    failed = sum(f for _, f in results)
    print(f"Bootstrap complete. ok={len(rows)} failed={failed}")
    return pd.DataFrame(rows)


# -----------------------
# Synthetic spectroscopy table
# -----------------------
TECATOR_WAVELENGTHS = (850.0, 1050.0)


def _band(wl: np.ndarray, centre: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((wl - centre) / width) ** 2)


def tecator_surrogate(seed: int = 7, n: int = 215) -> Tuple[pd.DataFrame, Schema]:
    """
    n x (100 absorbances + fat + protein + moisture). Absorbance is a
    baseline with a random offset and tilt plus fat, moisture and protein
    absorption bands, so derivative semi-metrics recover the fat signal.
    """
    rng = rng_for(seed)
    wl = np.linspace(*TECATOR_WAVELENGTHS, 100)
    fat = 0.9 + 48.0 * rng.beta(0.8, 1.6, n)
    moisture = 78.0 - 0.68 * fat + rng.normal(0.0, 1.5, n)
    protein = 19.5 - 0.15 * fat + rng.normal(0.0, 1.0, n)

    x = (wl - wl[0]) / (wl[-1] - wl[0])
    baseline = 2.6 + 0.35 * np.sin(np.pi * x)
    curves = (
        baseline[None, :]
        + rng.normal(0.0, 0.4, (n, 1))
        + rng.normal(0.0, 0.2, (n, 1)) * x[None, :]
        + 0.012 * fat[:, None] * _band(wl, 930.0, 18.0)[None, :]
        + 0.010 * moisture[:, None] * _band(wl, 975.0, 25.0)[None, :]
        + 0.015 * protein[:, None] * _band(wl, 1020.0, 30.0)[None, :]
    )

    cols = [f"a{j + 1}" for j in range(wl.size)]
    df = pd.DataFrame(curves, columns=cols)
    df["fat"] = fat
    df["protein"] = protein
    df["moisture"] = moisture
    schema = Schema(
        curve_prefix="a",
        continuous_cols=("protein", "moisture"),
        response_col="fat",
        grid_range=TECATOR_WAVELENGTHS,
        group_threshold=FAT_THRESHOLD,
    )
    return df, schema


def prior_density_curves(priors: Sequence[PriorSpec], grid: np.ndarray) -> pd.DataFrame:
    """Density of each prior over squared bandwidth values."""
    grid = np.asarray(grid, dtype=float)
    out = {"x": grid}
    for prior in priors:
        out[prior.label] = np.exp(prior.log_density(grid))
    return pd.DataFrame(out)


def settings_record(cfg: SimConfig, settings: StudySettings) -> dict:
    return {
        "sim": asdict(cfg),
        "method": settings.method,
        "prior": settings.prior.label,
        "semimetric": settings.semimetric.label,
        "burn_in": settings.mcmc.burn_in,
        "n_record": settings.mcmc.n_record,
        "cv_budget": settings.cv_budget,
        "seed": cfg.seed,
    }
