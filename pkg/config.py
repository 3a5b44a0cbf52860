import os
from typing import Any, Callable, Dict, List, Optional, Tuple

VERSION = "0.3.0"

ENV_PREFIX = "FUNBAYES_"


def env_name(flag: str) -> str:
    return ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper()


def env_default(flag: str, fallback: Optional[str] = None) -> Optional[str]:
    """
    Default for a CLI flag, read from FUNBAYES_<FLAG> when set.
    Dashes in the flag name become underscores: --cv-budget -> FUNBAYES_CV_BUDGET.
    """
    val = os.environ.get(env_name(flag))
    if val is None or val == "":
        return fallback
    return val


# flag -> cast, for every typed default read so far
_TYPED: Dict[str, Callable[[str], Any]] = {}


def env_typed(flag: str, fallback: Optional[str], cast: Callable[[str], Any]) -> Any:
    """
    Typed flag default. A malformed FUNBAYES_ value falls back here and is
    reported by env_problems(), so the CLI can exit with a usage error.
    """
    _TYPED[flag] = cast
    val = env_default(flag)
    if val is not None:
        try:
            return cast(val)
        except ValueError:
            pass
    return cast(fallback) if fallback is not None else None


def env_problems() -> List[str]:
    problems = []
    for flag, cast in _TYPED.items():
        val = env_default(flag)
        if val is None:
            continue
        try:
            cast(val)
        except ValueError:
            problems.append(f"{env_name(flag)}={val!r} is not a valid {cast.__name__}")
    return problems


def parse_grid(text: str) -> Tuple[float, float, int]:
    """
    "lo:hi:count" -> (lo, hi, count)
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"Grid must look like lo:hi:count, got {text!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if not lo < hi:
        raise ValueError(f"Grid needs lo < hi, got {text!r}")
    if count < 2:
        raise ValueError(f"Grid needs at least 2 points, got {text!r}")
    return lo, hi, count


# Sampler: burn-in and recorded iterations
BURN_IN = env_typed("burnin", "1000", int)
N_RECORD = env_typed("iters", "10000", int)
SEED = env_typed("seed", "7", int)
TARGET_ACCEPT = env_typed("target_accept", "0.234", float)
ADAPT_DECAY = env_typed("adapt_decay", "0.6", float)
INITIAL_STEP = env_typed("initial_step", "0.5", float)
INIT_RETRIES = 50

# Batch size for SIF / batch-mean SE
BATCH_SIZE = env_typed("batch_size", "100", int)

# Squared-bandwidth prior: ig:alpha:beta or cauchy[:scale]
PRIOR = env_default("prior", "ig:1:0.05")
PRIOR_PRESETS = ["ig:1:0.05", "ig:5:0.25", "cauchy"]

# Semi-metric; n_basis unset means min(20, grid_length // 2)
SEMIMETRIC = env_default("semimetric", "deriv:2")
N_BASIS = env_typed("n_basis", None, int)
GAUSS_NODES_PER_SPAN = 5

# Prediction interval CDF grid and MISE window
PRED_GRID = env_default("pred_grid", "-10:10:1001")
MISE_GRID = env_default("mise_grid", "-5:5:1001")

# Marginal likelihood proposal draws
CJ_DRAWS = env_typed("cj_draws", "2000", int)

# Functional cross validation
CV_BUDGET = env_typed("cv_budget", "400", int)
CV_STARTS = 5
CV_MIN_BUDGET = 50

# Simulation study (full scale runs use 100 replications)
REPLICATIONS = env_typed("reps", "20", int)
JOBS = env_typed("jobs", "1", int)
SIM_GRID_SIZE = 100

# Tecator-style workflow
TECATOR_N_TRAIN = 160
FAT_THRESHOLD = 20.0
