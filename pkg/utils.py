import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from config import VERSION


class FunBayesError(Exception):
    exit_code = 1


class UsageError(FunBayesError):
    exit_code = 2


class DataError(FunBayesError):
    exit_code = 3


class NumericalError(FunBayesError):
    exit_code = 4


class DegenerateWeights(NumericalError):
    """All kernel weights of one estimate are zero."""

    def __init__(self, index: Optional[int] = None):
        self.index = index
        where = f" at observation {index}" if index is not None else ""
        super().__init__(f"Kernel weights are all zero{where}")


def rng_for(seed: int, index: int = 0) -> np.random.Generator:
    # one independent stream per (master seed, replication)
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def seed_for(seed: int, index: int, purpose: int = 0) -> int:
    return int(np.random.SeedSequence([int(seed), int(index), int(purpose)]).generate_state(1)[0])


def _jsonable(val: Any) -> Any:
    if isinstance(val, dict):
        return {str(k): _jsonable(v) for k, v in val.items()}
    if isinstance(val, (list, tuple)):
        return [_jsonable(v) for v in val]
    if isinstance(val, np.ndarray):
        return val.tolist()
    if isinstance(val, np.generic):
        return val.item()
    if isinstance(val, Path):
        return str(val)
    return val


def config_hash(config: Dict[str, Any]) -> str:
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def build_manifest(config: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "tool": "funbayes",
        "version": VERSION,
        "config_hash": config_hash(config),
        "seed": config.get("seed"),
    }


def manifest_line(manifest: Dict[str, Any]) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in manifest.items())


def write_csv(df: pd.DataFrame, path: Path, manifest: Dict[str, Any], index: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(manifest_line(manifest) + "\n")
        df.to_csv(fh, index=index, float_format="%.17g")


def read_csv(path: Path, **kwargs) -> pd.DataFrame:
    # round_trip parses the %.17g text written by write_csv back to the same doubles
    kwargs.setdefault("float_precision", "round_trip")
    return pd.read_csv(path, comment="#", **kwargs)


def write_json(obj: Dict[str, Any], path: Path, manifest: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"manifest": manifest, **obj}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2)


def read_json(path: Path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
