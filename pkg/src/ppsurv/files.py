"""Readers and writers for draws, mixtures, sampling priors and JSON summaries."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError
from .model import MvnMixture


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, float) and not np.isfinite(o):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, float) and not np.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, default=_default) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def write_matrix(path, x, columns) -> None:
    pd.DataFrame(np.atleast_2d(x), columns=list(columns)).to_csv(path, index=False)


def read_matrix(path) -> np.ndarray:
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    x = df.to_numpy(dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ConfigError(f"{path}: matrix must be nonempty and numeric")
    return x


def write_mixture(path, mix: MvnMixture) -> None:
    write_json(path, {"components": mix.to_json()})


def read_mixture(path) -> MvnMixture:
    return MvnMixture.from_json(read_json(path))
