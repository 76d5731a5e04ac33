"""Run configuration, JSON reports and CSV tables."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

SCHEMA_VERSION = "1.0"


class ConfigError(ValueError):
    """Invalid configuration (maps to exit code 2)."""


def jsonable(x: Any) -> Any:
    """Plain JSON types; complex numbers become [re, im], non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(float(x.real)), jsonable(float(x.imag))]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


@dataclass
class Check:
    name: str
    value: Any
    tolerance: Any
    passed: bool

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


@dataclass
class RunConfig:
    command: str
    model: Optional[str] = None
    Ns: list = field(default_factory=list)
    seed: int = 0
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    out_dir: str = "reports"
    cache_dir: Optional[str] = None

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


@dataclass
class Report:
    command: str
    config: dict
    payload: dict
    checks: list
    passed: bool
    timings: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    @classmethod
    def build(cls, cfg: RunConfig, payload: dict, checks: Sequence[Check], timings: dict) -> "Report":
        return cls(cfg.command, cfg.to_dict(), jsonable(payload), [c.to_dict() for c in checks],
                   all(c.passed for c in checks), jsonable(timings))

    def to_dict(self) -> dict:
        return asdict(self)

    def payload_json(self) -> str:
        """Deterministic part of the report (timings excluded)."""
        d = self.to_dict()
        d.pop("timings")
        return json.dumps(d, sort_keys=True, indent=1)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls(**json.loads(text))


def parse_key_values(lines: Iterable[str]) -> dict:
    """key=value lines; '#' starts a comment; blank lines ignored."""
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {raw.strip()!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ConfigError(f"line {n}: empty key")
        out[k] = v.strip()
    return out


def read_config_file(path: os.PathLike) -> dict:
    try:
        with open(path) as fh:
            return parse_key_values(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def write_report(report: Report, out_dir: os.PathLike, stem: Optional[str] = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / f"{stem or report.command}.json"
    tmp = p.with_suffix(".json.tmp")
    tmp.write_text(report.to_json())
    os.replace(tmp, p)
    return p


def write_csv(path: os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return p
