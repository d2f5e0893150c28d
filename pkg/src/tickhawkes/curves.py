"""Sampled curves ``(tau, value[, stderr])`` and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


class CurveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Curve:
    taus: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if taus.shape != values.shape:
            raise CurveError("taus and values must have the same length")
        if taus.size and (taus[0] <= 0 or np.any(np.diff(taus) <= 0)):
            raise CurveError("taus must be positive and strictly increasing")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            stderr = np.asarray(self.stderr, dtype=float).ravel()
            if stderr.shape != taus.shape:
                raise CurveError("stderr must match taus")
            object.__setattr__(self, "stderr", stderr)

    def __len__(self):
        return self.taus.size

    @property
    def points(self):
        if self.stderr is None:
            return list(zip(self.taus.tolist(), self.values.tolist()))
        return list(zip(self.taus.tolist(), self.values.tolist(), self.stderr.tolist()))

    def to_dict(self) -> dict:
        d = {"name": self.name, "tau": self.taus.tolist(), "value": self.values.tolist()}
        if self.stderr is not None:
            d["stderr"] = self.stderr.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Curve":
        return cls(d["tau"], d["value"], d.get("stderr"), d.get("name", ""))


def write_curve_csv(curve: Curve, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if curve.stderr is None:
            w.writerow(["tau", "value"])
            for t, v in zip(curve.taus, curve.values):
                w.writerow([repr(float(t)), repr(float(v))])
        else:
            w.writerow(["tau", "value", "stderr"])
            for t, v, s in zip(curve.taus, curve.values, curve.stderr):
                w.writerow([repr(float(t)), repr(float(v)), repr(float(s))])


def read_curve_csv(path, name: str = "") -> Curve:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["tau", "value"]:
            raise CurveError(f"{path}: expected header tau,value[,stderr]")
        has_err = len(header) > 2 and header[2] == "stderr"
        rows = [r for r in reader if r]
    taus = [float(r[0]) for r in rows]
    values = [float(r[1]) for r in rows]
    stderr = [float(r[2]) for r in rows] if has_err else None
    return Curve(taus, values, stderr, name or Path(path).stem)


def write_curve_json(curve: Curve, path) -> None:
    Path(path).write_text(json.dumps(curve.to_dict(), indent=2) + "\n")


def read_curve_json(path) -> Curve:
    return Curve.from_dict(json.loads(Path(path).read_text()))


def tau_grid(lo: float, hi: float, n: int, log: bool = True) -> np.ndarray:
    if not 0 < lo < hi or n < 2:
        raise CurveError("tau grid needs 0 < lo < hi and n >= 2")
    if log:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def parse_tau_grid(spec: str) -> np.ndarray:
    """Parse ``lo:hi:n`` or ``lo:hi:n:log`` / ``lo:hi:n:lin``; default spacing is log."""
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise CurveError(f"bad tau grid {spec!r}; expected lo:hi:n[:log|lin]")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    mode = parts[3] if len(parts) == 4 else "log"
    if mode not in ("log", "lin"):
        raise CurveError(f"bad tau grid spacing {mode!r}")
    return tau_grid(lo, hi, n, log=(mode == "log"))
