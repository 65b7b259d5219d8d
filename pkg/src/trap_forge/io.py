"""Electrode map files, JSON reports and sweep tables.

An electrode map is plain text.  Header lines start with ``#`` and hold
``key: <json value>`` pairs; the body lists the patch amplitudes in index
order, one grid row (fixed ``q``) per line.  Railed amplitudes are written as
the characters ``0`` and ``1``; interior ones in full precision.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import TrapSpec
from .lattice import BravaisLattice, PatchGrid

SWEEP_COLUMNS = ("z_over_d", "kappa", "tau", "interior", "runtime_s", "status")


class MapFormatError(ValueError):
    pass


@dataclass
class ElectrodeMap:
    lattice: BravaisLattice
    grid: PatchGrid
    a: np.ndarray
    n_cut: int
    rail_tol: float = 1e-7
    C: float | None = None
    kappa: list = field(default_factory=list)
    traps: list = field(default_factory=list)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.a.shape != (self.grid.N,):
            raise MapFormatError(f"expected {self.grid.N} amplitudes, got {self.a.size}")
        if np.any(self.a < 0) or np.any(self.a > 1):
            raise MapFormatError("amplitudes must lie in [0, 1]")

    @property
    def interior_count(self) -> int:
        t = self.rail_tol
        return int(np.sum((self.a > t) & (self.a < 1 - t)))

    def _format_value(self, x: float) -> str:
        if x <= self.rail_tol:
            return "0"
        if x >= 1 - self.rail_tol:
            return "1"
        return f"{x:.17g}"

    def dumps(self) -> str:
        header = {
            "a1": list(map(float, self.lattice.a1)),
            "a2": list(map(float, self.lattice.a2)),
            "grid": self.grid.kind,
            "n1": self.grid.n1,
            "n2": self.grid.n2,
            "n_cut": self.n_cut,
            "rail_tol": self.rail_tol,
            "C": self.C,
            "kappa": [float(k) for k in self.kappa],
            "traps": [
                {"label": t.label, "position": [float(x) for x in t.position],
                 "gamma": np.asarray(t.gamma).tolist()}
                for t in self.traps
            ],
        }
        lines = ["# trap-forge electrode map"]
        lines += [f"# {key}: {json.dumps(value)}" for key, value in header.items()]
        per_row = self.grid.N // self.grid.n2
        for q in range(self.grid.n2):
            row = self.a[q * per_row:(q + 1) * per_row]
            lines.append(" ".join(self._format_value(x) for x in row))
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    @classmethod
    def loads(cls, text: str) -> ElectrodeMap:
        header, body = {}, []
        for lineno, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, sep, value = s[1:].partition(":")
                if sep and key.strip() and value.strip():
                    try:
                        header[key.strip()] = json.loads(value)
                    except json.JSONDecodeError as exc:
                        raise MapFormatError(f"line {lineno}: bad header value for {key.strip()!r}") from exc
                continue
            try:
                body.extend(float(tok) for tok in s.split())
            except ValueError as exc:
                raise MapFormatError(f"line {lineno}: non-numeric amplitude") from exc
        missing = [k for k in ("a1", "a2", "grid", "n1", "n2", "n_cut") if k not in header]
        if missing:
            raise MapFormatError(f"missing header fields: {', '.join(missing)}")
        try:
            lattice = BravaisLattice(tuple(header["a1"]), tuple(header["a2"]))
            grid = PatchGrid(header["grid"], int(header["n1"]), int(header["n2"]))
            traps = [TrapSpec(tuple(t["position"]), np.asarray(t["gamma"]), t.get("label", ""))
                     for t in header.get("traps", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(f"invalid header: {exc}") from exc
        return cls(
            lattice=lattice, grid=grid, a=np.asarray(body), n_cut=int(header["n_cut"]),
            rail_tol=float(header.get("rail_tol", 1e-7)), C=header.get("C"),
            kappa=list(header.get("kappa", [])), traps=traps,
        )

    @classmethod
    def read(cls, path) -> ElectrodeMap:
        return cls.loads(Path(path).read_text())

    def scale_from_body(self, inhom) -> float:
        """``C`` implied by the body through the minimum-norm field solution."""
        g = np.asarray(inhom)
        return float(self.a @ g / (g @ g))


def _plain(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(data, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
    return path


def dumps_json(data) -> str:
    return json.dumps(_plain(data), indent=2, sort_keys=True)


def write_sweep_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row.get(k)) for k in SWEEP_COLUMNS})
    return path


def _csv_value(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "" if not math.isfinite(float(x)) else repr(float(x))
    return x


def read_sweep_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
