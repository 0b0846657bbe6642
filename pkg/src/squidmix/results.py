"""Experiment result container and on-disk formats.

Every experiment emits one ExperimentResult: labeled axes, named data
arrays, fit outputs, and run metadata.  Persistence is a JSON metadata
file (stable key order) plus one CSV per data array; floats are written
with 12 significant digits so identical runs are byte-identical.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np


def fmt(x):
    """Fixed 12-significant-digit float formatting for CSV output."""
    return f"{float(x):.12g}"


@dataclass(frozen=True)
class Axis:
    name: str
    unit: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError(f"axis {self.name!r} must be a nonempty 1-D grid")
        if v.size > 1 and not (np.all(np.diff(v) > 0) or np.all(np.diff(v) < 0)):
            raise ValueError(f"axis {self.name!r} must be monotone")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SweepSpec:
    """Record of what a sweep ran over: axes, fixed settings, observables."""

    axes: List[Axis]
    fixed: dict
    observables: tuple


@dataclass
class ExperimentResult:
    name: str
    axes: List[Axis]
    data: dict
    fits: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(len(ax.values) for ax in self.axes)
        for key, arr in self.data.items():
            a = np.asarray(arr)
            if a.shape != shape and a.shape != shape[:a.ndim]:
                raise ValueError(
                    f"data {key!r} shape {a.shape} does not match axes "
                    f"{shape}")

    def write(self, outdir):
        """Write <name>.json plus <name>__<key>.csv per data array."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        files = []
        for key in sorted(self.data):
            path = outdir / f"{self.name}__{key}.csv"
            self._write_csv(path, key, np.asarray(self.data[key]))
            files.append(path.name)
        meta = {
            "name": self.name,
            "axes": [{"name": ax.name, "unit": ax.unit,
                      "values": [float(v) for v in ax.values]}
                     for ax in self.axes],
            "data_files": files,
            "fits": _jsonable(self.fits),
            "metadata": _jsonable(self.metadata),
        }
        jpath = outdir / f"{self.name}.json"
        jpath.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n",
                         encoding="utf-8")
        return jpath

    def _write_csv(self, path, key, arr):
        axes = self.axes[:arr.ndim]
        header = [f"{ax.name}_{ax.unit}" if ax.unit else ax.name
                  for ax in axes] + [key]
        lines = [",".join(header)]
        if arr.ndim == 1:
            for i, v in enumerate(arr):
                lines.append(",".join([fmt(axes[0].values[i]), _cell(v)]))
        elif arr.ndim == 2:
            for i in range(arr.shape[0]):
                for j in range(arr.shape[1]):
                    lines.append(",".join([fmt(axes[0].values[i]),
                                           fmt(axes[1].values[j]),
                                           _cell(arr[i, j])]))
        else:
            raise ValueError(f"cannot serialize {arr.ndim}-D data {key!r}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cell(v):
    if isinstance(v, complex) or np.iscomplexobj(v):
        return f"{fmt(np.real(v))}{'+' if np.imag(v) >= 0 else ''}{fmt(np.imag(v))}j"
    return fmt(v)


def _jsonable(obj):
    """Recursively convert numpy containers for stable JSON output."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_table(path, header, rows):
    """Plain CSV writer used for non-gridded tables (flux sweeps etc.)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) if not isinstance(v, str) else v
                              for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
