"""File formats: system JSON, measure files, Fourier-sample CSV, point sets and hit tables."""

from __future__ import annotations

import csv
import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _exact
from .configsearch import ConfigurationHit, ExceptionalSubspace, PointSet
from .fractal import FourierSample, GridMeasure
from .functions import GridFunction
from .linsys import MatrixSystem, build_system, system_from_A

PURE_JSON_MAX_N = 64


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def _default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


# ---------------------------------------------------------------------------
# systems


def system_from_dict(data: dict) -> MatrixSystem:
    """{"n","k","m"} plus either "B" (A_j = (I B_j)) or "A" (general n x m blocks)."""
    try:
        n, k, m = (int(data[key]) for key in ("n", "k", "m"))
    except KeyError as exc:
        raise ValueError(f"system is missing field {exc}") from None
    if "B" in data:
        return build_system(n, k, m, data["B"])
    if "A" in data:
        return system_from_A(n, k, m, data["A"])
    raise ValueError("system needs a 'B' or an 'A' list")


def read_json(path):
    """Decimals are parsed as exact fractions so that "0.5" stays exact."""
    text = Path(path).read_text()
    return json.loads(text, parse_float=Fraction)


def load_system(path) -> MatrixSystem:
    return system_from_dict(read_json(path))


def load_exclusions(data: dict) -> list[ExceptionalSubspace]:
    mats = data.get("exclusions", [])
    return [ExceptionalSubspace.from_matrix(_exact.to_float_matrix(mat), f"V{i + 1}")
            for i, mat in enumerate(mats)]


def save_system(system: MatrixSystem, path, exclusions: Sequence[ExceptionalSubspace] = ()) -> None:
    out = system.to_dict()
    if exclusions:
        out["exclusions"] = [ex.matrix.tolist() for ex in exclusions]
    write_json(out, path)


# ---------------------------------------------------------------------------
# measures


def save_measure(measure: GridMeasure, path, fmt: str | None = None, meta: dict | None = None) -> None:
    """Header line {"n","N","format"} then the data.

    ``fmt='f64-le'`` appends N^n little-endian doubles in row-major order;
    ``fmt='json'`` (allowed for N <= 64) stores the weights inside the header.
    """
    fmt = fmt or ("json" if measure.N <= PURE_JSON_MAX_N else "f64-le")
    header = {"n": measure.n, "N": measure.N, "format": fmt}
    if meta:
        header["meta"] = meta
    if fmt == "json":
        if measure.N > PURE_JSON_MAX_N:
            raise ValueError(f"pure JSON is limited to N <= {PURE_JSON_MAX_N}")
        header["weights"] = measure.weights.tolist()
        Path(path).write_text(json.dumps(header, sort_keys=True) + "\n")
    elif fmt == "f64-le":
        data = np.ascontiguousarray(measure.weights, dtype="<f8").tobytes()
        Path(path).write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + data)
    else:
        raise ValueError(f"unknown measure format {fmt!r}")


def _read_envelope(path):
    raw = Path(path).read_bytes()
    cut = raw.find(b"\n")
    if cut < 0:
        cut = len(raw)
    try:
        header = json.loads(raw[:cut])
    except (ValueError, UnicodeDecodeError) as exc:
        raise ValueError(f"{path}: unreadable header: {exc}") from None
    for key in ("n", "N", "format"):
        if key not in header:
            raise ValueError(f"{path}: header lacks {key!r}")
    n, N = int(header["n"]), int(header["N"])
    if header["format"] == "json":
        values = np.array(header["weights"], dtype=float)
    elif header["format"] == "f64-le":
        body = raw[cut + 1:]
        if len(body) != 8 * N ** n:
            raise ValueError(f"{path}: expected {8 * N ** n} data bytes, found {len(body)}")
        values = np.frombuffer(body, dtype="<f8").astype(float)
    else:
        raise ValueError(f"{path}: unknown format {header['format']!r}")
    return header, values.reshape((N,) * n)


def load_measure(path) -> GridMeasure:
    header, values = _read_envelope(path)
    return GridMeasure(int(header["n"]), int(header["N"]), values)


def save_grid_function(func: GridFunction, path) -> None:
    header = {"n": func.n, "N": func.values.shape[0], "format": "f64-le", "lo": func.lo.tolist(), "h": func.h}
    data = np.ascontiguousarray(func.values, dtype="<f8").tobytes()
    Path(path).write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + data)


def load_grid_function(path) -> GridFunction:
    header, values = _read_envelope(path)
    if "lo" not in header or "h" not in header:
        raise ValueError(f"{path}: not a grid-function file (needs 'lo' and 'h')")
    return GridFunction(values, np.array(header["lo"], dtype=float), float(header["h"]))


# ---------------------------------------------------------------------------
# Fourier samples


def save_fourier_csv(sample: FourierSample, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"xi_{a + 1}" for a in range(sample.n)] + ["re", "im"])
        for xi, val in zip(sample.freqs, sample.values):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(val.real)), repr(float(val.imag))])


def load_fourier_csv(path) -> FourierSample:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    n = len(header) - 2
    if n < 1 or header[-2:] != ["re", "im"]:
        raise ValueError(f"{path}: expected columns xi_1..xi_n,re,im")
    data = np.array(body, dtype=float)
    side = round(len(body) ** (1 / n))
    if side ** n != len(body) or side % 2 == 0:
        raise ValueError(f"{path}: {len(body)} rows do not form a centred lattice")
    Xi = (side - 1) // 2
    step = float(data[:, 0].max()) / Xi if Xi else 1.0
    grid = (data[:, n] + 1j * data[:, n + 1]).reshape((side,) * n)
    sample = FourierSample(n, Xi, grid, step)
    if not np.allclose(sample.freqs, data[:, :n], rtol=0, atol=1e-9 * max(1.0, Xi * step)):
        raise ValueError(f"{path}: frequencies are not the row-major lattice step * k")
    return sample


# ---------------------------------------------------------------------------
# point sets and hits


def load_pointset(path, tol: float | None = None) -> PointSet:
    """JSON {"n", "points", ["tol"]}, or a measure-style file read as its occupancy."""
    raw = Path(path).read_bytes()
    first = raw[: raw.find(b"\n")] if b"\n" in raw else raw
    try:
        head = json.loads(first)
    except ValueError:
        head = None
    if isinstance(head, dict) and "format" in head:
        _, values = _read_envelope(path)
        return PointSet.from_occupancy(values > 0, tol)
    data = json.loads(raw)
    if "points" not in data or "n" not in data:
        raise ValueError(f"{path}: point set needs 'n' and 'points'")
    pts = np.array(data["points"], dtype=float).reshape(-1, int(data["n"]))
    use_tol = tol if tol is not None else data.get("tol")
    if use_tol is None:
        raise ValueError(f"{path}: no matching tolerance given")
    return PointSet(int(data["n"]), pts, float(use_tol), data.get("N"))


def save_hits_csv(hits: Sequence[ConfigurationHit], path, n: int, dim: int, q: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{a + 1}" for a in range(n)] + [f"y_{a + 1}" for a in range(dim)]
                        + ["max_dist", "margin_0"] + [f"margin_V{i + 1}" for i in range(q)])
        for h in hits:
            writer.writerow([repr(float(v)) for v in (*h.x, *h.y, h.max_dist, *h.margins)])
