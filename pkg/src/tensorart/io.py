"""File formats: tensor series, model files, traces, summaries and IRF grids.

All files are UTF-8 with LF line endings and are written atomically (a
temporary file in the target directory is renamed over the destination).
Floats are written so that reading them back gives the identical double:
CSV cells use 17 significant digits and JSON uses Python's round-trip repr.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from math import prod
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .gibbs import Trace
from .model import ArtModel, TensorSeries
from .tensor import devectorize, vectorize

__all__ = [
    "FormatError",
    "SCHEMA_VERSION",
    "atomic_write_text",
    "AtomicWriter",
    "fmt_float",
    "write_tensor_series",
    "load_tensor_series",
    "write_model",
    "load_model",
    "trace_line",
    "write_trace",
    "load_trace",
    "write_json",
    "write_irf_grid",
    "irf_grid_rows",
]

SCHEMA_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


class AtomicWriter:
    """Text file that only appears under ``path`` once :meth:`commit` is called."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", suffix=".tmp", dir=self.path.parent)
        self.tmp = Path(tmp)
        self.fh = os.fdopen(fd, "w", encoding="utf-8", newline="\n")

    def write(self, text: str) -> None:
        self.fh.write(text)

    def commit(self) -> None:
        self.fh.flush()
        os.fsync(self.fh.fileno())
        self.fh.close()
        os.replace(self.tmp, self.path)

    def discard(self) -> None:
        if not self.fh.closed:
            self.fh.close()
        self.tmp.unlink(missing_ok=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False


def atomic_write_text(path, text: str) -> None:
    with AtomicWriter(path) as w:
        w.write(text)


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, allow_nan=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# --------------------------------------------------------------------------
# tensor series


def write_tensor_series(series: TensorSeries, path, format: str = "csv_long") -> None:
    data = series.data
    dims = series.dims
    N = len(dims)
    buf = io.StringIO()
    if format == "csv_long":
        buf.write(",".join(["t"] + [f"i{k + 1}" for k in range(N)] + ["value"]) + "\n")
        for t in range(series.T):
            for idx in np.ndindex(*dims[::-1]):
                idx = idx[::-1]  # column-major: first index fastest
                buf.write(",".join([str(t + 1)] + [str(i + 1) for i in idx] + [fmt_float(data[(t,) + idx])]) + "\n")
    elif format == "ndjson":
        for t in range(series.T):
            buf.write(json.dumps({"t": t + 1, "dims": list(dims), "values": vectorize(data[t]).tolist()}) + "\n")
    else:
        raise FormatError(f"unknown series format {format!r}")
    atomic_write_text(path, buf.getvalue())


def _parse_int(s, path, line, what):
    try:
        v = int(s)
    except ValueError:
        raise FormatError(f"{path}:{line}: {what} {s!r} is not an integer") from None
    return v


def _load_csv_long(path, dims: Sequence[int] | None) -> TensorSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        N = len(header) - 2
        expected = ["t"] + [f"i{k + 1}" for k in range(N)] + ["value"]
        if N < 1 or header != expected:
            raise FormatError(f"{path}:1: header must be t,i1,...,iN,value; got {','.join(header)}")
        if dims is not None and len(dims) != N:
            raise FormatError(f"{path}:1: file has {N} index columns, expected order {len(dims)}")
        cells = {}
        lines = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != N + 2:
                raise FormatError(f"{path}:{line}: expected {N + 2} fields, got {len(row)}")
            t = _parse_int(row[0], path, line, "time index")
            idx = tuple(_parse_int(c, path, line, f"index i{k + 1}") for k, c in enumerate(row[1:-1]))
            try:
                value = float(row[-1])
            except ValueError:
                raise FormatError(f"{path}:{line}: value {row[-1]!r} is not numeric") from None
            if not math.isfinite(value):
                raise FormatError(f"{path}:{line}: value {row[-1]!r} is not finite")
            if t < 1 or any(i < 1 for i in idx):
                raise FormatError(f"{path}:{line}: indices are 1-based; got t={t}, index={idx}")
            if dims is not None and any(i > d for i, d in zip(idx, dims)):
                raise FormatError(f"{path}:{line}: index {idx} out of range for dims {tuple(dims)}")
            key = (t,) + idx
            if key in cells:
                raise FormatError(f"{path}:{line}: duplicate row for t={t}, index={idx} (first seen on line {lines[key]})")
            cells[key] = value
            lines[key] = line
    if not cells:
        raise FormatError(f"{path}: no observations")
    times = sorted({k[0] for k in cells})
    if dims is None:
        dims = tuple(max(k[m + 1] for k in cells) for m in range(N))
    dims = tuple(int(d) for d in dims)
    if times != list(range(times[0], times[0] + len(times))):
        raise FormatError(f"{path}: time indices are not consecutive")
    T = len(times)
    expected_cells = T * prod(dims)
    if len(cells) != expected_cells:
        for t in times:
            for idx in np.ndindex(*dims):
                key = (t,) + tuple(i + 1 for i in idx)
                if key not in cells:
                    raise FormatError(f"{path}: missing cell t={t}, index={key[1:]} (data must be dense)")
    data = np.empty((T,) + dims)
    t0 = times[0]
    for key, v in cells.items():
        data[(key[0] - t0,) + tuple(i - 1 for i in key[1:])] = v
    return TensorSeries(data)


def _load_ndjson_series(path, dims) -> TensorSeries:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
                t = int(obj["t"])
                d = tuple(int(v) for v in obj["dims"])
                vals = np.asarray(obj["values"], dtype=float)
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{line}: malformed record ({exc})") from None
            if dims is not None and d != tuple(dims):
                raise FormatError(f"{path}:{line}: dims {d} do not match {tuple(dims)}")
            if vals.shape != (prod(d),):
                raise FormatError(f"{path}:{line}: expected {prod(d)} values, got {vals.size}")
            if not np.all(np.isfinite(vals)):
                raise FormatError(f"{path}:{line}: non-finite value")
            rows.append((t, line, devectorize(vals, d)))
    if not rows:
        raise FormatError(f"{path}: no observations")
    rows.sort(key=lambda r: r[0])
    for (t0, l0, _), (t1, l1, _) in zip(rows, rows[1:]):
        if t1 == t0:
            raise FormatError(f"{path}:{l1}: duplicate time index {t1} (first seen on line {l0})")
    if len({r[2].shape for r in rows}) != 1:
        raise FormatError(f"{path}: inconsistent dims across records")
    return TensorSeries(np.stack([r[2] for r in rows]))


def load_tensor_series(path, format: str = "csv_long", dims: Sequence[int] | None = None) -> TensorSeries:
    """Read a dense tensor series; observations are returned sorted by time."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    if format == "csv_long":
        return _load_csv_long(path, dims)
    if format == "ndjson":
        return _load_ndjson_series(path, dims)
    raise FormatError(f"unknown series format {format!r}")


# --------------------------------------------------------------------------
# models


def write_model(model: ArtModel, path, extra: dict | None = None) -> None:
    """JSON model file; tensors are stored as column-major flat lists."""
    obj = {
        "schema_version": SCHEMA_VERSION,
        "dims": list(model.dims),
        "p": model.p,
        "coefs": [vectorize(A).tolist() for A in model.coefs],
        "covs": [vectorize(S).tolist() for S in model.covs],
        "intercept": None if model.intercept is None else vectorize(model.intercept).tolist(),
    }
    if model.parafac:
        obj["parafac_factors"] = [[F.reshape(-1, order="F").tolist() for F in c.factors()] for c in model.parafac]
    if extra:
        obj.update(extra)
    write_json(path, obj)


def load_model(path) -> ArtModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        dims = tuple(int(d) for d in obj["dims"])
        n = prod(dims)
        coefs = tuple(devectorize(np.asarray(c, float), dims + (n,)) for c in obj["coefs"])
        covs = tuple(devectorize(np.asarray(S, float), (d, d)) for S, d in zip(obj["covs"], dims))
        icpt = obj.get("intercept")
        icpt = None if icpt is None else devectorize(np.asarray(icpt, float), dims)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: cannot read model ({exc})") from None
    return ArtModel(dims, coefs, covs, icpt)


# --------------------------------------------------------------------------
# traces


def trace_line(chain: int, iteration: int, B: np.ndarray, covs, tau: float, gamma: float, phi) -> str:
    obj = {
        "chain": int(chain),
        "iteration": int(iteration),
        "B": vectorize(B).tolist(),
        "Sigma": [vectorize(S).tolist() for S in covs],
        "tau": float(tau),
        "gamma": float(gamma),
        "phi": [float(v) for v in phi],
    }
    return json.dumps(obj, separators=(",", ":")) + "\n"


def write_trace(trace: Trace, path, chain: int = 0) -> None:
    with AtomicWriter(path) as w:
        for k in range(len(trace)):
            w.write(
                trace_line(chain, trace.iterations[k], trace.B[k], [S[k] for S in trace.covs], trace.tau[k], trace.gamma[k], trace.phi[k])
            )


def load_trace(path, dims: Sequence[int]) -> Trace:
    """Read an NDJSON trace written by :func:`write_trace` or the ``fit`` command."""
    dims = tuple(int(d) for d in dims)
    n = prod(dims)
    its, Bs, covs, taus, gammas, phis = [], [], [[] for _ in dims], [], [], []
    with open(path, encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
                its.append(int(obj["iteration"]))
                Bs.append(devectorize(np.asarray(obj["B"], float), dims + (n,)))
                if len(obj["Sigma"]) != len(dims):
                    raise ValueError(f"expected {len(dims)} covariance matrices")
                for j, d in enumerate(dims):
                    covs[j].append(devectorize(np.asarray(obj["Sigma"][j], float), (d, d)))
                taus.append(float(obj["tau"]))
                gammas.append(float(obj["gamma"]))
                phis.append(np.asarray(obj["phi"], float))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{line}: malformed trace record ({exc})") from None
    R = phis[0].shape[0] if phis else 1
    if not its:
        return Trace.empty(dims, R)
    return Trace(
        dims,
        np.asarray(its, dtype=int),
        np.stack(Bs),
        [np.stack(c) for c in covs],
        np.asarray(taus),
        np.asarray(gammas),
        np.stack(phis),
    )


# --------------------------------------------------------------------------
# IRF grids


def irf_grid_rows(summaries) -> Iterable[list[str]]:
    """CSV rows ``method,h,i1..iN,response,q16,q84,q05,q95,significant``."""
    for s in summaries:
        dims = s.dims
        sig = s.significant
        H = s.median.shape[0] - 1
        for h in range(H + 1):
            for k in range(prod(dims)):
                idx = np.unravel_index(k, dims, order="F")
                yield [s.method, str(h)] + [str(int(i) + 1) for i in idx] + [
                    fmt_float(s.median[h, k]),
                    fmt_float(s.q16[h, k]),
                    fmt_float(s.q84[h, k]),
                    fmt_float(s.q05[h, k]),
                    fmt_float(s.q95[h, k]),
                    "true" if sig[h, k] else "false",
                ]


def write_irf_grid(summaries, path) -> int:
    summaries = list(summaries)
    N = len(summaries[0].dims)
    header = ["method", "h"] + [f"i{k + 1}" for k in range(N)] + ["response", "q16", "q84", "q05", "q95", "significant"]
    lines = [",".join(header)]
    lines += [",".join(r) for r in irf_grid_rows(summaries)]
    atomic_write_text(path, "\n".join(lines) + "\n")
    return len(lines) - 1
