"""Dataset, parameter, config and report files.

Dataset files are binary: the magic line ``TULK1``, one JSON header line,
then ``M`` bit-packed trajectories of ``ceil(L*V/8)`` bytes each (row-major
over t then u).  Parameter and config files are flat ``key=value`` text;
reports are line-delimited JSON.
"""
import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import FormatError
from .inference.train import TrainConfig
from .model import Kernel, ModelParams, TimeGrid

MAGIC = b"TULK1\n"
PARAMS_TAG = "# tulik-params 1"


@dataclass
class Dataset:
    """Event array ``Y`` of shape (M, L, V) plus its grid and optional truth."""

    grid: TimeGrid
    Y: np.ndarray
    truth: ModelParams = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.uint8)
        if Y.ndim != 3 or Y.shape[1] != self.grid.L:
            raise FormatError(f"event array of shape {Y.shape} does not fit L={self.grid.L}")
        self.Y = Y

    @property
    def M(self):
        return self.Y.shape[0]

    @property
    def V(self):
        return self.Y.shape[2]


def _params_to_json(p):
    return {"mu": [float(x) for x in p.mu],
            "time_invariant": bool(p.kernel.time_invariant),
            "shape": list(p.kernel.values.shape),
            "kernel": [float(x) for x in p.kernel.values.ravel()]}


def _params_from_json(d, grid):
    try:
        vals = np.array(d["kernel"], dtype=float).reshape(d["shape"])
        return ModelParams(d["mu"], Kernel(grid, vals, bool(d["time_invariant"])))
    except (KeyError, ValueError, TypeError) as err:
        raise FormatError(f"bad embedded truth: {err}") from None


def write_dataset(path, ds):
    g = ds.grid
    header = {"h": g.h, "N": g.N, "Nprime": g.Nprime, "V": ds.V, "M": ds.M,
              "network": ds.V > 1,
              "time_invariant": bool(ds.truth is not None and ds.truth.kernel.time_invariant),
              "truth": None if ds.truth is None else _params_to_json(ds.truth),
              "meta": ds.meta}
    body = np.packbits(ds.Y.reshape(ds.M, -1), axis=1) if ds.M else b""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(bytes(np.ascontiguousarray(body)) if ds.M else b"")


def read_dataset(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path}: not a dataset file (bad magic)")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise FormatError(f"{path}: truncated header")
    try:
        hd = json.loads(raw[len(MAGIC):end])
        grid = TimeGrid(hd["h"], hd["N"], hd["Nprime"])
        V, M = int(hd["V"]), int(hd["M"])
    except (KeyError, ValueError, TypeError) as err:
        raise FormatError(f"{path}: bad header ({err})") from None
    nbits = grid.L * V
    stride = math.ceil(nbits / 8)
    body = np.frombuffer(raw, dtype=np.uint8, offset=end + 1)
    if body.size != M * stride:
        raise FormatError(f"{path}: body holds {body.size} bytes, header implies {M * stride}")
    Y = np.unpackbits(body.reshape(M, stride), axis=1, count=nbits).reshape(M, grid.L, V)
    if V > 1 and (Y.sum(axis=2) > 1).any():
        raise FormatError(f"{path}: more than one event in an interval")
    truth = None if hd.get("truth") is None else _params_from_json(hd["truth"], grid)
    return Dataset(grid, Y, truth, hd.get("meta") or {})


def write_params(path, params):
    """Text params file; floats use repr so reading back is bit-exact."""
    g = params.grid
    k = params.kernel
    lines = [PARAMS_TAG, f"h={g.h!r}", f"N={g.N}", f"Nprime={g.Nprime}", f"V={params.V}",
             f"time_invariant={int(k.time_invariant)}",
             "mu=" + ",".join(repr(float(x)) for x in params.mu)]
    v = k.values
    if k.time_invariant:
        lines.append("# kernel rows: l u' u value")
        for (l, a, b), x in np.ndenumerate(v):
            lines.append(f"{l + 1} {a} {b} {float(x)!r}")
    else:
        lines.append("# kernel rows: i l u' u value  (value = K_{i,i+l}(u',u))")
        for (r, l, a, b), x in np.ndenumerate(v):
            lines.append(f"{r + g.first} {l + 1} {a} {b} {float(x)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_params(path):
    keys = {}
    rows = []
    with open(path) as fh:
        text = fh.read().splitlines()
    if not text or text[0].strip() != PARAMS_TAG:
        raise FormatError(f"{path}: not a params file")
    for n, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, val = line.split("=", 1)
            keys[key.strip()] = val.strip()
        else:
            rows.append((n, line.split()))
    try:
        grid = TimeGrid(float(keys["h"]), int(keys["N"]), int(keys["Nprime"]))
        V = int(keys["V"])
        inv = bool(int(keys["time_invariant"]))
        mu = [float(x) for x in keys["mu"].split(",")]
    except (KeyError, ValueError) as err:
        raise FormatError(f"{path}: bad or missing key ({err})") from None
    shape = (grid.Nprime, V, V) if inv else (grid.L, grid.Nprime, V, V)
    vals = np.full(shape, np.nan)
    offset = (-1, 0, 0) if inv else (-grid.first, -1, 0, 0)
    for n, parts in rows:
        try:
            idx = tuple(int(p) + o for p, o in zip(parts[:-1], offset))
            if len(idx) != len(shape) or any(not 0 <= i < s for i, s in zip(idx, shape)):
                raise ValueError("index out of range")
            vals[idx] = float(parts[-1])
        except ValueError as err:
            raise FormatError(f"{path}:{n}: bad kernel row ({err})") from None
    if np.isnan(vals).any():
        raise FormatError(f"{path}: kernel rows missing")
    try:
        return ModelParams(mu, Kernel(grid, vals, inv))
    except ValueError as err:
        raise FormatError(f"{path}: {err}") from None


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(f"{k}:{r!r}" for k, r in v)
    return str(v)


def write_config(path, config):
    with open(path, "w") as fh:
        for f in fields(TrainConfig):
            fh.write(f"{f.name}={_format_value(getattr(config, f.name))}\n")


def parse_config(text, source="config"):
    """TrainConfig from ``key=value`` lines; unspecified keys keep their defaults."""
    kinds = {f.name: f.type for f in fields(TrainConfig)}
    defaults = TrainConfig()
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{n}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise FormatError(f"{source}:{n}: unknown key {key!r}")
        base = getattr(defaults, key)
        try:
            if key == "lr_schedule":
                out[key] = tuple((int(a), float(b)) for a, b in
                                 (item.split(":") for item in val.split(",")))
            elif key == "svd_threshold":
                out[key] = None if val.lower() == "none" else float(val)
            elif isinstance(base, bool):
                if val.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(val)
                out[key] = val.lower() in ("true", "1")
            elif isinstance(base, int):
                out[key] = int(val)
            elif isinstance(base, float):
                out[key] = float(val)
            else:
                out[key] = val
        except ValueError:
            raise FormatError(f"{source}:{n}: bad value for {key}: {val!r}") from None
    return TrainConfig(**out)


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


def report_records(report):
    """JSON-ready records: one per epoch, then a summary line."""
    for k, nll in enumerate(report.nll_per_epoch):
        yield {"epoch": k + 1, "nll": nll,
               "mu": [float(x) for x in report.mu_trace[k]],
               "violations": int(report.violation_counts[k]),
               "mu_skips": int(report.mu_skips[k])}
    yield {"summary": True, "epochs": report.epochs,
           "truncation_rank": report.truncation_rank,
           "metadata": report.metadata}


def write_report(path, report):
    with open(path, "w") as fh:
        for rec in report_records(report):
            fh.write(json.dumps(rec) + "\n")


def read_report(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
