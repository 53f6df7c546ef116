"""CSV and JSON artifacts.

Simulation tables are CSV files whose leading ``#`` lines carry
``key=value`` metadata (``n_obs``, ``block_sizes``).  The header is
``theta_1..theta_d, loglik, weight`` followed by ``block_1..block_K`` when
block sums are present.  Floats are written with 17 significant digits.
"""
import csv
import io
import json
import math

import numpy as np

from .metamodel import SimLogLikTable

__all__ = [
    "fmt_float",
    "write_table",
    "read_table",
    "table_to_csv",
    "rows_to_csv",
    "read_raw_table",
    "observations_to_csv",
    "write_observations",
    "read_observations",
    "to_jsonable",
    "dumps_json",
    "write_json",
    "read_json",
]


def fmt_float(x):
    return format(float(x), ".17g")


def rows_to_csv(thetas, values, weights, blocks=None, n_obs=None, block_sizes=None):
    """CSV text for raw table columns; non-finite log-likelihoods are allowed."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    buf = io.StringIO()
    if n_obs is not None:
        buf.write(f"# n_obs={int(n_obs)}\n")
    if block_sizes is not None:
        buf.write("# block_sizes=" + " ".join(str(int(s)) for s in block_sizes) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    K = 0 if blocks is None else np.shape(blocks)[1]
    w.writerow([f"theta_{j + 1}" for j in range(thetas.shape[1])] + ["loglik", "weight"]
               + [f"block_{k + 1}" for k in range(K)])
    for m in range(thetas.shape[0]):
        row = [fmt_float(v) for v in thetas[m]] + [fmt_float(values[m]), fmt_float(weights[m])]
        if K:
            row += [fmt_float(v) for v in blocks[m]]
        w.writerow(row)
    return buf.getvalue()


def table_to_csv(table):
    return rows_to_csv(table.thetas, table.values, table.weights, table.per_block_values,
                       table.n_obs, table.block_sizes)


def write_table(table, path):
    with open(path, "w", newline="") as fh:
        fh.write(table_to_csv(table))


def _parse_meta(lines):
    meta = {}
    for line in lines:
        body = line.lstrip("#").strip()
        if "=" in body:
            k, v = body.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def read_raw_table(path):
    """Raw columns of a table CSV as a dict (non-finite rows kept)."""
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    meta = _parse_meta([ln for ln in lines if ln.startswith("#")])
    rows = list(csv.reader([ln for ln in lines if ln and not ln.startswith("#")]))
    if not rows:
        raise ValueError(f"{path}: empty table")
    header, body = rows[0], rows[1:]
    theta_cols = [i for i, h in enumerate(header) if h.startswith("theta_")]
    block_cols = [i for i, h in enumerate(header) if h.startswith("block_")]
    if not theta_cols or "loglik" not in header:
        raise ValueError(f"{path}: header must contain theta_* and loglik columns")
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    thetas = data[:, theta_cols]
    values = data[:, header.index("loglik")]
    weights = data[:, header.index("weight")] if "weight" in header else np.ones(len(body))
    blocks = data[:, block_cols] if block_cols else None
    n_obs = int(meta["n_obs"]) if "n_obs" in meta else None
    sizes = np.array([int(s) for s in meta["block_sizes"].split()]) if "block_sizes" in meta else None
    return {"thetas": thetas, "values": values, "weights": weights, "blocks": blocks,
            "n_obs": n_obs, "block_sizes": sizes}


def read_table(path):
    """Read a table CSV, dropping rows with a non-finite log-likelihood.

    Returns ``(table, n_dropped)``.
    """
    raw = read_raw_table(path)
    ok = np.isfinite(raw["values"])
    blocks = raw["blocks"][ok] if raw["blocks"] is not None else None
    table = SimLogLikTable(raw["thetas"][ok], raw["values"][ok], raw["weights"][ok], raw["n_obs"],
                           blocks, raw["block_sizes"])
    return table, int((~ok).sum())


def observations_to_csv(y):
    y = np.asarray(y)
    y2 = y[:, None] if y.ndim == 1 else y
    integer = np.issubdtype(y.dtype, np.integer)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"y_{j + 1}" for j in range(y2.shape[1])])
    for row in y2:
        w.writerow([str(int(v)) if integer else fmt_float(v) for v in row])
    return buf.getvalue()


def write_observations(y, path):
    with open(path, "w", newline="") as fh:
        fh.write(observations_to_csv(y))


def read_observations(path):
    """Observation CSV -> array of shape (n,) for one column, (n, k) otherwise."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not all(h.startswith("y_") for h in header):
        raise ValueError(f"{path}: observation columns must be named y_1..y_k")
    arr = np.array([[float(v) for v in r] for r in body], dtype=float)
    if arr.shape[1] == 1:
        arr = arr[:, 0]
        if np.all(arr == np.round(arr)):
            return arr.astype(np.int64)
    return arr


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # non-finite numbers become strings so the output stays valid JSON
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps_json(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
