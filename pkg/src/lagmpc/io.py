"""Text file formats: dataset, weights, history, trajectories, maps, benchmarks.

Delimited files start with a ``#`` header block carrying the tool version,
the config hash and the file kind, followed by one column-name row.  Floats
are written with 17 significant digits so they parse back bit for bit.
"""

import json
from pathlib import Path

import numpy as np

from . import __version__
from .fixedpoint import FixedFormat, QuantizedNet
from .nn import LaguerreHead, MlpParams
from .sampling import Dataset

FLOAT_FMT = "{:.17g}"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return FLOAT_FMT.format(float(v))


def header_lines(kind, config_hash="", extra=None):
    lines = [f"# lagmpc {__version__}", f"# kind {kind}", f"# config_hash {config_hash}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} {v}")
    return lines


def write_table(path, kind, columns, rows, config_hash="", extra=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = header_lines(kind, config_hash, extra)
    out.append(",".join(columns))
    for row in rows:
        out.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(out) + "\n")
    return path


def read_table(path):
    """Return ``(meta, columns, rows)`` with rows as lists of strings."""
    meta, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            parts = line[1:].strip().split(" ", 1)
            meta[parts[0]] = parts[1] if len(parts) > 1 else ""
        elif columns is None:
            columns = line.split(",")
        elif line:
            rows.append(line.split(","))
    return meta, columns or [], rows


# --- dataset ---------------------------------------------------------------

def dataset_columns(N, M=None):
    cols = ["x1", "x2", "u_star"] + [f"U_star_{i}" for i in range(N)]
    if M:
        cols += [f"eta_star_{i}" for i in range(M)]
    return cols + ["cost", "status"]


def write_dataset(path, ds, config_hash=""):
    N = ds.U_star.shape[1]
    M = ds.eta_star.shape[1] if ds.laguerre else None
    rows = []
    for i in range(len(ds)):
        row = [*ds.x[i], ds.u_star[i], *ds.U_star[i]]
        if M:
            row += list(ds.eta_star[i])
        rows.append(row + [ds.cost[i], ds.status[i]])
    extra = {"n_requested": ds.n_requested, "n_retained": len(ds)}
    extra.update({f"count_{k}": v for k, v in sorted(ds.counts.items())})
    return write_table(path, "dataset", dataset_columns(N, M), rows, config_hash, extra)


def read_dataset(path):
    meta, cols, rows = read_table(path)
    if meta.get("kind") != "dataset":
        raise ValueError(f"{path} is not a dataset file")
    N = sum(c.startswith("U_star_") for c in cols)
    M = sum(c.startswith("eta_star_") for c in cols)
    num = np.array([[float(v) for v in r[:-1]] for r in rows]).reshape(len(rows), len(cols) - 1)
    counts = {k[len("count_"):]: int(v) for k, v in meta.items() if k.startswith("count_")}
    return Dataset(
        x=num[:, 0:2], u_star=num[:, 2], U_star=num[:, 3:3 + N],
        eta_star=num[:, 3 + N:3 + N + M] if M else None,
        cost=num[:, -1], status=[r[-1] for r in rows],
        n_requested=int(meta.get("n_requested", len(rows))), counts=counts,
    )


# --- network weights -------------------------------------------------------

def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def weights_to_dict(params, head=None, config_hash="", extra=None):
    d = {
        "format": "lagmpc-weights",
        "version": __version__,
        "config_hash": config_hash,
        "architecture": {"n_in": params.n_in, "hidden": params.widths, "n_out": params.n_out,
                         "head": "lagnmpc" if head is not None else "nmpc"},
        "clamp": [params.u_min, params.u_max],
        "batchnorm": {"eps": 1e-5, "momentum": params.momentum},
        "input_scaling": {"offset": _arr(params.in_offset), "scale": _arr(params.in_scale)},
        "params": {
            "W": [_arr(w) for w in params.W], "b": [_arr(b) for b in params.b],
            "gamma": [_arr(g) for g in params.gamma], "beta": [_arr(b) for b in params.beta],
            "running_mean": [_arr(m) for m in params.running_mean],
            "running_var": [_arr(v) for v in params.running_var],
        },
        "laguerre_head": None if head is None else {"L": _arr(head.L), "u_ss": head.u_ss},
    }
    if extra:
        d["meta"] = extra
    return d


def save_weights(path, params, head=None, config_hash="", extra=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(weights_to_dict(params, head, config_hash, extra), indent=1) + "\n")
    return path


def load_weights(path):
    """Return ``(params, head, meta)``; ``head`` is None for the NMPC architecture."""
    d = json.loads(Path(path).read_text())
    if d.get("format") != "lagmpc-weights":
        raise ValueError(f"{path} is not a weight file")
    p = d["params"]
    arrs = lambda xs: [np.array(x, dtype=float) for x in xs]
    params = MlpParams(
        W=arrs(p["W"]),
        b=arrs(p["b"]), gamma=arrs(p["gamma"]), beta=arrs(p["beta"]),
        running_mean=arrs(p["running_mean"]), running_var=arrs(p["running_var"]),
        u_min=float(d["clamp"][0]), u_max=float(d["clamp"][1]),
        momentum=float(d["batchnorm"]["momentum"]),
        in_offset=np.array(d["input_scaling"]["offset"], dtype=float),
        in_scale=np.array(d["input_scaling"]["scale"], dtype=float),
    )
    h = d.get("laguerre_head")
    head = None if h is None else LaguerreHead(np.array(h["L"], dtype=float), h["u_ss"])
    return params, head, {"config_hash": d.get("config_hash", ""), **d.get("meta", {})}


# --- quantized weights -----------------------------------------------------

def save_quantized(path, qnet, config_hash=""):
    d = {
        "format": "lagmpc-fixed",
        "version": __version__,
        "config_hash": config_hash,
        "word_length": qnet.fmt.word_length,
        "frac_bits": qnet.fmt.frac_bits,
        "W": [w.tolist() for w in qnet.W],
        "b": [b.tolist() for b in qnet.b],
        "clamp_q": [qnet.u_min_q, qnet.u_max_q],
        "laguerre_L": None if qnet.L is None else qnet.L.tolist(),
        "u_ss_q": qnet.u_ss_q,
        "unsafe_layers": list(qnet.unsafe),
        "max_error": qnet.max_error,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(d, indent=1) + "\n")
    return path


def load_quantized(path):
    d = json.loads(Path(path).read_text())
    if d.get("format") != "lagmpc-fixed":
        raise ValueError(f"{path} is not a quantized weight file")
    fmt = FixedFormat(frac_bits=d["frac_bits"], word_length=d["word_length"])
    i64 = lambda x: np.array(x, dtype=np.int64)
    return QuantizedNet(
        fmt=fmt, W=[i64(w) for w in d["W"]], b=[i64(b) for b in d["b"]],
        u_min_q=int(d["clamp_q"][0]), u_max_q=int(d["clamp_q"][1]),
        L=None if d["laguerre_L"] is None else i64(d["laguerre_L"]),
        u_ss_q=d["u_ss_q"], max_error=d.get("max_error", {}),
        unsafe=tuple(d.get("unsafe_layers", ())),
    )


# --- history, trajectories, maps, benchmarks -------------------------------

def write_history(path, hist, config_hash=""):
    return write_table(path, "history", ["epoch", "train_loss", "val_loss", "L_s", "L_x"],
                       hist.rows(), config_hash)


def write_trajectory(path, traj, config_hash=""):
    rows = []
    for t in range(len(traj.states)):
        x1, x2 = traj.states[t]
        if t < traj.T:
            rows.append([t, x1, x2, traj.inputs[t], traj.offset_free[t], traj.saturated[t],
                         traj.violation[t]])
        else:
            rows.append([t, x1, x2, "", "", "", ""])
    extra = {"controller": traj.meta.get("kind", ""), "status": traj.status}
    if traj.error:
        extra["error"] = traj.error.replace("\n", " ")
    return write_table(path, "trajectory",
                       ["t", "x1", "x2", "u", "offset_free", "saturated", "violation"],
                       rows, config_hash, extra)


def read_trajectory(path):
    meta, cols, rows = read_table(path)
    states = np.array([[float(r[1]), float(r[2])] for r in rows])
    inputs = np.array([float(r[3]) for r in rows if r[3] != ""])
    flags = np.array([[r[k] == "1" for k in (4, 5, 6)] for r in rows if r[3] != ""],
                     dtype=bool).reshape(-1, 3)
    return meta, states, inputs, flags


def write_map(path, law_map, config_hash=""):
    rows = [[x[0], x[1], u, bool(v), bool(f)]
            for x, u, v, f in zip(law_map.nodes, law_map.u, law_map.violation, law_map.feasible)]
    return write_table(path, "law_map", ["x1", "x2", "u", "violation", "feasible"], rows,
                       config_hash)


def read_map(path):
    meta, cols, rows = read_table(path)
    num = np.array([[float(v) for v in r[:3]] for r in rows]).reshape(-1, 3)
    viol = np.array([r[3] == "1" for r in rows], dtype=bool)
    feas = np.array([r[4] == "1" for r in rows], dtype=bool)
    return num[:, :2], num[:, 2], viol, feas


def write_bench(path, stats, config_hash=""):
    keys = list(stats)
    return write_table(path, "benchmark", keys, [[stats[k] for k in keys]], config_hash)
