"""Run configuration: one INI-style file with sections, every key optional.

A missing file or section falls back to the converter experiment defaults,
so an empty config reproduces the reference setup.  Vectors are written as
comma-separated numbers; weight matrices accept either their diagonal or all
entries row-major; lists of states are separated by semicolons.
"""

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .closed_loop import ControllerSpec, Kind
from .fixedpoint import FixedFormat
from .mpc import MpcConfig
from .plant import BoxSet, BuckBoost, BuckBoostParams, steady_state
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _vec(s):
    return [float(v) for v in str(s).replace(" ", "").split(",") if v != ""]


def _mat(s, n):
    v = _vec(s)
    if len(v) == n:
        return np.diag(v)
    if len(v) == n * n:
        return np.array(v).reshape(n, n)
    raise ConfigError(f"matrix needs {n} diagonal or {n * n} entries, got {len(v)}")


def _states(s):
    return [np.array(_vec(part)) for part in str(s).split(";") if part.strip()]


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


DEFAULTS = {
    "run": {"seed": "0", "output_dir": "out"},
    "plant": {"Ts": "1e-4", "Vin": "15", "L_ind": "4.2e-3", "C_cap": "2.2e-3", "R_load": "165"},
    "mpc": {"N": "20", "Q": "1, 0.1", "R": "0.7", "P": "10, 1", "x2_ss": "-10",
            "M": "4", "alpha": "0.9", "x_min": "0.01, -20", "x_max": "2, 0",
            "u_min": "0.1", "u_max": "0.9", "stat_tol": "1e-8", "constr_tol": "1e-6",
            "max_iter": "500", "n_starts": "5"},
    "sampling": {"N_d": "20000", "workers": "1", "problem": "lagnmpc"},
    "train": {"epochs": "1000", "lr": "1e-4", "batch_size": "1024", "split": "0.7",
              "Gamma": "1, 0.1", "loss": "coninf", "head": "lagnmpc", "hidden": "20, 20",
              "weight_decay": "1e-2", "normalize_inputs": "true"},
    "simulate": {"x0": "0.01, 0; 0.5, -19", "steps": "600", "controller": "NnLagNmpc",
                 "offset_free": "true", "epsilon": "0.3"},
    "map": {"n1": "100", "n2": "100", "controller": "NnLagNmpc"},
    "fixedpoint": {"frac_bits": "16", "n_states": "1000", "repetitions": "10000"},
}


@dataclass
class RunConfig:
    seed: int
    output_dir: Path
    plant_params: BuckBoostParams
    mpc: MpcConfig
    train: TrainConfig
    N_d: int
    workers: int
    problem: str
    x0_list: list
    steps: int
    controller: ControllerSpec
    map_counts: tuple
    map_controller: Kind
    fixed: FixedFormat
    fixed_states: int
    repetitions: int
    raw: dict = field(default_factory=dict)

    @property
    def plant(self):
        return BuckBoost(self.plant_params)

    @property
    def config_hash(self):
        # where results are written does not change what is computed
        content = {s: {k: v for k, v in items.items() if (s, k) != ("run", "output_dir")}
                   for s, items in self.raw.items()}
        blob = json.dumps(content, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_overrides(pairs):
    """``["train.epochs=200", ...]`` to a nested dict."""
    out = {}
    for item in pairs or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        section, name = key.split(".", 1)
        out.setdefault(section.strip(), {})[name.strip()] = value.strip()
    return out


def load_config(path=None, overrides=None):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_dict(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    for section, items in (overrides or {}).items():
        if not parser.has_section(section):
            parser.add_section(section)
        for k, v in items.items():
            parser.set(section, k, v)
    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    for s, items in raw.items():
        if s not in DEFAULTS:
            raise ConfigError(f"unknown section [{s}]")
        unknown = set(items) - set(DEFAULTS[s])
        if unknown:
            raise ConfigError(f"unknown keys in [{s}]: {sorted(unknown)}")
    try:
        return _build(raw)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(raw):
    r, pl, m, s, t, sim, mp, fx = (raw[k] for k in
                                   ("run", "plant", "mpc", "sampling", "train", "simulate",
                                    "map", "fixedpoint"))
    seed = int(r["seed"])
    params = BuckBoostParams(**{k: float(v) for k, v in pl.items()})
    x2_ss = float(m["x2_ss"])
    x1_ss, u_ss = steady_state(params, x2_ss)
    mpc = MpcConfig(
        N=int(m["N"]), Q=_mat(m["Q"], 2), R=float(m["R"]), P=_mat(m["P"], 2),
        x_ss=np.array([x1_ss, x2_ss]), u_ss=u_ss,
        X=BoxSet(_vec(m["x_min"]), _vec(m["x_max"])),
        U=BoxSet([float(m["u_min"])], [float(m["u_max"])]),
        M=int(m["M"]), alpha=float(m["alpha"]), stat_tol=float(m["stat_tol"]),
        constr_tol=float(m["constr_tol"]), max_iter=int(m["max_iter"]),
        n_starts=int(m["n_starts"]), seed=seed,
    )
    train = TrainConfig(
        epochs=int(t["epochs"]), lr=float(t["lr"]), batch_size=int(t["batch_size"]),
        split=float(t["split"]), Gamma=_mat(t["Gamma"], 2), loss=t["loss"], head=t["head"],
        seed=seed, hidden=tuple(int(v) for v in _vec(t["hidden"])),
        weight_decay=float(t["weight_decay"]), normalize_inputs=_bool(t["normalize_inputs"]),
    )
    problem = s["problem"]
    if problem not in ("nmpc", "lagnmpc"):
        raise ConfigError(f"sampling.problem must be nmpc or lagnmpc, got {problem!r}")
    N_d = int(s["N_d"])
    if N_d < 1:
        raise ConfigError("sampling.N_d must be >= 1")
    steps = int(sim["steps"])
    if steps < 1:
        raise ConfigError("simulate.steps must be >= 1")
    x0_list = _states(sim["x0"])
    for x0 in x0_list:
        if x0.shape != (2,):
            raise ConfigError("initial states need two entries each")
    fixed = FixedFormat(frac_bits=int(fx["frac_bits"]))
    return RunConfig(
        seed=seed, output_dir=Path(r["output_dir"]), plant_params=params, mpc=mpc, train=train,
        N_d=N_d, workers=max(1, int(s["workers"])), problem=problem, x0_list=x0_list,
        steps=steps,
        controller=ControllerSpec(Kind(sim["controller"]), _bool(sim["offset_free"]),
                                  float(sim["epsilon"])),
        map_counts=(int(mp["n1"]), int(mp["n2"])), map_controller=Kind(mp["controller"]),
        fixed=fixed, fixed_states=int(fx["n_states"]), repetitions=int(fx["repetitions"]),
        raw=raw,
    )
