"""Command-line entry points: ``lagmpc <command> [--config FILE] [--set s.k=v ...]``.

Exit codes: 0 on success, 1 when a command's contract fails (for example an
empty dataset or a failed check), 2 for an invalid config or missing input.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, nn
from .closed_loop import Controller, ControllerSpec, Kind, simulate
from .config import ConfigError, load_config, parse_overrides
from .evaluation import Grid, control_law_map, export_heatmap, one_step_admissible, violation_count
from .fixedpoint import QuantizationRangeError, bench_latency, forward_fixed, quantize_net
from .sampling import generate_dataset, halton_sample_states
from .training import train
from .verify import run_checks

log = logging.getLogger("lagmpc")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ContractFailure(RuntimeError):
    pass


def _out(rc, name):
    path = rc.output_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _need(path, what):
    if path is None:
        raise ConfigError(f"{what} path is required")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{what} {path} not found")
    return path


def _network(rc, weights):
    params, head, _ = io.load_weights(_need(weights, "weight file"))
    return params, head


def _controller(rc, kind, weights, spec=None):
    kind = Kind(kind)
    spec = spec or ControllerSpec(kind, rc.controller.offset_free, rc.controller.epsilon)
    if spec.kind is not kind:
        spec = ControllerSpec(kind, spec.offset_free, spec.epsilon)
    params = head = None
    if kind.is_nn:
        params, head = _network(rc, weights)
        if kind is Kind.NN_LAGNMPC and head is None:
            raise ConfigError("NnLagNmpc needs a weight file trained with the Laguerre head")
        if kind is Kind.NN_NMPC and head is not None:
            raise ConfigError("NnNmpc needs a weight file trained with the NMPC head")
    return Controller(spec, rc.mpc, rc.plant, params, head)


def cmd_gen_data(rc, args):
    stats = {}
    states = halton_sample_states(rc.mpc.X, rc.N_d, stats=stats)
    basis = rc.mpc.basis() if rc.problem == "lagnmpc" else None
    try:
        ds = generate_dataset(rc.mpc, rc.plant, states, basis=basis, workers=rc.workers)
    except RuntimeError as exc:
        raise ContractFailure(str(exc)) from exc
    path = io.write_dataset(_out(rc, args.name or "dataset.csv"), ds, rc.config_hash)
    infeasible = ds.counts.get("Infeasible", 0)
    print(f"N_d={rc.N_d} N_s={len(ds)} halton_tried={stats['tried']} "
          f"rejected={stats['rejected']} infeasible={infeasible} "
          f"max_iterations={ds.counts.get('MaxIterations', 0)}")
    print(f"wrote {path}")


def cmd_train(rc, args):
    ds = io.read_dataset(_need(args.dataset, "dataset"))
    head = None
    if rc.train.head == "lagnmpc":
        if not ds.laguerre:
            raise ConfigError("Laguerre head needs a dataset generated with problem=lagnmpc")
        basis = rc.mpc.basis()
        if ds.eta_star.shape[1] != basis.M:
            raise ConfigError(f"dataset has {ds.eta_star.shape[1]} coefficients, config M={basis.M}")
        head = nn.LaguerreHead.from_basis(basis, rc.mpc.u_ss)
    params, hist = train(ds, rc.train, rc.plant, rc.mpc.X, head)
    if not np.isfinite(hist.train_loss[-1]):
        raise ContractFailure("training diverged")
    stem = args.name or f"weights_{rc.train.loss}_{rc.train.head}"
    w = io.save_weights(_out(rc, stem + ".json"), params, head, rc.config_hash,
                        {"loss": rc.train.loss, "epochs": rc.train.epochs, "seed": rc.seed})
    h = io.write_history(_out(rc, stem + "_history.csv"), hist, rc.config_hash)
    print(f"final train loss {hist.train_loss[-1]:.6e} val loss {hist.val_loss[-1]:.6e}")
    print(f"wrote {w}\nwrote {h}")


def cmd_map(rc, args):
    kind = Kind(args.controller or rc.map_controller)
    ctrl = _controller(rc, kind, args.weights)
    grid = Grid.over(rc.mpc.X, rc.map_counts)
    law_map = control_law_map(ctrl, rc.plant, grid, rc.mpc.X)
    stem = _out(rc, args.name or f"map_{kind.value}")
    csv_path, svg_path = export_heatmap(law_map, stem, ctrl.u_min, ctrl.u_max, kind.value)
    # re-stamp the node table with the run's provenance header
    io.write_map(csv_path, law_map, rc.config_hash)
    adm = one_step_admissible(rc.plant, rc.mpc.X, rc.mpc.U, law_map.nodes)
    print(f"nodes={len(law_map)} violations={violation_count(law_map)} "
          f"x1={violation_count(law_map, 0)} x2={violation_count(law_map, 1)} "
          f"admissible_violations={int(np.count_nonzero(law_map.violation & adm))} "
          f"infeasible={int(np.count_nonzero(~law_map.feasible))}")
    print(f"wrote {csv_path}\nwrote {svg_path}")


def cmd_simulate(rc, args):
    kind = Kind(args.controller or rc.controller.kind)
    ctrl = _controller(rc, kind, args.weights, rc.controller)
    failed = []
    for i, x0 in enumerate(rc.x0_list):
        traj = simulate(rc.plant, ctrl, x0, rc.steps, rc.mpc.X)
        path = io.write_trajectory(_out(rc, f"traj_{kind.value}_{i}.csv"), traj, rc.config_hash)
        d = float(traj.distance_to(rc.mpc.x_ss)[-1])
        print(f"x0={x0.tolist()} steps={traj.T} status={traj.status} final_distance={d:.3e} "
              f"state_violations={int(traj.violation.sum())} "
              f"offset_free_steps={int(traj.offset_free.sum())}")
        print(f"wrote {path}")
        if traj.status != "ok":
            failed.append(f"x0={x0.tolist()}: {traj.error}")
    if failed:
        raise ContractFailure("; ".join(failed))


def cmd_quantize(rc, args):
    params, head = _network(rc, args.weights)
    try:
        q = quantize_net(params, head, rc.fixed)
    except QuantizationRangeError as exc:
        raise ContractFailure(str(exc)) from exc
    states = np.array(halton_sample_states(rc.mpc.X, rc.fixed_states))
    ref = (nn.forward_nmpc(params, states) if head is None
           else nn.forward_lagnmpc_first(params, head, states))
    fx = np.array([forward_fixed(q, x) for x in states])
    err = np.abs(fx - ref)
    path = io.save_quantized(_out(rc, args.name or "quantized.json"), q, rc.config_hash)
    report = io.write_table(
        _out(rc, "quantization_error.csv"), "quantization_error",
        ["x1", "x2", "u_float", "u_fixed", "abs_error"],
        [[*x, a, b, e] for x, a, b, e in zip(states, ref, fx, err)], rc.config_hash,
        {"frac_bits": rc.fixed.frac_bits, "max_abs_error": f"{err.max():.6e}"})
    print(f"max_abs_error={err.max():.3e} over {len(states)} states "
          f"(Q{31 - rc.fixed.frac_bits}.{rc.fixed.frac_bits})")
    print(f"wrote {path}\nwrote {report}")


def cmd_bench(rc, args):
    q = io.load_quantized(_need(args.quantized, "quantized weight file"))
    states = halton_sample_states(rc.mpc.X, 100)
    stats = bench_latency(q, states, rc.repetitions)
    path = io.write_bench(_out(rc, "bench.csv"), stats, rc.config_hash)
    print(" ".join(f"{k}={v:.0f}" if isinstance(v, float) else f"{k}={v}"
                   for k, v in stats.items()))
    print(f"wrote {path}")


def cmd_verify(rc, args):
    checks = run_checks(rc)
    rows = []
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} "
              f"(bound {c.bound:g}) {c.detail} [{c.seconds:.2f}s]")
        rows.append([c.name, c.passed, c.value, c.bound, c.seconds, c.detail])
    io.write_table(_out(rc, "verify.csv"), "verify",
                   ["check", "passed", "value", "bound", "seconds", "detail"], rows,
                   rc.config_hash)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise ContractFailure(f"failed checks: {', '.join(failed)}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "map": cmd_map,
    "simulate": cmd_simulate,
    "quantize": cmd_quantize,
    "bench": cmd_bench,
    "verify": cmd_verify,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="INI config file; defaults reproduce the reference run")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--output-dir", "-o", help="shortcut for --set run.output_dir=...")
    common.add_argument("--verbose", "-v", action="count", default=0)

    p = argparse.ArgumentParser(prog="lagmpc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("gen-data", parents=[common], help="sample states and solve (Lag)NMPC")
    s.add_argument("--name", help="output file name (default dataset.csv)")
    s = sub.add_parser("train", parents=[common], help="train a network on a dataset")
    s.add_argument("--dataset", "-d", required=True)
    s.add_argument("--name", help="output stem for weights and history")
    s = sub.add_parser("map", parents=[common], help="control-law map over a grid")
    s.add_argument("--weights", "-w")
    s.add_argument("--controller", choices=[k.value for k in Kind])
    s.add_argument("--name")
    s = sub.add_parser("simulate", parents=[common], help="closed-loop trajectories")
    s.add_argument("--weights", "-w")
    s.add_argument("--controller", choices=[k.value for k in Kind])
    s = sub.add_parser("quantize", parents=[common], help="fixed-point weights and error report")
    s.add_argument("--weights", "-w", required=True)
    s.add_argument("--name")
    s = sub.add_parser("bench", parents=[common], help="fixed-point latency benchmark")
    s.add_argument("--quantized", "-q", required=True)
    sub.add_parser("verify", parents=[common], help="run the built-in self-checks")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = parse_overrides(args.set)
        if args.output_dir:
            overrides.setdefault("run", {})["output_dir"] = args.output_dir
        rc = load_config(args.config, overrides)
        COMMANDS[args.command](rc, args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
