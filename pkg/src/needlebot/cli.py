"""Command-line entry points: calibration, registration, tracking runs,
needle insertion, the teleop service, and asset export."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import clutch as clutch_mod
from .config import default_config, load_config, save_config
from .harness import (CLOSED_LOOP, OPEN_LOOP, default_cone, export,
                      run_insertion_scenario, run_tracking, summarize)
from .kinematics import chain_to_json, needle_arm_chain
from .sim import Simulator


def _load(args):
    return load_config(args.config) if args.config else default_config()


def cmd_calibrate(args):
    cfg = _load(args)
    sim = Simulator(cfg, args.seed)
    sim.tip_force = np.asarray(cfg.harness.droop_force, dtype=float)
    coupling = sim.calibrate()
    os.makedirs(args.out, exist_ok=True)
    coupling_path = os.path.join(args.out, "coupling.csv")
    data_path = os.path.join(args.out, "calibration_set.csv")
    with open(coupling_path, "w") as fh:
        fh.write(coupling.to_csv())
    with open(data_path, "w") as fh:
        fh.write(sim.last_calibration_set.to_csv())
    residual = np.abs(coupling.matrix - sim.coupling_true.matrix).max()
    print(f"calibrated coupling written to {coupling_path}")
    print(f"excitation data written to {data_path}")
    print(f"worst entry error vs simulated truth: {residual:.2e}")


def cmd_register(args):
    cfg = _load(args)
    sim = Simulator(cfg, args.seed)
    sim.tip_force = np.asarray(cfg.harness.droop_force, dtype=float)
    registration = sim.register()
    registration.save(args.out)
    print(f"registration written to {args.out} "
          f"(rms residual {registration.rms_residual * 1e3:.3f} mm)")


def cmd_track(args):
    cfg = _load(args)
    mode = CLOSED_LOOP if args.mode == "closed" else OPEN_LOOP
    traj = default_cone(cfg)
    record = run_tracking(mode, traj, cfg, seed=args.seed)
    summary = summarize(record, cfg.harness.transient_fraction)
    paths = export(record, summary, args.out)
    print(summary.text(), end="")
    print("written:", ", ".join(paths.values()))


def cmd_insert(args):
    cfg = _load(args)
    depth = args.depth * 1e-3
    state = clutch_mod.InchwormState(stroke=args.stroke * 1e-3)
    try:
        state, cycles = clutch_mod.run_insertion(state, depth, args.resistance)
        print(f"inserted to {state.needle_depth * 1e3:.1f} mm in {cycles} "
              f"cycles ({state.time:.1f} s simulated)")
    except clutch_mod.InsertionStallError as exc:
        print(f"insertion stalled: {exc}", file=sys.stderr)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        log_path = os.path.join(args.out, "insertion_log.csv")
        with open(log_path, "w") as fh:
            fh.write(clutch_mod.log_to_csv(state))
        print(f"cycle log written to {log_path}")
    if args.scenario:
        result = run_insertion_scenario(cfg, seed=args.seed)
        print(f"closed-loop straight-insertion deviation: "
              f"{result['angle_deg']:.3f} deg over {result['depth_m'] * 1e3:.0f} mm")


def cmd_serve(args):
    from .service import main as serve_main
    cfg = _load(args)
    if args.port is not None:
        cfg.service.port = args.port
    if args.token is not None:
        cfg.service.token = args.token
    if args.time_scale is not None:
        cfg.service.time_scale = args.time_scale
    if args.log:
        cfg.service.log_path = args.log
    serve_main(cfg, seed=args.seed)


def cmd_export_chain(args):
    with open(args.out, "w") as fh:
        fh.write(chain_to_json(needle_arm_chain()))
        fh.write("\n")
    print(f"chain description written to {args.out}")


def cmd_write_config(args):
    save_config(default_config(), args.out)
    print(f"default configuration written to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="needlebot",
        description="Simulated cable-driven needle-placement arm: "
                    "calibration, tracking experiments, and teleoperation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="run the coupling-matrix calibration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("register", help="run the tracker registration sweep")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="registration.json")
    p.set_defaults(fn=cmd_register)

    p = sub.add_parser("track", help="run the cone-tracking experiment")
    p.add_argument("--mode", choices=("open", "closed"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("insert", help="inch-worm needle insertion")
    p.add_argument("--depth", type=float, required=True, help="target depth (mm)")
    p.add_argument("--stroke", type=float, default=50.0, help="carriage stroke (mm)")
    p.add_argument("--resistance", type=float, default=5.0, help="tissue force (N)")
    p.add_argument("--scenario", action="store_true",
                   help="also run the closed-loop straight-insertion scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_insert)

    p = sub.add_parser("serve", help="run the teleoperation service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--token", default=None)
    p.add_argument("--time-scale", type=float, default=None)
    p.add_argument("--log", default=None, help="session log path (ndjson)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("export-chain", help="write the chain JSON asset")
    p.add_argument("--out", default="chain.json")
    p.set_defaults(fn=cmd_export_chain)

    p = sub.add_parser("write-config", help="write the default config file")
    p.add_argument("--out", default="needlebot.yaml")
    p.set_defaults(fn=cmd_write_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
