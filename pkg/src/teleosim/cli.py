"""Command line front end for calibration, field tools, sessions and policies.

Every subcommand reads and writes plain JSON (or JSONL for datasets) so the
outputs can be inspected, diffed and replayed without this package.
"""

import argparse
import json
import sys

import numpy as np

from .bridge import DEFAULT_PORT, serve
from .calibration import CalibSample, solve_extrinsics
from .kinematics import planar_two_link, reference_arm
from .manipfield import (FieldGrid, Surrogate, default_surrogate, oracle_field,
                         train_surrogate)
from .policy import PolicyModel, PolicyOperator, train
from .se3 import Pose
from .session import (FeedbackFlags, SessionConfig, EpisodeLog,
                      compute_metrics, export_dataset, run_episode)
from .scenarios import SCENARIO_NAMES, make_scenario


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(obj, path):
    if path is None or path == "-":
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2)


def _parse_flags(text):
    if text is None or text == "none":
        return FeedbackFlags.none()
    if text == "all":
        return FeedbackFlags()
    names = [t.strip() for t in text.split(",") if t.strip()]
    valid = {"pedal_feedback", "arm_reflection", "guidance"}
    unknown = set(names) - valid
    if unknown:
        raise SystemExit(f"unknown flags: {sorted(unknown)}; "
                         f"choose from {sorted(valid)}, 'all' or 'none'")
    return FeedbackFlags(**{name: True for name in names})


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise SystemExit(f"override {pair!r} is not key=value")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _chain_by_name(name):
    if name == "reference":
        return reference_arm()
    if name == "planar":
        return planar_two_link()
    raise SystemExit(f"unknown chain {name!r}; choose reference or planar")


def _parse_bounds(text):
    axes = text.split(",")
    if len(axes) != 3:
        raise SystemExit("bounds must be three lo:hi ranges, e.g. "
                         "'-0.9:0.9,-0.9:0.9,-0.6:0.9'")
    out = []
    for axis in axes:
        lo, sep, hi = axis.partition(":")
        if not sep:
            raise SystemExit(f"bad range {axis!r}, expected lo:hi")
        out.append([float(lo), float(hi)])
    return out


# --- calib ------------------------------------------------------------


def cmd_calib_solve(args):
    raw = _load_json(args.input)
    samples = [CalibSample(base_to_gripper=Pose.from_flat(s["base_to_gripper"]),
                           head_tag=Pose.from_flat(s["head_tag"]),
                           wrist_tag=Pose.from_flat(s["wrist_tag"]),
                           confidence=s.get("confidence", 1.0))
               for s in raw]
    if args.init:
        init = _load_json(args.init)
        init_w = Pose.from_flat(init["gripper_to_wristcam"])
        init_h = Pose.from_flat(init["base_to_headcam"])
    else:
        init_w = Pose.identity()
        init_h = Pose.identity()
    est = solve_extrinsics(samples, init_w, init_h,
                           max_iterations=args.max_iterations, tol=args.tol)
    _dump_json({
        "gripper_to_wristcam": est.gripper_to_wristcam.flatten().tolist(),
        "base_to_headcam": est.base_to_headcam.flatten().tolist(),
        "final_cost": est.final_cost,
        "iterations": est.iterations,
        "converged": est.converged,
    }, args.out)
    if not est.converged:
        print("warning: solver hit the iteration cap before the tolerance",
              file=sys.stderr)
    return 0


# --- field ------------------------------------------------------------


def cmd_field_sample(args):
    chain = _chain_by_name(args.chain)
    grid = oracle_field(chain, _parse_bounds(args.bounds),
                        resolution=args.resolution, n_samples=args.samples,
                        seed=args.seed, block=args.block)
    _dump_json(grid.to_dict(), args.out)
    centers, vals = grid.known_points()
    print(f"visited {len(vals)} cells, peak {vals.max():.4f}")
    return 0


def cmd_field_train(args):
    grid = FieldGrid.from_dict(_load_json(args.grid))
    hidden = tuple(int(h) for h in args.hidden.split(","))
    sur = train_surrogate(grid, hidden=hidden, steps=args.steps,
                          seed=args.seed)
    _dump_json(sur.to_dict(), args.out)
    return 0


def cmd_field_eval(args):
    sur = Surrogate.from_dict(_load_json(args.surrogate))
    if args.grid:
        grid = FieldGrid.from_dict(_load_json(args.grid))
        pts, truth = grid.known_points()
        pred, _ = sur.eval(pts)
        err = pred - truth
        report = {"n_points": len(truth),
                  "rmse": float(np.sqrt(np.mean(err ** 2))),
                  "max_abs_err": float(np.abs(err).max()),
                  "field_max": float(truth.max())}
        _dump_json(report, args.out)
    else:
        point = np.array([float(v) for v in args.at.split(",")])
        if point.shape != (3,):
            raise SystemExit("--at expects x,y,z")
        value, grad = sur.eval(point[None])
        _dump_json({"point": point.tolist(), "value": float(value[0]),
                    "gradient": grad[0].tolist()}, args.out)
    return 0


# --- session ----------------------------------------------------------


def _scenario_rule(scenario):
    """Adapt the scenario's (n_coll, reached) rule to a whole-log rule."""
    def rule(log):
        n_coll = int(sum(r.events for r in log.ticks))
        reached = log.metadata.get("status") == "success"
        return scenario.success_rule(n_coll, reached)
    return rule


def _session_config(args):
    scenario = make_scenario(args.scenario, **_parse_overrides(args.override))
    flags = _parse_flags(args.flags)
    surrogate = default_surrogate(scenario.chain) if flags.guidance else None
    return SessionConfig(scenario=scenario, surrogate=surrogate), flags


def cmd_session_run(args):
    config, flags = _session_config(args)
    log = run_episode(config, flags=flags, seed=args.seed)
    log.save(args.out)
    metrics = compute_metrics(log, _scenario_rule(config.scenario))
    print(f"{log.metadata['status']}: {len(log.ticks)} ticks, "
          f"{metrics.n_coll} collisions, r_low {metrics.r_low:.3f}")
    return 0


def cmd_session_metrics(args):
    log = EpisodeLog.load(args.log)
    scenario = make_scenario(log.metadata["scenario"]["name"],
                             **log.metadata["scenario"].get("overrides", {}))
    metrics = compute_metrics(log, _scenario_rule(scenario))
    _dump_json(metrics.to_dict(), args.out)
    return 0


def cmd_session_export(args):
    logs = [EpisodeLog.load(p) for p in args.logs]
    n_records, manifest = export_dataset(logs, args.out)
    print(f"wrote {n_records} records "
          f"(obs {manifest['obs_dim']}, action {manifest['action_dim']})")
    return 0


# --- policy -----------------------------------------------------------


def cmd_policy_train(args):
    hyper = {"seed": args.seed, "steps": args.steps,
             "ablate_torque": args.ablate_torque}
    if args.horizon is not None:
        hyper["horizon"] = args.horizon
    model = train(args.data, hyper)
    model.save(args.out)
    print(f"final loss {model.history[-1]['loss']:.6f} "
          f"after {len(model.history)} steps")
    return 0


def cmd_policy_eval(args):
    model = PolicyModel.load(args.model)
    scenario = make_scenario(args.scenario, **_parse_overrides(args.override))
    rows = []
    for i in range(args.rollouts):
        operator = PolicyOperator(model)
        config = SessionConfig(scenario=scenario)
        log = run_episode(config, operator=operator,
                          flags=FeedbackFlags.none(), seed=args.seed + i)
        rows.append(compute_metrics(log, _scenario_rule(scenario)).to_dict())
    report = {
        "scenario": args.scenario,
        "rollouts": args.rollouts,
        "success_rate": float(np.mean([r["success"] for r in rows])),
        "mean_n_coll": float(np.mean([r["n_coll"] for r in rows])),
        "mean_duration": float(np.mean([r["duration"] for r in rows])),
        "mean_r_low": float(np.mean([r["r_low"] for r in rows])),
        "mean_sigma_tor": float(np.mean([r["sigma_tor"] for r in rows])),
        "episodes": rows,
    }
    _dump_json(report, args.out)
    print(f"success {report['success_rate']:.0%} over {args.rollouts} rollouts")
    return 0


# --- bridge -----------------------------------------------------------


def cmd_bridge_serve(args):
    serve(port=args.port, pace=not args.no_pace)
    return 0


# --- wiring -----------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="teleosim",
        description="Simulated whole-body teleoperation toolkit")
    top = parser.add_subparsers(dest="group", required=True)

    calib = top.add_parser("calib", help="extrinsic calibration")
    calib_sub = calib.add_subparsers(dest="cmd", required=True)
    p = calib_sub.add_parser("solve", help="solve wrist/head extrinsics")
    p.add_argument("--input", required=True,
                   help="JSON array of samples; poses are 12 flat numbers")
    p.add_argument("--init", help="JSON with initial guesses (default identity)")
    p.add_argument("--out", default="-")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(fn=cmd_calib_solve)

    fld = top.add_parser("field", help="manipulability field tools")
    fld_sub = fld.add_subparsers(dest="cmd", required=True)
    p = fld_sub.add_parser("sample", help="Monte Carlo field over a box")
    p.add_argument("--chain", default="reference")
    p.add_argument("--bounds", default="-0.9:0.9,-0.9:0.9,-0.6:0.9")
    p.add_argument("--resolution", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=300_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block", default="auto")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_field_sample)
    p = fld_sub.add_parser("train", help="fit the smooth surrogate")
    p.add_argument("--grid", required=True)
    p.add_argument("--hidden", default="96,96")
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_field_train)
    p = fld_sub.add_parser("eval", help="evaluate a surrogate")
    p.add_argument("--surrogate", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--grid", help="report fit error against a grid file")
    group.add_argument("--at", help="x,y,z point query")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_field_eval)

    ses = top.add_parser("session", help="run and inspect episodes")
    ses_sub = ses.add_subparsers(dest="cmd", required=True)
    p = ses_sub.add_parser("run", help="run one scripted episode")
    p.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p.add_argument("--flags", default="none",
                   help="comma list of pedal_feedback,arm_reflection,guidance"
                        " or 'all'/'none'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_session_run)
    p = ses_sub.add_parser("metrics", help="metrics for a saved log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_session_metrics)
    p = ses_sub.add_parser("export", help="flatten logs into a JSONL dataset")
    p.add_argument("logs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_session_export)

    pol = top.add_parser("policy", help="imitation policy tools")
    pol_sub = pol.add_subparsers(dest="cmd", required=True)
    p = pol_sub.add_parser("train", help="train on an exported dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ablate-torque", action="store_true")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_policy_train)
    p = pol_sub.add_parser("eval", help="closed-loop rollouts of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p.add_argument("--rollouts", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_policy_eval)

    brg = top.add_parser("bridge", help="websocket telemetry endpoint")
    brg_sub = brg.add_subparsers(dest="cmd", required=True)
    p = brg_sub.add_parser("serve", help="serve the live console protocol")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--no-pace", action="store_true",
                   help="run the engine flat out instead of at wall clock")
    p.set_defaults(fn=cmd_bridge_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
