"""Command-line front end.

Subcommands: fit, pose, controller-sim, serve, demo, eval, report.
Machine-readable results go to stdout, diagnostics to stderr.
Exit codes: 0 success, 2 malformed input, 3 insufficient calibration data,
4 port conflict.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import threading
import urllib.request

import numpy as np

from .calibration import (
    ConditioningError,
    CsvFormatError,
    CubicFit,
    InsufficientDataError,
    fit_cubic,
    load_fit_json,
    read_calibration_csv,
    save_fit_json,
)
from .controller import (
    ControllerServer,
    DEFAULT_PORT,
    DEFAULT_SETTLE_BAND_KPA,
    DEFAULT_TAU_S,
    DEFAULT_TICK_HZ,
    StartupError,
)
from .demo import ScriptError, default_demo_fit, run_demo
from .http_api import TwinApiServer
from .kinematics import DEFAULT_LENGTHS_MM, FlangePose, matrix_to_quaternion
from .report import render_report
from .twin import (
    ConfigError,
    FlangeSource,
    TwinConfig,
    TwinEngine,
    TwinState,
    evaluate_pose_error,
    load_twin_config,
    pipeline_step,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_INSUFFICIENT_DATA = 3
EXIT_PORT_CONFLICT = 4


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def _vec(text: str, n: int) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated values")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _vec3(text: str) -> tuple[float, ...]:
    return _vec(text, 3)


def _vec4(text: str) -> tuple[float, ...]:
    return _vec(text, 4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twin",
        description="Digital twin of a four-section pneumatic soft gripper.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser(
        "fit", help="fit per-section cubics from a calibration CSV")
    p_fit.add_argument("--csv", required=True, help="pressure/angle samples")
    p_fit.add_argument("--out", required=True, help="output fit JSON path")

    p_pose = sub.add_parser(
        "pose", help="one-shot pressure to end pose query")
    p_pose.add_argument("--pressure", type=float, required=True, help="kPa")
    p_pose.add_argument("--fit", required=True, help="fit JSON path")
    p_pose.add_argument("--flange-t", type=_vec3, default=(0.0, 0.0, 0.0),
                        metavar="X,Y,Z", help="flange translation, mm")
    p_pose.add_argument("--flange-q", type=_vec4, default=(1.0, 0.0, 0.0, 0.0),
                        metavar="W,X,Y,Z", help="flange unit quaternion")
    _add_geometry_flags(p_pose)

    p_sim = sub.add_parser(
        "controller-sim", help="run the pneumatic controller simulator")
    p_sim.add_argument("--host", default="127.0.0.1")
    p_sim.add_argument("--port", type=int, default=DEFAULT_PORT)
    p_sim.add_argument("--tau", type=float, default=DEFAULT_TAU_S,
                       help="pressure time constant, s")
    p_sim.add_argument("--tick-hz", type=float, default=DEFAULT_TICK_HZ)
    p_sim.add_argument("--settle-band", type=float,
                       default=DEFAULT_SETTLE_BAND_KPA, help="snap band, kPa")
    p_sim.add_argument("--hold-on-idle", action="store_true",
                       help="hold last target when no trigger is set")

    p_serve = sub.add_parser(
        "serve", help="run the twin engine plus its HTTP API")
    p_serve.add_argument("--config", required=True, help="twin JSON path")
    p_serve.add_argument("--http-host", default="127.0.0.1")
    p_serve.add_argument("--http-port", type=int, default=8421)
    p_serve.add_argument("--ui", default=None,
                         help="static directory for the operator console")

    p_demo = sub.add_parser(
        "demo", help="replay a command script end to end, record twin CSV")
    p_demo.add_argument("--script", required=True,
                        help="CSV of time_ms,type,value commands")
    p_demo.add_argument("--out", required=True, help="output twin CSV path")
    p_demo.add_argument("--deterministic", action="store_true",
                        help="fixed-step virtual clock, no sockets")
    p_demo.add_argument("--fit", default=None,
                        help="fit JSON (default: built-in linear fit)")
    p_demo.add_argument("--poll-hz", type=float, default=50.0)
    p_demo.add_argument("--tau", type=float, default=DEFAULT_TAU_S)
    p_demo.add_argument("--tick-hz", type=float, default=DEFAULT_TICK_HZ)
    p_demo.add_argument("--tail-ms", type=float, default=1000.0,
                        help="extra recording time after the last command")
    p_demo.add_argument("--sim-port", type=int, default=0,
                        help="controller port in wall-clock mode (0 = any)")
    _add_geometry_flags(p_demo)

    p_eval = sub.add_parser(
        "eval", help="relative tip position error against a reference")
    p_eval.add_argument("--reference", type=_vec3, required=True,
                        metavar="X,Y,Z", help="reference tip position, mm")
    source = p_eval.add_mutually_exclusive_group(required=True)
    source.add_argument("--computed", type=_vec3, metavar="X,Y,Z",
                        help="computed tip position, mm")
    source.add_argument("--url", help="running twin base URL, uses /state")
    source.add_argument("--fit", help="fit JSON; compute pose at --pressure")
    p_eval.add_argument("--pressure", type=float, default=None, help="kPa")
    _add_geometry_flags(p_eval)

    p_report = sub.add_parser(
        "report", help="render figures and a summary table from a run CSV")
    p_report.add_argument("--run", required=True, help="twin CSV from demo")
    p_report.add_argument("--out-dir", default=None,
                          help="output directory (default: alongside the run)")
    return parser


def _add_geometry_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lengths-mm", type=_vec4,
                        default=DEFAULT_LENGTHS_MM, metavar="L1,L2,L3,L4")
    parser.add_argument("--phis-deg", type=_vec4,
                        default=(0.0, 0.0, 0.0, 0.0), metavar="P1,P2,P3,P4",
                        help="per-section bending plane angles")
    parser.add_argument("--angles", choices=("cumulative", "incremental"),
                        default="cumulative",
                        help="how measured angles map to sections")


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args: argparse.Namespace) -> int:
    samples = read_calibration_csv(args.csv)
    fit = fit_cubic(samples)
    save_fit_json(args.out, fit)
    for i, resid in enumerate(fit.residual_rms_deg, start=1):
        print(f"section {i} rms residual {resid:.3f} deg")
    _diag(f"wrote {args.out}")
    return EXIT_OK


def _build_config(args: argparse.Namespace, fit: CubicFit,
                  flange: FlangeSource | None = None) -> TwinConfig:
    kwargs: dict = {
        "fit": fit,
        "lengths": tuple(args.lengths_mm),
        "phis": tuple(math.radians(v) for v in args.phis_deg),
        "angle_mode": args.angles,
    }
    if flange is not None:
        kwargs["flange"] = flange
    if getattr(args, "poll_hz", None) is not None:
        kwargs["poll_hz"] = args.poll_hz
    return TwinConfig(**kwargs)


def cmd_pose(args: argparse.Namespace) -> int:
    fit = load_fit_json(args.fit)
    flange = FlangeSource.static(FlangePose(args.flange_t, args.flange_q))
    cfg = _build_config(args, fit, flange)
    state = pipeline_step(args.pressure, cfg)
    _print_pose(state)
    if state.extrapolated:
        _diag(f"EXTRAPOLATED: {args.pressure} kPa is outside the fit range "
              f"{fit.valid_range}")
    return EXIT_OK


def _print_pose(state: TwinState) -> None:
    for row in state.end_pose:
        print(" ".join(repr(float(v)) for v in row))
    print("position_mm " + " ".join(repr(v) for v in state.tip_position))
    print("quaternion_wxyz " + " ".join(repr(v) for v in state.tip_quaternion))


def cmd_controller_sim(args: argparse.Namespace) -> int:
    server = ControllerServer(args.host, args.port, tau=args.tau,
                              tick_hz=args.tick_hz,
                              settle_band=args.settle_band,
                              hold_on_idle=args.hold_on_idle)
    server.start()
    host, port = server.address
    _diag(f"controller listening on {host}:{port} "
          f"(tau={args.tau}s, tick={args.tick_hz}Hz)")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        _diag("stopping")
    finally:
        server.stop()
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = load_twin_config(args.config)
    engine = TwinEngine(cfg)
    api = TwinApiServer(engine, args.http_host, args.http_port,
                        static_dir=args.ui)
    engine.start()
    try:
        api.start()
    except StartupError:
        engine.stop()
        raise
    host, port = api.address
    _diag(f"twin API on http://{host}:{port} "
          f"(controller {cfg.host}:{cfg.port}, poll {cfg.poll_hz} Hz)")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        _diag("stopping")
    finally:
        api.stop()
        engine.stop()
    return EXIT_OK


def cmd_demo(args: argparse.Namespace) -> int:
    if args.fit is not None:
        fit = load_fit_json(args.fit)
    else:
        fit = default_demo_fit()
        _diag("using built-in linear fit (theta_i = p over -90..120 kPa)")
    cfg = _build_config(args, fit)
    count = run_demo(args.script, args.out, cfg,
                     deterministic=args.deterministic, tau=args.tau,
                     tick_hz=args.tick_hz, sim_port=args.sim_port,
                     tail_ms=args.tail_ms)
    _diag(f"recorded {count} states to {args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if args.computed is not None:
        state = _tip_state(args.computed)
    elif args.url is not None:
        state = _fetch_state(args.url)
    else:
        if args.pressure is None:
            raise ValueError("--fit requires --pressure")
        cfg = _build_config(args, load_fit_json(args.fit))
        state = pipeline_step(args.pressure, cfg)
    result = evaluate_pose_error(state, args.reference)
    print("reference_mm " + " ".join(repr(v) for v in result.reference_mm))
    print("computed_mm " + " ".join(repr(v) for v in result.computed_mm))
    print(f"error_percent {result.error_percent!r}")
    return EXIT_OK


def _tip_state(tip: tuple[float, ...]) -> TwinState:
    pose = np.eye(4)
    pose[:3, 3] = tip
    return TwinState(
        timestamp_ms=0.0, pressure_kpa=0.0, thetas_deg=(0.0,) * 4,
        kappas=(0.0,) * 4, end_pose=pose, flange_pose=FlangePose.identity(),
        extrapolated=False, controller_faults=0, link_ok=True)


def _fetch_state(base_url: str) -> TwinState:
    url = base_url.rstrip("/") + "/state"
    with urllib.request.urlopen(url, timeout=5.0) as resp:
        payload = json.loads(resp.read())
    pose = np.array(payload["end_pose"], dtype=float)
    return TwinState(
        timestamp_ms=payload["timestamp_ms"],
        pressure_kpa=payload["pressure_kpa"],
        thetas_deg=tuple(payload["thetas_deg"]),
        kappas=tuple(payload["kappas"]),
        end_pose=pose,
        flange_pose=FlangePose(tuple(payload["flange"]["translation"]),
                               tuple(payload["flange"]["quaternion"])),
        extrapolated=payload["extrapolated"],
        controller_faults=payload["controller_faults"],
        link_ok=payload["link_ok"])


def cmd_report(args: argparse.Namespace) -> int:
    import os

    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.run))
    for path in render_report(args.run, out_dir):
        print(path)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "pose": cmd_pose,
    "controller-sim": cmd_controller_sim,
    "serve": cmd_serve,
    "demo": cmd_demo,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InsufficientDataError, ConditioningError) as exc:
        _diag(f"error: {exc}")
        return EXIT_INSUFFICIENT_DATA
    except StartupError as exc:
        _diag(f"error: {exc}")
        return EXIT_PORT_CONFLICT
    except (CsvFormatError, ScriptError, ConfigError, ValueError,
            OSError, json.JSONDecodeError) as exc:
        _diag(f"error: {exc}")
        return EXIT_BAD_INPUT


def controller_sim_entry() -> int:
    """Console-script alias so the simulator can run without the twin CLI."""
    return main(["controller-sim", *sys.argv[1:]])


if __name__ == "__main__":
    sys.exit(main())
