"""``handkin`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 invalid or unparsable input,
3 runtime data error (unreachable posture, missing joint, corrupt stream).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace

from . import __version__
from .calibration import Alignment, SensorCalibration, apply_calibration
from .evaluation import (
    ProtocolConfig,
    compute_metrics,
    emit_report,
    make_participant,
    run_protocol,
    schedule,
    trial_frames,
)
from .exceptions import (
    DegenerateError,
    HandkinError,
    MissingJointError,
    ModelValidationError,
    ParseError,
    UnknownChannelError,
    UnknownLinkError,
    Unreachable,
)
from .ik import ESTIMATION_IK_CONFIG, IkConfig, solve_ik
from .kinematics import forward_kinematics, serialize_model
from .models import load_any_model
from .pipeline import (
    NoiseConfig,
    Pipeline,
    StreamError,
    dumps_estimates,
    dumps_frames,
    loads_frames,
    simulate_glove,
)
from .transform import Transform

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse reports usage errors with status 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# -- input helpers ----------------------------------------------------------------

def _read(path):
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _Failure(EXIT_INVALID, f"cannot read {path}: {exc.strerror}") from None


def _json(path, what):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what} {path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None


def _model(path):
    return load_any_model(_read(path))


def _joint_state(path):
    doc = _json(path, "joint state")
    if not isinstance(doc, dict) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                            for v in doc.values()):
        raise ParseError(f"joint state {path}: expected an object of joint name -> radians")
    return {k: float(v) for k, v in doc.items()}


def _transform(path):
    try:
        return Transform.from_dict(_json(path, "transform"))
    except ValueError as exc:
        raise ParseError(f"transform {path}: {exc}") from None


def _ik_config(path):
    if path is None:
        return ESTIMATION_IK_CONFIG
    doc = _json(path, "IK config")
    if not isinstance(doc, dict):
        raise ParseError("IK config must be an object")
    return IkConfig.from_dict(doc)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _pose_doc(t: Transform) -> dict:
    return {"xyz": list(t.translation), "quat": list(t.rotation), "rpy": [float(a) for a in t.rpy()]}


# -- commands ----------------------------------------------------------------------

def cmd_model_validate(args):
    try:
        model = _model(args.path)
    except (ParseError, ModelValidationError) as exc:
        where = getattr(exc, "element", None)
        detail = f" [{where}]" if where else ""
        print(f"FAIL {args.path}{detail}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.expand:
        _write(args.out, serialize_model(model))
    else:
        print(f"PASS {args.path}: model {model.name!r}, {len(model.joints)} joints "
              f"({len(model.revolute_joints)} revolute), end effectors {', '.join(model.end_effectors)}")
    return EXIT_OK


def cmd_fk(args):
    model = _model(args.model)
    q = _joint_state(args.joints)
    tips = args.tip or list(model.end_effectors)
    doc = {tip: _pose_doc(forward_kinematics(model, q, tip)) for tip in tips}
    _write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_ik(args):
    model = _model(args.model)
    target = _transform(args.target)
    seed = model.zero_state()
    if args.initial:
        seed.update(_joint_state(args.initial))
    cfg = _ik_config(args.ik_config) if args.ik_config else IkConfig()
    res = solve_ik(model, args.tip, target, seed, cfg)
    doc = {
        "joints": res.joints,
        "converged": res.converged,
        "pos_residual": res.position_residual,
        "ori_residual": res.orientation_residual,
        "iters": res.iterations_used,
    }
    _write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_calibrate_apply(args):
    calib = SensorCalibration.loads(_read(args.calib))
    frames = loads_frames(_read(args.frames))
    lines = [json.dumps({"t": f.timestamp, "angles": apply_calibration(f, calib)}, sort_keys=True) for f in frames]
    _write(args.out, "".join(line + "\n" for line in lines))
    return EXIT_OK


def cmd_calibrate_align(args):
    glove, hand = _model(args.glove), _model(args.hand)
    calib = SensorCalibration.loads(_read(args.calib))
    frames = loads_frames(_read(args.frame))
    if not frames:
        raise _Failure(EXIT_RUNTIME, f"{args.frame}: no calibration frame")
    posture = hand.zero_state()
    if args.posture:
        posture.update(_joint_state(args.posture))
    alignment = Pipeline(glove, hand, calib).calibrate_alignment(frames[0], posture, args.finger)
    _write(args.out, json.dumps(alignment.to_dict(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_estimate(args):
    glove, hand = _model(args.glove), _model(args.hand)
    calib = SensorCalibration.loads(_read(args.calib))
    alignment = Alignment.loads(_read(args.alignment)) if args.alignment else Alignment()
    pipe = Pipeline(glove, hand, calib, alignment, _ik_config(args.ik_config))
    text = _read(args.frames)
    try:
        frames = loads_frames(text)
        results = pipe.process_stream(frames)
    except StreamError as exc:
        line = exc.line
        if line is None and exc.index is not None:
            line = _line_of_frame(text, exc.index)
        where = f"line {line}: " if line is not None and not str(exc).startswith("line") else ""
        raise _Failure(EXIT_RUNTIME, f"{args.frames}: {where}{exc}") from None
    _write(args.out, dumps_estimates(results))
    return EXIT_OK


def _line_of_frame(text, index):
    seen = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if lineno == 1 or not line.strip():
            continue
        seen += 1
        if seen == index:
            return lineno
    return None


def _noise(args):
    noise = NoiseConfig.from_dict(_json(args.noise, "noise config")) if args.noise else NoiseConfig()
    return noise.with_seed(args.seed)


def cmd_simulate(args):
    if args.protocol:
        cfg = replace(ProtocolConfig.from_dict(_json(args.protocol, "protocol config")), seed=args.seed)
        if args.noise:
            cfg = replace(cfg, noise=_noise(args))
        frames, extra = [], []
        t0 = 0.0
        trial = 0
        for p in range(cfg.participants):
            who = make_participant(cfg, p)
            for spec in schedule(cfg, p):
                label = {"participant": p, "block": spec.block, "repetition": spec.repetition,
                         "bent_joint": spec.bent_joint, "target_deg": round(math.degrees(spec.target_angle), 9)}
                stream = trial_frames(cfg, who, spec, t0)
                frames += stream
                extra += [{"trial": dict(label, index=trial)}] * len(stream)
                t0 += cfg.frames_per_trial / cfg.frame_rate_hz
                trial += 1
        _write(args.out, dumps_frames(frames, extra))
        return EXIT_OK
    missing = [f"--{n}" for n in ("posture", "glove", "hand", "calib") if getattr(args, n) is None]
    if missing:
        raise _Failure(EXIT_USAGE, f"posture mode needs {', '.join(missing)} (or use --protocol)")
    glove, hand = _model(args.glove), _model(args.hand)
    calib = SensorCalibration.loads(_read(args.calib))
    alignment = Alignment.loads(_read(args.alignment)) if args.alignment else Alignment()
    q = hand.zero_state()
    q.update(_joint_state(args.posture))
    frame = simulate_glove(q, hand, glove, alignment, calib, _noise(args), timestamp=args.t)
    _write(args.out, dumps_frames([frame]))
    return EXIT_OK


def cmd_evaluate(args):
    cfg = ProtocolConfig.from_dict(_json(args.config, "protocol config")) if args.config else ProtocolConfig()
    cfg = replace(cfg, seed=args.seed)
    if args.jitter_deg is not None:
        cfg = replace(cfg, posture_jitter_deg=args.jitter_deg)
    run = run_protocol(cfg, jobs=args.jobs)
    if not run.results:
        raise _Failure(EXIT_RUNTIME, "every trial was skipped; nothing to report")
    for spec, reason in run.skipped:
        print(f"skipped participant {spec.participant} {spec.bent_joint} "
              f"{math.degrees(spec.target_angle):.0f} deg: {reason}", file=sys.stderr)
    _write(args.out, emit_report(compute_metrics(run.results), args.format))
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="handkin", description="Glove-to-hand kinematic posture estimation.")
    p.add_argument("--version", action="version", version=f"handkin {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    model = sub.add_parser("model", help="model documents")
    msub = model.add_subparsers(dest="action", required=True, parser_class=_Parser)
    val = msub.add_parser("validate", help="check a model, hand or glove document")
    val.add_argument("path")
    val.add_argument("--expand", action="store_true", help="print the full model document")
    val.add_argument("--out", help="output file for --expand (default stdout)")
    val.set_defaults(func=cmd_model_validate)

    fk = sub.add_parser("fk", help="forward kinematics")
    fk.add_argument("--model", required=True)
    fk.add_argument("--joints", required=True, help="JSON object of joint name -> radians")
    fk.add_argument("--tip", action="append", help="target link (repeatable; default all end effectors)")
    fk.add_argument("--out")
    fk.set_defaults(func=cmd_fk)

    ik = sub.add_parser("ik", help="inverse kinematics for one tip")
    ik.add_argument("--model", required=True)
    ik.add_argument("--tip", required=True)
    ik.add_argument("--target", required=True, help="transform file {xyz, rpy|quat|axis_angle}")
    ik.add_argument("--initial", help="seed joint state (default all zero)")
    ik.add_argument("--ik-config", help="solver settings (default solver defaults)")
    ik.add_argument("--out")
    ik.set_defaults(func=cmd_ik)

    cal = sub.add_parser("calibrate", help="sensor calibration and alignment")
    csub = cal.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ap = csub.add_parser("apply", help="convert a frame stream to glove joint angles")
    ap.add_argument("--calib", required=True)
    ap.add_argument("--frames", required=True)
    ap.add_argument("--out")
    ap.set_defaults(func=cmd_calibrate_apply)
    al = csub.add_parser("align", help="register glove to hand from a calibration frame")
    for name in ("glove", "hand", "calib", "frame"):
        al.add_argument(f"--{name}", required=True)
    al.add_argument("--posture", help="hand posture held during the frame (default straight)")
    al.add_argument("--finger", default="index")
    al.add_argument("--out")
    al.set_defaults(func=cmd_calibrate_align)

    est = sub.add_parser("estimate", help="sensor stream to hand joint stream")
    for name in ("frames", "glove", "hand", "calib"):
        est.add_argument(f"--{name}", required=True)
    est.add_argument("--alignment")
    est.add_argument("--ik-config")
    est.add_argument("--out")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="synthetic sensor frames")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--protocol", help="protocol config; emits every trial's stream")
    sim.add_argument("--posture", help="hand joint state for a single frame")
    for name in ("glove", "hand", "calib", "alignment", "noise"):
        sim.add_argument(f"--{name}")
    sim.add_argument("--t", type=float, default=0.0, help="timestamp of the posture frame")
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="run the bending protocol and report metrics")
    ev.add_argument("--seed", type=int, required=True)
    ev.add_argument("--config", help="protocol config (default standard protocol)")
    ev.add_argument("--format", choices=("table", "csv", "json"), default="table")
    ev.add_argument("--jitter-deg", type=float, help="override posture_jitter_deg")
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(message)s")
    try:
        return args.func(args)
    except _Failure as exc:
        print(f"handkin: {exc}", file=sys.stderr)
        return exc.code
    except StreamError as exc:
        print(f"handkin: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ParseError, ModelValidationError) as exc:
        print(f"handkin: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (Unreachable, MissingJointError, UnknownChannelError, UnknownLinkError, DegenerateError) as exc:
        print(f"handkin: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except HandkinError as exc:
        print(f"handkin: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
