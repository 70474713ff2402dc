"""Desk-scale replication of the single-joint bending study.

Synthetic participants wear a glove fitted to their scaled hand and hold
postures where one index-finger joint (MCP, PIP or DIP) is bent to a target
angle while the others stay straight. Each trial's five-second stream is
estimated twice, by the kinematic pipeline and by a linear coupling
baseline, and the angular distances to the expected angles are compared
with paired t-tests across participants.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .calibration import Alignment, linear_calibration
from .exceptions import DegenerateError, ModelValidationError, ParseError, Unreachable
from .ik import ESTIMATION_IK_CONFIG, IkConfig
from .models import (
    DEFAULT_GLOVE_MOUNT,
    DEFAULT_HAND_LIMITS,
    build_glove_model,
    build_hand_model,
    fit_glove_geometry,
    hand_joint_name,
    hand_of_length,
)
from .pipeline import NoiseConfig, Pipeline, encode_frame, glove_angles

log = logging.getLogger(__name__)

JOINTS = ("MCP", "PIP", "DIP")
METRICS = ("bentjoint", "MCP", "PIP", "DIP")
ESTIMATORS = ("kinematic", "baseline")
FLEXION_JOINT = {"MCP": "mcp_flexion", "PIP": "pip", "DIP": "dip"}
_LIMIT_KEY = {"MCP": "mcp_flexion", "PIP": "pip", "DIP": "dip"}


@dataclass(frozen=True)
class TrialSpec:
    """One condition presentation. ``target_angle`` is in radians."""

    bent_joint: str
    target_angle: float
    block: int
    repetition: int
    participant: int = 0

    def __post_init__(self):
        if self.bent_joint not in JOINTS:
            raise ModelValidationError(f"bent_joint must be one of {JOINTS}", "bent_joint")
        lo, hi = DEFAULT_HAND_LIMITS[_LIMIT_KEY[self.bent_joint]]
        if not lo <= self.target_angle <= hi:
            raise ModelValidationError(
                f"target {self.target_angle:.4g} rad outside {self.bent_joint} limits", "target_angle"
            )

    def expected(self, joint: str) -> float:
        return self.target_angle if joint == self.bent_joint else 0.0


@dataclass(frozen=True)
class TrialResult:
    spec: TrialSpec
    mean_estimates: dict
    estimator: str

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ModelValidationError(f"estimator must be one of {ESTIMATORS}", "estimator")
        if set(self.mean_estimates) != set(JOINTS):
            raise ModelValidationError("mean_estimates needs exactly MCP, PIP and DIP", "mean_estimates")
        if not all(math.isfinite(v) for v in self.mean_estimates.values()):
            raise ModelValidationError("mean_estimates must be finite", "mean_estimates")

    def distances(self) -> dict:
        """Per-trial angular distances keyed by metric name."""
        phi = {j: abs(self.mean_estimates[j] - self.spec.expected(j)) for j in JOINTS}
        phi["bentjoint"] = phi[self.spec.bent_joint]
        return phi


@dataclass(frozen=True)
class CouplingConfig:
    """Power-grasp endpoint (MCP, PIP, DIP) of the baseline's bend trajectory."""

    grasp_endpoint: tuple = (math.radians(70.0), math.radians(100.0), math.radians(60.0))

    def __post_init__(self):
        g = tuple(float(v) for v in self.grasp_endpoint)
        if len(g) != 3:
            raise ModelValidationError("grasp_endpoint needs three angles", "grasp_endpoint")
        for joint, v in zip(JOINTS, g):
            lo, hi = DEFAULT_HAND_LIMITS[_LIMIT_KEY[joint]]
            if not (v > 0 and lo <= v <= hi):
                raise ModelValidationError(f"grasp {joint} angle must be positive and within limits", joint)
        object.__setattr__(self, "grasp_endpoint", g)

    def posture(self, alpha: float) -> dict:
        return dict(zip(JOINTS, (alpha * v for v in self.grasp_endpoint)))


def baseline_estimate(alpha_norm: float, cfg: CouplingConfig | None = None) -> tuple:
    """MCP, PIP, DIP interpolated between full extension and the grasp endpoint."""
    cfg = cfg or CouplingConfig()
    if not 0.0 <= alpha_norm <= 1.0:
        raise ValueError(f"alpha_norm must be in [0, 1], got {alpha_norm}")
    return tuple(alpha_norm * v for v in cfg.grasp_endpoint)


@dataclass(frozen=True)
class BendProfile:
    """Normalizes one bend channel between its extension and grasp counts."""

    channel: str
    extension_raw: int
    grasp_raw: int

    def alpha(self, raw: int) -> float:
        span = self.grasp_raw - self.extension_raw
        if span == 0:
            raise DegenerateError(f"bend channel {self.channel!r} reads the same at extension and grasp")
        return min(max((raw - self.extension_raw) / span, 0.0), 1.0)


# -- protocol -------------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolConfig:
    """Study design and simulation knobs.

    ``posture_jitter_deg`` is the SD of a per-trial Gaussian offset on each
    index-finger joint, standing in for how well a person holds the target.
    """

    participants: int = 12
    targets_deg: tuple = (20.0, 45.0)
    joints: tuple = JOINTS
    blocks: int = 6
    reps_per_block: int = 1
    seed: int = 0
    noise: NoiseConfig = NoiseConfig()
    coupling: CouplingConfig = CouplingConfig()
    posture_jitter_deg: float = 2.0
    hand_length_range: tuple = (0.152, 0.192)
    duration_s: float = 5.0
    frame_rate_hz: float = 50.0
    finger: str = "index"
    ik: IkConfig | None = None

    def __post_init__(self):
        if isinstance(self.participants, bool) or not isinstance(self.participants, int) or self.participants < 1:
            raise ModelValidationError("participants must be an integer >= 1", "participants")
        for name in ("blocks", "reps_per_block"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ModelValidationError(f"{name} must be an integer >= 1", name)
        if not self.joints or any(j not in JOINTS for j in self.joints):
            raise ModelValidationError(f"joints must be drawn from {JOINTS}", "joints")
        if not self.targets_deg:
            raise ModelValidationError("targets_deg must not be empty", "targets_deg")
        if not (self.posture_jitter_deg >= 0 and math.isfinite(self.posture_jitter_deg)):
            raise ModelValidationError("posture_jitter_deg must be >= 0", "posture_jitter_deg")
        lo, hi = self.hand_length_range
        if not 0 < lo <= hi:
            raise ModelValidationError("hand_length_range must be positive and ordered", "hand_length_range")
        if not (self.duration_s > 0 and self.frame_rate_hz > 0):
            raise ModelValidationError("duration_s and frame_rate_hz must be positive", "frame_rate_hz")
        object.__setattr__(self, "targets_deg", tuple(float(t) for t in self.targets_deg))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "hand_length_range", (float(lo), float(hi)))
        for t in self.targets_deg:
            for j in self.joints:
                TrialSpec(j, math.radians(t), 0, 0)

    @property
    def conditions(self) -> list[tuple[str, float]]:
        return [(j, math.radians(t)) for j in self.joints for t in self.targets_deg]

    @property
    def frames_per_trial(self) -> int:
        return max(1, int(round(self.duration_s * self.frame_rate_hz)))

    def to_dict(self) -> dict:
        doc = {
            "participants": self.participants,
            "targets_deg": list(self.targets_deg),
            "joints": list(self.joints),
            "blocks": self.blocks,
            "reps_per_block": self.reps_per_block,
            "seed": self.seed,
            "noise": self.noise.to_dict(),
            "coupling": {"grasp_endpoint_deg": [round(math.degrees(v), 9) for v in self.coupling.grasp_endpoint]},
            "posture_jitter_deg": self.posture_jitter_deg,
            "hand_length_range": list(self.hand_length_range),
            "duration_s": self.duration_s,
            "frame_rate_hz": self.frame_rate_hz,
            "finger": self.finger,
        }
        if self.ik is not None:
            doc["ik"] = self.ik.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> ProtocolConfig:
        if not isinstance(doc, dict):
            raise ParseError("protocol config must be an object")
        allowed = set(cls.__dataclass_fields__)
        extra = set(doc) - allowed
        if extra:
            raise ParseError(f"unknown protocol field(s): {sorted(extra)}")
        kw = dict(doc)
        if "noise" in kw:
            kw["noise"] = NoiseConfig.from_dict(kw["noise"])
        if "coupling" in kw:
            c = kw["coupling"]
            if not isinstance(c, dict) or set(c) - {"grasp_endpoint_deg"}:
                raise ParseError("coupling accepts only grasp_endpoint_deg")
            kw["coupling"] = (
                CouplingConfig(tuple(math.radians(v) for v in c["grasp_endpoint_deg"]))
                if "grasp_endpoint_deg" in c else CouplingConfig()
            )
        if "ik" in kw:
            kw["ik"] = IkConfig.from_dict(kw["ik"])
        for key in ("targets_deg", "joints", "hand_length_range"):
            if key in kw:
                if not isinstance(kw[key], list):
                    raise ParseError(f"{key} must be an array")
                kw[key] = tuple(kw[key])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ParseError(f"protocol config: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> ProtocolConfig:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed protocol config: {exc}") from None


@dataclass(frozen=True)
class Participant:
    """A synthetic wearer with their own hand, fitted glove and calibrations."""

    index: int
    hand_length: float
    pipeline: Pipeline
    true_alignment: Alignment
    bend: BendProfile


@dataclass
class ProtocolRun:
    results: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


def schedule(cfg: ProtocolConfig, participant: int) -> list[TrialSpec]:
    """Blocked, per-block shuffled trial order for one participant."""
    rng = np.random.default_rng([cfg.seed, participant, 1])
    conditions = cfg.conditions
    trials = []
    for block in range(cfg.blocks):
        for rep in range(cfg.reps_per_block):
            for k in rng.permutation(len(conditions)):
                joint, target = conditions[k]
                trials.append(TrialSpec(joint, target, block, rep, participant))
    return trials


def _finger_posture(cfg: ProtocolConfig, hand, flexion: dict, abduction: float = 0.0) -> dict:
    q = hand.zero_state()
    q[hand_joint_name(cfg.finger, "mcp_abduction")] = abduction
    for joint, value in flexion.items():
        q[hand_joint_name(cfg.finger, FLEXION_JOINT[joint])] = value
    return q


def make_participant(cfg: ProtocolConfig, index: int) -> Participant:
    rng = np.random.default_rng([cfg.seed, index, 0])
    length = float(rng.uniform(*cfg.hand_length_range))
    dims = hand_of_length(length)
    hand = build_hand_model(dims)
    glove = build_glove_model(fit_glove_geometry(dims))
    calib = linear_calibration(glove)
    truth = Alignment(DEFAULT_GLOVE_MOUNT)
    fingers = [cfg.finger]
    # calibration readings are taken before any slip
    quiet = replace(cfg.noise, slip=NoiseConfig().slip)

    def reading(q, seed):
        return encode_frame(glove_angles(q, hand, glove, truth, fingers=fingers), calib, quiet.with_seed(seed))

    seeds = rng.integers(0, 2**63, size=3)
    straight = _finger_posture(cfg, hand, {})
    base = Pipeline(glove, hand, calib, truth, cfg.ik or ESTIMATION_IK_CONFIG)
    alignment = base.calibrate_alignment(reading(straight, seeds[0]), straight, cfg.finger)
    grasp = _finger_posture(cfg, hand, cfg.coupling.posture(1.0))
    channel = f"{cfg.finger}_B"
    bend = BendProfile(
        channel,
        reading(straight, seeds[1]).channels[channel],
        reading(grasp, seeds[2]).channels[channel],
    )
    return Participant(index, length, replace(base, alignment=alignment), truth, bend)


def trial_frames(cfg: ProtocolConfig, who: Participant, spec: TrialSpec, t0: float = 0.0) -> list:
    """The synthetic sensor stream of one trial; raises :class:`Unreachable`."""
    rng = np.random.default_rng([cfg.seed, who.index, 2, spec.block, spec.repetition,
                                 JOINTS.index(spec.bent_joint), int(round(math.degrees(spec.target_angle) * 1000))])
    pipe = who.pipeline
    hand = pipe.hand
    jitter = rng.standard_normal(4) * math.radians(cfg.posture_jitter_deg)
    flexion = {j: spec.expected(j) + d for j, d in zip(JOINTS, jitter[1:])}
    q = hand.clamp(_finger_posture(cfg, hand, flexion, jitter[0]))
    # the posture is held, so the glove linkage is solved once per trial
    angles = glove_angles(q, hand, pipe.glove, who.true_alignment, cfg.noise.slip, [cfg.finger])
    seeds = rng.integers(0, 2**63, size=cfg.frames_per_trial)
    return [encode_frame(angles, pipe.calibration, cfg.noise.with_seed(int(s)), t0 + i / cfg.frame_rate_hz)
            for i, s in enumerate(seeds)]


def run_trial(cfg: ProtocolConfig, who: Participant, spec: TrialSpec) -> list[TrialResult]:
    """Both estimators' mean joint angles over one trial's stream."""
    frames = trial_frames(cfg, who, spec)
    names = [hand_joint_name(cfg.finger, FLEXION_JOINT[j]) for j in JOINTS]
    kin = np.zeros(3)
    base = np.zeros(3)
    for _, est, _ in who.pipeline.process_stream(frames):
        kin += [est[name] for name in names]
    for frame in frames:
        base += baseline_estimate(who.bend.alpha(frame.channels[who.bend.channel]), cfg.coupling)
    n = len(frames)
    return [
        TrialResult(spec, dict(zip(JOINTS, (kin / n).tolist())), "kinematic"),
        TrialResult(spec, dict(zip(JOINTS, (base / n).tolist())), "baseline"),
    ]


def _run_participant(cfg: ProtocolConfig, index: int) -> ProtocolRun:
    run = ProtocolRun()
    who = make_participant(cfg, index)
    for spec in schedule(cfg, index):
        try:
            run.results.extend(run_trial(cfg, who, spec))
        except Unreachable as exc:
            log.warning("participant %d: skipping %s %.1f deg trial: %s",
                        index, spec.bent_joint, math.degrees(spec.target_angle), exc)
            run.skipped.append((spec, str(exc)))
    return run


def run_protocol(cfg: ProtocolConfig | None = None, jobs: int = 1) -> ProtocolRun:
    """Every participant's trials, in participant then schedule order.

    Unreachable ground-truth postures are logged and listed in
    ``skipped``. ``jobs > 1`` runs participants in worker processes; the
    output does not depend on ``jobs``.
    """
    cfg = cfg or ProtocolConfig()
    if jobs > 1 and cfg.participants > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_participant, [cfg] * cfg.participants, range(cfg.participants)))
    else:
        parts = [_run_participant(cfg, p) for p in range(cfg.participants)]
    run = ProtocolRun()
    for part in parts:
        run.results.extend(part.results)
        run.skipped.extend(part.skipped)
    return run


# -- statistics -------------------------------------------------------------------

@dataclass(frozen=True)
class TTest:
    t: float
    df: int
    p: float


def paired_t_test(a, b) -> TTest:
    """Two-sided paired t-test of ``a - b``.

    Raises
    ------
    ValueError
        Length mismatch or fewer than two pairs.
    DegenerateError
        The differences have zero variance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be 1-D and equally long, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0 or not math.isfinite(sd):
        raise DegenerateError("differences have zero variance; t is undefined")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    df = n - 1
    # two-sided tail of Student's t through the regularized incomplete beta
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTest(t, df, min(max(p, 0.0), 1.0))


@dataclass(frozen=True)
class MetricsReport:
    """Angular distances in radians.

    ``per_participant[estimator][participant][metric]`` holds the mean over
    that participant's trials; ``summary[estimator][metric]`` the mean and
    SD across participants; ``tests[metric]`` the paired test of kinematic
    minus baseline, or ``None`` when it is degenerate.
    """

    per_participant: dict
    summary: dict
    tests: dict


def compute_metrics(results) -> MetricsReport:
    if not results:
        raise ValueError("no trial results to summarize")
    paired: dict = {}
    for r in results:
        key = (r.spec.participant, r.spec.block, r.spec.repetition, r.spec.bent_joint, r.spec.target_angle)
        slot = paired.setdefault(key, {})
        if r.estimator in slot:
            raise ValueError(f"duplicate {r.estimator} result for trial {key}")
        slot[r.estimator] = r
    for key, slot in paired.items():
        if set(slot) != set(ESTIMATORS):
            raise ValueError(f"trial {key} lacks a result from every estimator")

    sums: dict = {e: {} for e in ESTIMATORS}
    for key in sorted(paired, key=repr):
        for est, r in paired[key].items():
            acc = sums[est].setdefault(r.spec.participant, {m: [] for m in METRICS})
            for m, v in r.distances().items():
                acc[m].append(v)
    per = {e: {p: {m: float(np.mean(v)) for m, v in acc.items()} for p, acc in sorted(sums[e].items())}
           for e in ESTIMATORS}
    people = sorted(per["kinematic"])
    summary = {}
    for e in ESTIMATORS:
        summary[e] = {}
        for m in METRICS:
            values = np.array([per[e][p][m] for p in people])
            sd = float(np.std(values, ddof=1)) if values.size > 1 else float("nan")
            summary[e][m] = (float(values.mean()), sd)
    tests = {}
    for m in METRICS:
        a = [per["kinematic"][p][m] for p in people]
        b = [per["baseline"][p][m] for p in people]
        try:
            tests[m] = paired_t_test(a, b)
        except (ValueError, DegenerateError):
            tests[m] = None
    return MetricsReport(per, summary, tests)


# -- reports ----------------------------------------------------------------------

_HEADERS = ("Phi_bentjoint", "Phi_MCP", "Phi_PIP", "Phi_DIP")


def _deg(x: float) -> str:
    return "n/a" if not math.isfinite(x) else f"{math.degrees(x):.2f}"


def _p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def _rows(report: MetricsReport) -> list[list[str]]:
    rows = []
    for e in ESTIMATORS:
        rows.append([f"M_{e}"] + [_deg(report.summary[e][m][0]) for m in METRICS])
    for e in ESTIMATORS:
        rows.append([f"SD_{e}"] + [_deg(report.summary[e][m][1]) for m in METRICS])
    df = next((t.df for t in report.tests.values() if t is not None), None)
    rows.append([f"t({df})" if df is not None else "t"]
                + [f"{report.tests[m].t:.2f}" if report.tests[m] else "n/a" for m in METRICS])
    rows.append(["p"] + [_p(report.tests[m].p) if report.tests[m] else "n/a" for m in METRICS])
    return rows


def emit_report(report: MetricsReport, fmt: str = "table") -> str:
    """Render ``report`` as ``table`` (degrees, two decimals), ``csv`` or ``json``."""
    if fmt == "table":
        rows = [[""] + list(_HEADERS)] + _rows(report)
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r)).rstrip()
                 for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row"] + list(_HEADERS))
        writer.writerows(_rows(report))
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "units": "deg",
            "summary": {e: {m: {"mean": math.degrees(mu), "sd": math.degrees(sd) if math.isfinite(sd) else None}
                            for m, (mu, sd) in report.summary[e].items()} for e in ESTIMATORS},
            "tests": {m: (None if t is None else {"t": t.t, "df": t.df, "p": t.p}) for m, t in report.tests.items()},
            "per_participant": {e: {str(p): {m: math.degrees(v) for m, v in ms.items()}
                                    for p, ms in report.per_participant[e].items()} for e in ESTIMATORS},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; use table, csv or json")
