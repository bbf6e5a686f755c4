"""Gloss token -> joint trajectory look-up table and sequential playback.

Each LSE gloss maps to a recorded joint-space trajectory (timed keyframes).
Translated token sequences compile into an execution plan whose trajectories
play back strictly one after another; a configurable pause separates signs.
Playback interpolates linearly between keyframes, so samples stay inside the
joint limits whenever the keyframes do.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LutFormatError, PlanError
from .io_utils import atomic_write_text

JointLimits = dict[str, tuple[float, float]]


def load_joint_limits(path: str | Path) -> JointLimits:
    limits: JointLimits = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise LutFormatError(f"{path}:{lineno}: expected 'joint min max'")
        lo, hi = float(fields[1]), float(fields[2])
        if not lo < hi:
            raise LutFormatError(f"{path}:{lineno}: joint {fields[0]} has min >= max")
        limits[fields[0]] = (lo, hi)
    if not limits:
        raise LutFormatError(f"{path}: empty joint limit table")
    return limits


def default_joint_limits() -> JointLimits:
    return load_joint_limits(
        Path(importlib.resources.files("text2sign").joinpath("data/joint_limits.txt")))


def neutral_angle(limits: JointLimits, joint: str) -> float:
    """Rest angle used for joints a trajectory does not drive."""
    lo, hi = limits[joint]
    return 0.0 if lo <= 0.0 <= hi else (lo + hi) / 2.0


@dataclass(frozen=True)
class Keyframe:
    angles: dict[str, float]
    duration: float


@dataclass(frozen=True)
class Trajectory:
    keyframes: tuple[Keyframe, ...]

    @property
    def duration(self) -> float:
        return sum(kf.duration for kf in self.keyframes)

    @property
    def joints(self) -> tuple[str, ...]:
        return tuple(sorted(self.keyframes[0].angles))


def _validate_trajectory(token: str, traj: Trajectory, limits: JointLimits) -> None:
    if not traj.keyframes:
        raise LutFormatError(f"token {token!r}: trajectory has no keyframes")
    joints = set(traj.keyframes[0].angles)
    if not joints:
        raise LutFormatError(f"token {token!r}: keyframes drive no joints")
    for n, kf in enumerate(traj.keyframes, start=1):
        if kf.duration <= 0:
            raise LutFormatError(f"token {token!r}: keyframe {n} has non-positive duration")
        if set(kf.angles) != joints:
            raise LutFormatError(f"token {token!r}: keyframe {n} drives a different joint set")
        for joint, angle in kf.angles.items():
            if joint not in limits:
                raise LutFormatError(f"token {token!r}: unknown joint {joint!r}")
            lo, hi = limits[joint]
            if not lo <= angle <= hi:
                raise LutFormatError(
                    f"token {token!r}: joint {joint} angle {angle} outside [{lo}, {hi}]")


@dataclass
class MotionLut:
    limits: JointLimits
    entries: dict[str, Trajectory] = field(default_factory=dict)

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def record_entry(self, token: str, trajectory: Trajectory) -> None:
        """Insert or replace one token's trajectory after validating it."""
        _validate_trajectory(token, trajectory, self.limits)
        self.entries[token] = trajectory


def load_lut(path: str | Path, limits: JointLimits | None = None) -> MotionLut:
    """Parse a LUT file: `[token]` block headers followed by one keyframe per
    line as `duration=<s> joint=<rad> ...`. Every entry is validated against
    the joint limits at load time.
    """
    if limits is None:
        limits = default_joint_limits()
    lut = MotionLut(limits)
    token: str | None = None
    keyframes: list[Keyframe] = []

    def flush():
        if token is not None:
            lut.record_entry(token, Trajectory(tuple(keyframes)))

    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            flush()
            token = line[1:-1].strip()
            keyframes = []
            if not token:
                raise LutFormatError(f"{path}:{lineno}: empty token header")
            continue
        if token is None:
            raise LutFormatError(f"{path}:{lineno}: keyframe before any [token] header")
        duration, angles = None, {}
        for item in line.split():
            key, sep, value = item.partition("=")
            if not sep:
                raise LutFormatError(f"{path}:{lineno}: expected key=value, got {item!r}")
            if key == "duration":
                duration = float(value)
            else:
                angles[key] = float(value)
        if duration is None:
            raise LutFormatError(f"{path}:{lineno}: keyframe missing duration=")
        keyframes.append(Keyframe(angles, duration))
    flush()
    return lut


def save_lut(lut: MotionLut, path: str | Path) -> None:
    lines = []
    for token, traj in lut.entries.items():
        lines.append(f"[{token}]")
        for kf in traj.keyframes:
            parts = [f"duration={kf.duration!r}"]
            parts += [f"{joint}={angle!r}" for joint, angle in sorted(kf.angles.items())]
            lines.append(" ".join(parts))
        lines.append("")
    atomic_write_text(Path(path), "\n".join(lines))


def default_lut_path() -> Path:
    return Path(importlib.resources.files("text2sign").joinpath("data/demo_motion_lut.txt"))


@dataclass(frozen=True)
class ExecutionPlan:
    """Trajectories in token arrival order; the duration counts signing time only."""

    segments: tuple[tuple[str, Trajectory], ...]

    @property
    def total_duration(self) -> float:
        return sum(traj.duration for _, traj in self.segments)


def compile_plan(tokens: list[str], lut: MotionLut) -> ExecutionPlan:
    """Look up every token; unknown tokens abort with the full missing list."""
    missing = sorted({t for t in tokens if t not in lut.entries})
    if missing:
        raise PlanError("missing tokens: " + ", ".join(missing))
    return ExecutionPlan(tuple((t, lut.entries[t]) for t in tokens))


def _sample_trajectory(traj: Trajectory, local_t: float) -> dict[str, float]:
    """Angles at local_t in [0, duration): each keyframe holds for its duration,
    blending linearly toward the next keyframe; the last keyframe holds still.
    """
    t = local_t
    kfs = traj.keyframes
    for k, kf in enumerate(kfs):
        if t < kf.duration or k == len(kfs) - 1:
            if k == len(kfs) - 1:
                return dict(kf.angles)
            frac = t / kf.duration
            nxt = kfs[k + 1].angles
            return {j: a + (nxt[j] - a) * frac for j, a in kf.angles.items()}
        t -= kf.duration
    return dict(kfs[-1].angles)


def simulate_execution(
    plan: ExecutionPlan,
    sample_rate: float,
    limits: JointLimits | None = None,
    inter_sign_pause: float = 0.2,
) -> list[tuple[float, str, float]]:
    """Sample the plan at a fixed rate into (time, joint, angle) rows.

    Samples cover the half-open interval [0, timeline); the final pose is held
    for the last keyframe's duration, which supplies the endpoint samples.
    During inter-sign pauses the previous sign's final pose is held. Joints a
    sign does not drive sit at their neutral angle.
    """
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    if limits is None:
        limits = default_joint_limits()
    joints = sorted(limits)
    neutral = {j: neutral_angle(limits, j) for j in joints}

    # (start_time, end_time, trajectory or held pose dict)
    intervals: list[tuple[float, float, object]] = []
    clock = 0.0
    for i, (_, traj) in enumerate(plan.segments):
        if i > 0 and inter_sign_pause > 0:
            prev = intervals[-1][2]
            held = _sample_trajectory(prev, prev.duration) if isinstance(prev, Trajectory) else prev
            intervals.append((clock, clock + inter_sign_pause, held))
            clock += inter_sign_pause
        intervals.append((clock, clock + traj.duration, traj))
        clock += traj.duration
    if not intervals:
        return []

    n_samples = int(clock * sample_rate * (1.0 - 1e-12)) + 1
    log: list[tuple[float, str, float]] = []
    seg = 0
    for k in range(n_samples):
        t = k / sample_rate
        while t >= intervals[seg][1] and seg < len(intervals) - 1:
            seg += 1
        start, _, content = intervals[seg]
        if isinstance(content, Trajectory):
            angles = _sample_trajectory(content, t - start)
        else:
            angles = content
        for joint in joints:
            log.append((t, joint, angles.get(joint, neutral[joint])))
    return log


def save_simulation_csv(log: list[tuple[float, str, float]], path: str | Path) -> None:
    lines = ["time,joint,angle"]
    lines += [f"{t:.6f},{joint},{angle:.9f}" for t, joint, angle in log]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
