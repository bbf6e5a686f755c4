"""3D skeleton reconstruction from 2D keypoints plus depth frames.

Per frame the pipeline runs: depth dilation -> depth sampling at keypoint
pixels -> pinhole back-projection -> self-occlusion detection and resolution
-> temporal median smoothing. Depths are meters in the camera frame (x right,
y down, z forward); a zero depth pixel means "no reading".

Self-occlusions (two or more keypoints sharing a camera ray, hence reading the
same front-surface depth) are repaired by adjusting the occluded parts' depths
along their rays so the incident limb lengths return to the values measured
during calibration; each occluded group is solved independently with a damped
Gauss-Newton iteration on at most a handful of variables.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import CalibrationError, FrameAlignmentError
from .io_utils import atomic_write_bytes, atomic_write_text

PARTS = (
    "nose", "neck",
    "left_shoulder", "left_elbow", "left_wrist", "left_hand",
    "right_shoulder", "right_elbow", "right_wrist", "right_hand",
    "left_hip", "left_knee", "left_ankle",
    "right_hip", "right_knee", "right_ankle",
)

UPPER_BODY_LIMBS = (
    ("nose", "neck"),
    ("neck", "left_shoulder"), ("neck", "right_shoulder"),
    ("left_shoulder", "left_elbow"), ("left_elbow", "left_wrist"),
    ("left_wrist", "left_hand"),
    ("right_shoulder", "right_elbow"), ("right_elbow", "right_wrist"),
    ("right_wrist", "right_hand"),
)

LEG_LIMBS = (
    ("neck", "left_hip"), ("neck", "right_hip"),
    ("left_hip", "left_knee"), ("left_knee", "left_ankle"),
    ("right_hip", "right_knee"), ("right_knee", "right_ankle"),
)

DEFAULT_LIMBS = UPPER_BODY_LIMBS + LEG_LIMBS


def _limb_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal length in pixels (square pixels) and image size."""

    f: float
    width: int
    height: int

    def __post_init__(self):
        if self.f <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("focal length and image dimensions must be positive")


@dataclass(frozen=True)
class Keypoint2D:
    part: str
    u: float
    v: float
    confidence: float = 1.0


@dataclass
class Skeleton3D:
    """Per-part 3D points (meters, camera frame); a part not in `points` is invalid."""

    points: dict[str, np.ndarray] = field(default_factory=dict)
    confidence: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def valid(self, part: str) -> bool:
        return part in self.points


def dilate_depth(depth: np.ndarray, kernel_radius: int) -> np.ndarray:
    """Grow near-camera regions: per-pixel minimum of the valid depths in the
    (2r+1)^2 neighborhood. Holes (zeros) are filled by the nearest valid
    neighbor's depth and stay zero only when the whole neighborhood is empty.
    """
    if kernel_radius < 0:
        raise ValueError("kernel_radius must be >= 0")
    if kernel_radius == 0:
        return depth.copy()
    work = np.where(depth > 0, depth, np.inf)
    out = ndimage.minimum_filter(work, size=2 * kernel_radius + 1, mode="nearest")
    out[np.isinf(out)] = 0.0
    return out


def project_keypoint(kp: Keypoint2D, d: float, intrinsics: CameraIntrinsics) -> np.ndarray | None:
    """Back-project a pixel with known depth: p = d * ((u - w/2)/f, (v - h/2)/f, 1).

    Returns None for a non-positive depth (no reading).
    """
    if d <= 0:
        return None
    return d * np.array([
        (kp.u - intrinsics.width / 2.0) / intrinsics.f,
        (kp.v - intrinsics.height / 2.0) / intrinsics.f,
        1.0,
    ])


def median_point(samples) -> np.ndarray:
    """Per-coordinate lower median (deterministic for even window sizes)."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("median_point needs a non-empty (k, 3) sample window")
    return np.sort(arr, axis=0)[(arr.shape[0] - 1) // 2]


def median_smooth(history: dict[str, list[np.ndarray]], order: int) -> Skeleton3D:
    """Smooth one skeleton from per-part windows of the most recent valid samples.

    Only the last `order` samples of each window are used; empty windows give
    an invalid part.
    """
    if order < 1:
        raise ValueError("median order must be >= 1")
    skel = Skeleton3D()
    for part, window in history.items():
        if window:
            skel.points[part] = median_point(window[-order:])
            skel.confidence[part] = 1.0
    return skel


class TemporalMedianFilter:
    """Streaming per-part median over the `order` most recent valid observations."""

    def __init__(self, order: int):
        if order < 1:
            raise ValueError("median order must be >= 1")
        self.order = order
        self._windows: dict[str, list[np.ndarray]] = {}

    def push(self, skel: Skeleton3D) -> Skeleton3D:
        out = Skeleton3D(warnings=list(skel.warnings))
        for part, p in skel.points.items():
            window = self._windows.setdefault(part, [])
            window.append(np.asarray(p, dtype=float))
            del window[:-self.order]
            out.points[part] = median_point(window)
            out.confidence[part] = skel.confidence.get(part, 1.0)
        return out


@dataclass
class LimbCalibration:
    """Reference limb lengths in meters, keyed by the (sorted) endpoint pair."""

    lengths: dict[tuple[str, str], float]

    def length(self, a: str, b: str) -> float | None:
        return self.lengths.get(_limb_key(a, b))

    def save(self, path: str | Path) -> None:
        lines = [f"{a} {b} {length:.9f}" for (a, b), length in sorted(self.lengths.items())]
        atomic_write_text(Path(path), "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "LimbCalibration":
        lengths: dict[tuple[str, str], float] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'part_a part_b length'")
            lengths[_limb_key(fields[0], fields[1])] = float(fields[2])
        return cls(lengths)


def calibrate_limbs(
    frames: list[Skeleton3D],
    limbs=DEFAULT_LIMBS,
    confidence_floor: float = 0.5,
    min_frames: int = 10,
) -> LimbCalibration:
    """Per-limb median endpoint distance over frames where both ends are clean.

    A frame counts for a limb when both endpoints are valid with confidence at
    or above the floor. Limbs observed in fewer than min_frames frames abort
    calibration with an error naming them.
    """
    lengths: dict[tuple[str, str], float] = {}
    missing: list[str] = []
    for a, b in limbs:
        samples = []
        for skel in frames:
            if (skel.valid(a) and skel.valid(b)
                    and skel.confidence.get(a, 1.0) >= confidence_floor
                    and skel.confidence.get(b, 1.0) >= confidence_floor):
                samples.append(float(np.linalg.norm(skel.points[a] - skel.points[b])))
        if len(samples) < min_frames:
            missing.append(f"{a}-{b} ({len(samples)} clean frames)")
        else:
            lengths[_limb_key(a, b)] = float(np.median(samples))
    if missing:
        raise CalibrationError(
            f"insufficient calibration frames (need {min_frames}) for limbs: "
            + ", ".join(missing))
    return LimbCalibration(lengths)


def detect_occlusions(keypoints: list[Keypoint2D], pixel_threshold: float = 8.0) -> list[set[str]]:
    """Group keypoints whose pairwise pixel distance falls under the threshold.

    Grouping is a transitive closure, so chains collapse into one group; only
    groups of two or more parts are returned, ordered by their first member.
    """
    if pixel_threshold <= 0:
        raise ValueError("pixel_threshold must be positive")
    kps = [kp for kp in keypoints if kp.confidence > 0]
    parent = list(range(len(kps)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(kps)):
        for j in range(i + 1, len(kps)):
            if math.hypot(kps[i].u - kps[j].u, kps[i].v - kps[j].v) < pixel_threshold:
                parent[find(i)] = find(j)
    groups: dict[int, set[str]] = {}
    for i, kp in enumerate(kps):
        groups.setdefault(find(i), set()).add(kp.part)
    return sorted((g for g in groups.values() if len(g) >= 2), key=lambda g: min(g))


def occlusion_objective(skel: Skeleton3D, group: set[str], calib: LimbCalibration,
                        limbs=DEFAULT_LIMBS) -> float:
    """Sum of squared limb-length-squared mismatches over limbs touching the group."""
    total = 0.0
    for a, b in limbs:
        if (a in group or b in group) and skel.valid(a) and skel.valid(b):
            ref = calib.length(a, b)
            if ref is not None:
                diff = float(np.sum((skel.points[a] - skel.points[b]) ** 2)) - ref * ref
                total += diff * diff
    return total


def _solve_group(
    group: set[str],
    points: dict[str, np.ndarray],
    calib: LimbCalibration,
    limbs,
    depth_min: float,
    depth_max: float,
    max_iter: int = 200,
    obj_tol: float = 1e-10,
    step_tol: float = 1e-9,
):
    """Damped Gauss-Newton over the latent depths of one occluded group.

    Returns (new depths per part, objective, converged) or None when no
    calibrated limb touches the group.
    """
    # Residuals r = |p_a - p_b|^2 - L^2 over calibrated limbs touching the group,
    # where grouped parts move along their own camera rays: p_i = d_i * ray_i.
    residual_limbs = []
    for a, b in limbs:
        if (a in group or b in group) and a in points and b in points:
            ref = calib.length(a, b)
            if ref is not None:
                residual_limbs.append((a, b, ref * ref))
    variables = sorted(p for p in group if p in points
                       and any(p in (a, b) for a, b, _ in residual_limbs))
    if not variables or not residual_limbs:
        return None

    rays = {p: points[p] / points[p][2] for p in variables}
    var_index = {p: i for i, p in enumerate(variables)}
    d = np.array([points[p][2] for p in variables])

    def positions(dvec):
        pos = dict(points)
        for p, i in var_index.items():
            pos[p] = dvec[i] * rays[p]
        return pos

    def residuals(dvec):
        pos = positions(dvec)
        return np.array([float(np.sum((pos[a] - pos[b]) ** 2)) - l2
                         for a, b, l2 in residual_limbs])

    def jacobian(dvec):
        pos = positions(dvec)
        jac = np.zeros((len(residual_limbs), len(variables)))
        for r, (a, b, _) in enumerate(residual_limbs):
            q = pos[a] - pos[b]
            if a in var_index:
                jac[r, var_index[a]] += 2.0 * float(q @ rays[a])
            if b in var_index:
                jac[r, var_index[b]] -= 2.0 * float(q @ rays[b])
        return jac

    res = residuals(d)
    objective = float(res @ res)
    # Overlapped depths start exactly on the occluder, where the objective is
    # stationary; nudge each variable deeper (occluded parts sit behind the
    # surface the sensor saw) to break the symmetry.
    if objective > obj_tol and np.linalg.norm(jacobian(d).T @ res) < 1e-12:
        for p, i in var_index.items():
            incident = [math.sqrt(l2) for a, b, l2 in residual_limbs if p in (a, b)]
            d[i] += 0.5 * min(incident) / float(np.linalg.norm(rays[p]))
        d = np.clip(d, depth_min, depth_max)
        res = residuals(d)
        objective = float(res @ res)

    def stationary():
        # A least-squares minimum of an over-determined (noisy) system is a
        # valid stopping point even when the objective cannot reach zero.
        return float(np.linalg.norm(jacobian(d).T @ residuals(d))) < 1e-8

    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        if objective < obj_tol:
            converged = True
            break
        jac = jacobian(d)
        jtj = jac.T @ jac
        jtr = jac.T @ res
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(jtj + lam * np.eye(len(d)), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            d_new = np.clip(d + step, depth_min, depth_max)
            res_new = residuals(d_new)
            objective_new = float(res_new @ res_new)
            if objective_new < objective:
                d, res, objective = d_new, res_new, objective_new
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted or np.linalg.norm(step) < step_tol:
            converged = objective < obj_tol or stationary()
            break
    else:
        converged = objective < obj_tol or stationary()
    return {p: float(d[i]) for p, i in var_index.items()}, objective, converged


def resolve_occlusions(
    skel: Skeleton3D,
    groups: list[set[str]],
    calib: LimbCalibration,
    intrinsics: CameraIntrinsics,
    limbs=DEFAULT_LIMBS,
    depth_min: float = 0.2,
    depth_max: float = 10.0,
) -> Skeleton3D:
    """Re-estimate the depths of occluded parts so limb lengths match calibration.

    Each group is solved independently; unoccluded parts are never touched. A
    group with no calibrated incident limb is flagged invalid; a solve that
    stalls keeps its best iterate and records a warning.
    """
    del intrinsics  # rays are recovered from the projected points themselves
    out = Skeleton3D(dict(skel.points), dict(skel.confidence), list(skel.warnings))
    for group in groups:
        solved = _solve_group(group, out.points, calib, limbs, depth_min, depth_max)
        if solved is None:
            for part in group:
                out.points.pop(part, None)
                out.confidence.pop(part, None)
            out.warnings.append(
                f"unresolved occlusion {sorted(group)}: no calibrated incident limb")
            continue
        depths, objective, converged = solved
        for part, depth in depths.items():
            out.points[part] = depth * (skel.points[part] / skel.points[part][2])
        if not converged:
            out.warnings.append(
                f"occlusion solver stopped early for {sorted(group)} "
                f"(objective {objective:.3e})")
    return out


@dataclass
class PipelineConfig:
    dilation_radius: int = 3
    median_order: int = 5
    occlusion_threshold_px: float = 8.0
    min_confidence: float = 0.05
    depth_min: float = 0.2
    depth_max: float = 10.0
    limbs: tuple = DEFAULT_LIMBS


@dataclass
class ReconstructionStats:
    frames: int = 0
    keypoints_projected: int = 0
    occlusion_groups: int = 0
    unresolved_groups: int = 0


def reconstruct_frame(
    keypoints: list[Keypoint2D],
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    calib: LimbCalibration | None,
    config: PipelineConfig,
    stats: ReconstructionStats | None = None,
) -> Skeleton3D:
    """Single-frame reconstruction without the temporal smoothing stage."""
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise FrameAlignmentError(
            f"depth image {depth.shape} does not match intrinsics "
            f"({intrinsics.height}, {intrinsics.width})")
    dilated = dilate_depth(depth, config.dilation_radius)
    skel = Skeleton3D()
    usable = []
    for kp in keypoints:
        if kp.confidence < config.min_confidence:
            continue
        usable.append(kp)
        col = min(max(int(round(kp.u)), 0), intrinsics.width - 1)
        row = min(max(int(round(kp.v)), 0), intrinsics.height - 1)
        point = project_keypoint(kp, float(dilated[row, col]), intrinsics)
        if point is not None:
            skel.points[kp.part] = point
            skel.confidence[kp.part] = kp.confidence
            if stats is not None:
                stats.keypoints_projected += 1
    groups = detect_occlusions(usable, config.occlusion_threshold_px)
    if stats is not None:
        stats.occlusion_groups += len(groups)
    if groups and calib is not None:
        skel = resolve_occlusions(skel, groups, calib, intrinsics, config.limbs,
                                  config.depth_min, config.depth_max)
        if stats is not None:
            stats.unresolved_groups += len(skel.warnings)
    return skel


def reconstruct_stream(
    keypoint_frames: list[list[Keypoint2D]],
    depth_frames: list[np.ndarray],
    intrinsics: CameraIntrinsics,
    calib: LimbCalibration | None = None,
    config: PipelineConfig | None = None,
) -> tuple[list[Skeleton3D], ReconstructionStats]:
    """Run the full per-frame pipeline over time-aligned keypoint/depth streams."""
    if len(keypoint_frames) != len(depth_frames):
        raise FrameAlignmentError(
            f"{len(keypoint_frames)} keypoint frames vs {len(depth_frames)} depth frames")
    if config is None:
        config = PipelineConfig()
    smoother = TemporalMedianFilter(config.median_order)
    stats = ReconstructionStats(frames=len(depth_frames))
    out = []
    for kps, depth in zip(keypoint_frames, depth_frames):
        skel = reconstruct_frame(kps, depth, intrinsics, calib, config, stats)
        out.append(smoother.push(skel))
    return out, stats


# --- file formats ---------------------------------------------------------

def save_keypoint_frames(path: str | Path, frames: list[list[Keypoint2D]]) -> None:
    """Text rows `frame_index part u v confidence`."""
    lines = []
    for i, frame in enumerate(frames):
        for kp in frame:
            lines.append(f"{i} {kp.part} {kp.u:.6f} {kp.v:.6f} {kp.confidence:.6f}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_keypoint_frames(path: str | Path) -> list[list[Keypoint2D]]:
    frames: dict[int, list[Keypoint2D]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ValueError(f"{path}:{lineno}: expected 'frame part u v confidence'")
        idx = int(fields[0])
        frames.setdefault(idx, []).append(
            Keypoint2D(fields[1], float(fields[2]), float(fields[3]), float(fields[4])))
    if not frames:
        return []
    return [frames.get(i, []) for i in range(max(frames) + 1)]


def write_depth_pgm(path: str | Path, depth_m: np.ndarray, f: float) -> None:
    """16-bit big-endian PGM, one millimeter per unit, zero = no reading.

    The focal length rides in a header comment so each frame is self-contained.
    """
    mm = np.round(np.clip(depth_m, 0.0, 65.535) * 1000.0).astype(">u2")
    h, w = mm.shape
    header = f"P5\n# f {f:.6f}\n{w} {h}\n65535\n".encode("ascii")
    atomic_write_bytes(Path(path), header + mm.tobytes())


def read_depth_pgm(path: str | Path) -> tuple[np.ndarray, float]:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM file")
    f_match = re.search(rb"#\s*f\s+([0-9.eE+-]+)", data[:512])
    if f_match is None:
        raise ValueError(f"{path}: missing '# f <focal_px>' header comment")
    # Header = P5, width, height, maxval as whitespace separated tokens, with
    # '#' comments running to end of line; pixel data starts after maxval.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    mm = np.frombuffer(data, dtype=">u2", offset=pos, count=w * h).reshape(h, w)
    return mm.astype(float) / 1000.0, float(f_match.group(1))


def load_depth_dir(path: str | Path) -> tuple[list[np.ndarray], CameraIntrinsics]:
    """Read a directory of .pgm depth frames (sorted by name) with shared intrinsics."""
    files = sorted(Path(path).glob("*.pgm"))
    if not files:
        raise FileNotFoundError(f"no .pgm depth frames in {path}")
    frames, focals = [], set()
    for file in files:
        depth, f = read_depth_pgm(file)
        frames.append(depth)
        focals.add(f)
        if depth.shape != frames[0].shape:
            raise FrameAlignmentError(f"{file}: frame size {depth.shape} differs from first frame")
    if len(focals) != 1:
        raise FrameAlignmentError(f"{path}: inconsistent focal lengths {sorted(focals)}")
    h, w = frames[0].shape
    return frames, CameraIntrinsics(focals.pop(), w, h)


def save_skeleton_stream(path: str | Path, skeletons: list[Skeleton3D]) -> None:
    """Text rows `frame_index part x y z valid_flag` (meters), all parts each frame."""
    lines = []
    for i, skel in enumerate(skeletons):
        for part in PARTS:
            if skel.valid(part):
                x, y, z = skel.points[part]
                lines.append(f"{i} {part} {x:.9f} {y:.9f} {z:.9f} 1")
            else:
                lines.append(f"{i} {part} 0 0 0 0")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_skeleton_stream(path: str | Path) -> list[Skeleton3D]:
    frames: dict[int, Skeleton3D] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 6:
            raise ValueError(f"{path}:{lineno}: expected 'frame part x y z valid'")
        idx = int(fields[0])
        skel = frames.setdefault(idx, Skeleton3D())
        if fields[5] == "1":
            skel.points[fields[1]] = np.array([float(fields[2]), float(fields[3]), float(fields[4])])
            skel.confidence[fields[1]] = 1.0
    if not frames:
        return []
    return [frames.get(i, Skeleton3D()) for i in range(max(frames) + 1)]
