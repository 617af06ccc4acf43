"""Motion data model: BVH ingestion/export, forward kinematics, feature
extraction, normalization, and a procedural synthetic-walk generator.

The feature representation per frame is

    [root position (3, cm)] + [root-relative joint positions (3 per
    non-root joint, cm)] + [foot-contact flags (one per tracked foot)]

with Y up and X the forward direction of the synthetic walker.  Joint
positions keep global orientation and subtract only the root translation,
so translating the whole clip moves the root channels and nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import as_array

CHANNEL_NAMES = (
    "Xposition", "Yposition", "Zposition",
    "Zrotation", "Xrotation", "Yrotation",
)

DEFAULT_VEL_EPS = 15.0     # cm/s
DEFAULT_HEIGHT_EPS = 3.0   # cm
STD_FLOOR = 1e-6


class BvhParseError(ValueError):
    """Malformed BVH input; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Joint:
    name: str
    parent: int | None
    offset: np.ndarray          # (3,) cm
    channels: tuple[str, ...]   # empty for end sites
    is_end_site: bool = False


@dataclass
class Skeleton:
    """Joints in file order; parents always precede children."""

    joints: list[Joint]

    def __post_init__(self):
        roots = [j for j in self.joints if j.parent is None]
        if len(roots) != 1:
            raise ValueError(f"skeleton must have exactly one root, found {len(roots)}")
        for i, j in enumerate(self.joints):
            if j.parent is not None and not 0 <= j.parent < i:
                raise ValueError(f"joint {j.name!r} parent must precede it")
            if not np.all(np.isfinite(j.offset)):
                raise ValueError(f"joint {j.name!r} has non-finite offset")

    @property
    def total_channels(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    @property
    def real_joint_indices(self) -> list[int]:
        return [i for i, j in enumerate(self.joints) if not j.is_end_site]

    def channel_offsets(self) -> list[int]:
        offs, c = [], 0
        for j in self.joints:
            offs.append(c)
            c += len(j.channels)
        return offs

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.joints]
        for i, j in enumerate(self.joints):
            if j.parent is not None:
                out[j.parent].append(i)
        return out


# -- BVH parsing -------------------------------------------------------------


class _Tokens:
    def __init__(self, text: str):
        self.items: list[tuple[str, int]] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, lineno))
        self.pos = 0
        self.last_line = len(text.splitlines()) or 1

    def peek(self) -> str | None:
        return self.items[self.pos][0] if self.pos < len(self.items) else None

    @property
    def line(self) -> int:
        if self.pos < len(self.items):
            return self.items[self.pos][1]
        return self.last_line

    def next(self, context: str) -> str:
        if self.pos >= len(self.items):
            raise BvhParseError(f"unexpected end of file while reading {context}",
                                self.last_line)
        tok, _ = self.items[self.pos]
        self.pos += 1
        return tok

    def expect(self, literal: str, context: str) -> None:
        line = self.line
        tok = self.next(context)
        if tok != literal:
            raise BvhParseError(
                f"malformed hierarchy: expected {literal!r}, got {tok!r} ({context})",
                line)

    def floats(self, n: int, context: str) -> np.ndarray:
        out = np.empty(n)
        for i in range(n):
            line = self.line
            tok = self.next(context)
            try:
                out[i] = float(tok)
            except ValueError:
                raise BvhParseError(
                    f"non-numeric value {tok!r} in {context}", line) from None
        return out


def _parse_joint(toks: _Tokens, parent: int | None, joints: list[Joint],
                 used_names: set) -> None:
    line = toks.line
    name = toks.next("joint name")
    if name in ("{", "}"):
        raise BvhParseError(f"malformed hierarchy: missing joint name", line)
    if name in used_names:
        raise BvhParseError(f"duplicate joint name {name!r}", line)
    used_names.add(name)
    toks.expect("{", f"joint {name}")
    toks.expect("OFFSET", f"joint {name}")
    offset = toks.floats(3, f"OFFSET of {name}")
    toks.expect("CHANNELS", f"joint {name}")
    count_line = toks.line
    count_tok = toks.next("channel count")
    try:
        n_channels = int(count_tok)
    except ValueError:
        raise BvhParseError(f"non-numeric channel count {count_tok!r}", count_line) from None
    channels = []
    for _ in range(n_channels):
        ch_line = toks.line
        ch = toks.next("channel name")
        if ch not in CHANNEL_NAMES:
            raise BvhParseError(f"unknown channel {ch!r}", ch_line)
        channels.append(ch)
    index = len(joints)
    joints.append(Joint(name, parent, offset, tuple(channels)))

    while True:
        nxt = toks.peek()
        if nxt == "JOINT":
            toks.next("JOINT")
            _parse_joint(toks, index, joints, used_names)
        elif nxt == "End":
            end_line = toks.line
            toks.next("End")
            site = toks.next("End Site")
            if site.lower() != "site":
                raise BvhParseError("malformed hierarchy: expected 'Site' after 'End'",
                                    end_line)
            toks.expect("{", "End Site")
            toks.expect("OFFSET", "End Site")
            end_offset = toks.floats(3, f"End Site of {name}")
            toks.expect("}", "End Site")
            end_name = f"{name}__end"
            k = 2
            while end_name in used_names:
                end_name = f"{name}__end{k}"
                k += 1
            used_names.add(end_name)
            joints.append(Joint(end_name, index, end_offset, (), is_end_site=True))
        elif nxt == "}":
            toks.next("}")
            return
        else:
            raise BvhParseError(
                f"malformed hierarchy: unexpected token {nxt!r} in joint {name}",
                toks.line)


def parse_bvh(text: str) -> tuple[Skeleton, np.ndarray, float]:
    """Parse BVH text into (skeleton, frames [F, C], frame_time seconds).

    Whitespace-insensitive; rotation order is preserved as declared.
    Raises BvhParseError with a line number on malformed input.
    """
    toks = _Tokens(text)
    toks.expect("HIERARCHY", "file header")
    toks.expect("ROOT", "hierarchy")
    joints: list[Joint] = []
    _parse_joint(toks, None, joints, set())

    motion_line = toks.line
    nxt = toks.peek()
    if nxt != "MOTION":
        raise BvhParseError(
            f"missing MOTION header (found {nxt!r})", motion_line)
    toks.next("MOTION")
    toks.expect("Frames:", "MOTION header")
    count_line = toks.line
    count_tok = toks.next("frame count")
    try:
        n_frames = int(count_tok)
    except ValueError:
        raise BvhParseError(f"non-numeric frame count {count_tok!r}", count_line) from None
    if n_frames < 0:
        raise BvhParseError(f"negative frame count {n_frames}", count_line)
    toks.expect("Frame", "MOTION header")
    toks.expect("Time:", "MOTION header")
    frame_time = float(toks.floats(1, "frame time")[0])

    skeleton = Skeleton(joints)
    width = skeleton.total_channels

    # group remaining tokens by source line: one line per frame
    rows: list[tuple[int, list[str]]] = []
    for tok, lineno in toks.items[toks.pos:]:
        if rows and rows[-1][0] == lineno:
            rows[-1][1].append(tok)
        else:
            rows.append((lineno, [tok]))
    if len(rows) != n_frames:
        where = rows[0][0] if rows else toks.last_line
        raise BvhParseError(
            f"expected {n_frames} frame rows, found {len(rows)}", where)
    frames = np.empty((n_frames, width))
    for i, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise BvhParseError(
                f"frame {i}: channel-count mismatch, expected {width} values, "
                f"got {len(cells)}", lineno)
        for k, cell in enumerate(cells):
            try:
                frames[i, k] = float(cell)
            except ValueError:
                raise BvhParseError(
                    f"frame {i}: non-numeric value {cell!r}", lineno) from None
    return skeleton, frames, frame_time


def _depth_first_order(skeleton: Skeleton) -> list[int]:
    children = skeleton.children()
    order: list[int] = []

    def visit(i: int) -> None:
        order.append(i)
        for c in children[i]:
            visit(c)

    visit(0)
    return order


def write_bvh(skeleton: Skeleton, frames: np.ndarray, frame_time: float) -> str:
    """Emit BVH text (6 decimal places everywhere).

    The joints list must already be in depth-first file order so that the
    frame columns line up with the emitted hierarchy.
    """
    frames = np.atleast_2d(as_array(frames))
    if frames.size == 0:
        frames = frames.reshape(0, skeleton.total_channels)
    if frames.shape[1] != skeleton.total_channels:
        raise ValueError(
            f"frame width {frames.shape[1]} != skeleton channel count "
            f"{skeleton.total_channels}")
    if _depth_first_order(skeleton) != list(range(len(skeleton.joints))):
        raise ValueError("skeleton joints must be in depth-first file order")
    children = skeleton.children()
    lines = ["HIERARCHY"]

    def fmt3(v):
        return " ".join(f"{x:.6f}" for x in v)

    def emit(index: int, depth: int, keyword: str):
        j = skeleton.joints[index]
        pad = "  " * depth
        inner = "  " * (depth + 1)
        if j.is_end_site:
            lines.append(f"{pad}End Site")
            lines.append(f"{pad}{{")
            lines.append(f"{inner}OFFSET {fmt3(j.offset)}")
            lines.append(f"{pad}}}")
            return
        lines.append(f"{pad}{keyword} {j.name}")
        lines.append(f"{pad}{{")
        lines.append(f"{inner}OFFSET {fmt3(j.offset)}")
        lines.append(f"{inner}CHANNELS {len(j.channels)} {' '.join(j.channels)}".rstrip())
        for child in children[index]:
            emit(child, depth + 1, "JOINT")
        lines.append(f"{pad}}}")

    emit(0, 0, "ROOT")
    lines.append("MOTION")
    lines.append(f"Frames: {frames.shape[0]}")
    lines.append(f"Frame Time: {frame_time:.6f}")
    for row in frames:
        lines.append(" ".join(f"{x:.6f}" for x in row))
    return "\n".join(lines) + "\n"


# -- forward kinematics ------------------------------------------------------


def _axis_rotations(axis: int, degrees: np.ndarray) -> np.ndarray:
    """Batched right-handed rotation matrices about one axis (0=X, 1=Y, 2=Z)."""
    rad = np.deg2rad(degrees)
    c, s = np.cos(rad), np.sin(rad)
    out = np.zeros((len(degrees), 3, 3))
    if axis == 0:
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = c
        out[:, 1, 2] = -s
        out[:, 2, 1] = s
        out[:, 2, 2] = c
    elif axis == 1:
        out[:, 0, 0] = c
        out[:, 0, 2] = s
        out[:, 1, 1] = 1.0
        out[:, 2, 0] = -s
        out[:, 2, 2] = c
    else:
        out[:, 0, 0] = c
        out[:, 0, 1] = -s
        out[:, 1, 0] = s
        out[:, 1, 1] = c
        out[:, 2, 2] = 1.0
    return out


_ROT_AXIS = {"Xrotation": 0, "Yrotation": 1, "Zrotation": 2}
_POS_AXIS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}


def forward_kinematics(skeleton: Skeleton, frames: np.ndarray) -> np.ndarray:
    """Global joint positions [F, J, 3] for every joint (end sites included).

    Rotation channels compose in declaration order, i.e. the last declared
    rotation is applied to the vector first; angles are degrees.
    """
    frames = np.atleast_2d(as_array(frames))
    if frames.size == 0:
        frames = frames.reshape(0, skeleton.total_channels)
    if frames.shape[1] != skeleton.total_channels:
        raise ValueError("frame width does not match skeleton channels")
    n_frames = frames.shape[0]
    offs = skeleton.channel_offsets()
    eye = np.broadcast_to(np.eye(3), (n_frames, 3, 3))
    global_rot: list[np.ndarray] = []
    global_pos: list[np.ndarray] = []
    for i, joint in enumerate(skeleton.joints):
        local_rot = eye
        local_pos = np.tile(joint.offset, (n_frames, 1))
        for k, ch in enumerate(joint.channels):
            col = frames[:, offs[i] + k]
            if ch in _ROT_AXIS:
                local_rot = local_rot @ _axis_rotations(_ROT_AXIS[ch], col)
            else:
                local_pos = local_pos.copy()
                local_pos[:, _POS_AXIS[ch]] += col
        if joint.parent is None:
            global_rot.append(np.ascontiguousarray(local_rot))
            global_pos.append(local_pos)
        else:
            p_rot = global_rot[joint.parent]
            p_pos = global_pos[joint.parent]
            global_rot.append(p_rot @ local_rot)
            global_pos.append(p_pos + np.einsum("fij,fj->fi", p_rot, local_pos))
    return np.stack(global_pos, axis=1)


# -- feature layout and clips ------------------------------------------------


@dataclass(frozen=True)
class FeatureLayout:
    """Channel map: root position, root-relative joints, contact flags.

    Indices partition 0..D-1 with D = 3 + 3*(J-1) + n_feet:
    root takes 0..2, the k-th non-root joint takes 3+3k..5+3k, and contact
    flags fill the tail in foot order.
    """

    joint_names: tuple[str, ...]   # root first
    foot_names: tuple[str, ...]

    def __post_init__(self):
        if not self.joint_names:
            raise ValueError("layout needs at least the root joint")
        if len(set(self.joint_names)) != len(self.joint_names):
            raise ValueError("duplicate joint names in layout")
        for foot in self.foot_names:
            if foot not in self.joint_names:
                raise ValueError(f"foot joint {foot!r} not in layout")

    @property
    def dim(self) -> int:
        return 3 * len(self.joint_names) + len(self.foot_names)

    @property
    def root_indices(self) -> np.ndarray:
        return np.arange(3)

    def joint_indices(self, name: str) -> np.ndarray:
        k = self.joint_names.index(name)
        return np.arange(3 * k, 3 * k + 3)

    @property
    def contact_start(self) -> int:
        return 3 * len(self.joint_names)

    @property
    def contact_indices(self) -> np.ndarray:
        return np.arange(self.contact_start, self.dim)

    def contact_index(self, foot: str) -> int:
        return self.contact_start + self.foot_names.index(foot)

    @property
    def channel_names(self) -> list[str]:
        names = []
        for j in self.joint_names:
            names += [f"{j}_x", f"{j}_y", f"{j}_z"]
        names += [f"contact_{f}" for f in self.foot_names]
        return names


@dataclass
class MotionClip:
    """Fixed-length clip of per-frame feature vectors."""

    layout: FeatureLayout
    frame_time: float
    features: np.ndarray     # [F, D]
    normalized: bool = False

    def __post_init__(self):
        self.features = as_array(self.features)
        if self.features.ndim != 2 or self.features.shape[1] != self.layout.dim:
            raise ValueError(
                f"features must be [F, {self.layout.dim}], got {self.features.shape}")
        if self.features.shape[0] < 1:
            raise ValueError("clip needs at least one frame")
        if self.frame_time <= 0:
            raise ValueError("frame_time must be positive")

    @property
    def frames(self) -> int:
        return self.features.shape[0]

    def root_positions(self) -> np.ndarray:
        return self.features[:, self.layout.root_indices]

    def joint_relative(self, name: str) -> np.ndarray:
        return self.features[:, self.layout.joint_indices(name)]

    def contacts(self) -> np.ndarray:
        return self.features[:, self.layout.contact_indices]

    def foot_global_positions(self) -> np.ndarray:
        """Root-relative foot channels plus root translation: [F, n_feet, 3]."""
        root = self.root_positions()
        return np.stack(
            [root + self.joint_relative(f) for f in self.layout.foot_names], axis=1)


@dataclass
class NormStats:
    """Per-dimension mean/std over a dataset, raw units; std floored."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = as_array(self.mean)
        self.std = as_array(self.std)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean/std must be matching 1-D arrays")
        if np.any(self.std <= 0):
            raise ValueError("std must be positive (floored)")


def compute_norm_stats(clips: list[MotionClip]) -> NormStats:
    """Pool all frames of all clips; std floored at 1e-6 per dimension."""
    if not clips:
        raise ValueError("empty dataset")
    dim = clips[0].layout.dim
    for c in clips:
        if c.layout.dim != dim:
            raise ValueError("clips disagree on feature dimension")
    pooled = np.concatenate([c.features for c in clips], axis=0)
    mean = pooled.mean(axis=0)
    std = np.maximum(pooled.std(axis=0), STD_FLOOR)
    return NormStats(mean=mean, std=std)


def normalize(clip: MotionClip, stats: NormStats, direction: str = "forward") -> MotionClip:
    """Standardize per dimension (forward) or undo it (inverse)."""
    if stats.mean.shape[0] != clip.layout.dim:
        raise ValueError(
            f"stats dimension {stats.mean.shape[0]} != clip dimension {clip.layout.dim}")
    if direction == "forward":
        feats = (clip.features - stats.mean) / stats.std
        flag = True
    elif direction == "inverse":
        feats = clip.features * stats.std + stats.mean
        flag = False
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return replace(clip, features=feats, normalized=flag)


def detect_foot_contacts(
    positions: np.ndarray,
    frame_time: float,
    vel_eps: float = DEFAULT_VEL_EPS,
    height_eps: float = DEFAULT_HEIGHT_EPS,
) -> np.ndarray:
    """Contact flags [F, n_feet] from global foot positions [F, n_feet, 3].

    A foot is in contact when its speed (central differences, one-sided at
    the ends) stays below vel_eps and its height above the clip's minimum
    foot height stays below height_eps.
    """
    positions = as_array(positions)
    if positions.ndim != 3 or positions.shape[2] != 3 or positions.shape[0] < 2:
        raise ValueError("positions must be [F >= 2, n_feet, 3]")
    vel = np.empty_like(positions)
    vel[1:-1] = (positions[2:] - positions[:-2]) / (2.0 * frame_time)
    vel[0] = (positions[1] - positions[0]) / frame_time
    vel[-1] = (positions[-1] - positions[-2]) / frame_time
    speed = np.linalg.norm(vel, axis=2)
    height = positions[:, :, 1] - positions[:, :, 1].min()
    return ((speed < vel_eps) & (height < height_eps)).astype(np.float64)


def resample_frames(values: np.ndarray, count: int) -> np.ndarray:
    """Uniform temporal resampling by linear interpolation along axis 0."""
    values = as_array(values)
    if values.shape[0] < 2:
        raise ValueError("need at least 2 source frames to resample")
    if count < 2:
        raise ValueError("need at least 2 output frames")
    src = np.linspace(0.0, 1.0, values.shape[0])
    dst = np.linspace(0.0, 1.0, count)
    flat = values.reshape(values.shape[0], -1)
    out = np.empty((count, flat.shape[1]))
    for k in range(flat.shape[1]):
        out[:, k] = np.interp(dst, src, flat[:, k])
    return out.reshape((count,) + values.shape[1:])


def to_features(
    skeleton: Skeleton,
    frames: np.ndarray,
    frame_time: float,
    foot_joints: list[str],
    clip_frames: int = 32,
    vel_eps: float = DEFAULT_VEL_EPS,
    height_eps: float = DEFAULT_HEIGHT_EPS,
) -> MotionClip:
    """Extract a fixed-length feature clip from raw BVH channel frames."""
    frames = np.atleast_2d(as_array(frames))
    if frames.shape[0] < 2:
        raise ValueError("need at least 2 frames of motion")
    real = skeleton.real_joint_indices
    names = [skeleton.joints[i].name for i in real]
    for foot in foot_joints:
        if foot not in names:
            raise ValueError(f"unknown foot joint {foot!r}")
    layout = FeatureLayout(tuple(names), tuple(foot_joints))

    globals_all = forward_kinematics(skeleton, frames)[:, real]  # [F, J, 3]
    duration = (frames.shape[0] - 1) * frame_time
    resampled = resample_frames(globals_all, clip_frames)
    new_frame_time = duration / (clip_frames - 1)

    root = resampled[:, 0]
    feats = np.empty((clip_frames, layout.dim))
    feats[:, layout.root_indices] = root
    for k, name in enumerate(names[1:], start=1):
        feats[:, layout.joint_indices(name)] = resampled[:, k] - root
    foot_cols = [names.index(f) for f in foot_joints]
    contacts = detect_foot_contacts(
        resampled[:, foot_cols], new_frame_time, vel_eps, height_eps)
    feats[:, layout.contact_indices] = contacts
    return MotionClip(layout=layout, frame_time=new_frame_time, features=feats)


# -- synthetic walk generator -------------------------------------------------

ROOT_HEIGHT = 90.0
HIP_DROP = 10.0
HIP_HALF_WIDTH = 9.0
HEAD_LENGTH = 40.0
SWING_HEIGHT = 8.0
JITTER_STD = 0.1  # cm

SYNTH_JOINTS = ("root", "left_hip", "right_hip", "left_foot", "right_foot", "head")
SYNTH_FEET = ("left_foot", "right_foot")


@dataclass(frozen=True)
class WalkStyle:
    """Gait parameters: stride length, cadence, forward lean, vertical bounce."""

    stride_cm: float
    frequency_hz: float
    lean_deg: float = 0.0
    bounce_cm: float = 0.0

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError("frequency_hz must be positive")
        if self.stride_cm < 0 or self.bounce_cm < 0:
            raise ValueError("stride_cm and bounce_cm must be non-negative")


def synthetic_layout() -> FeatureLayout:
    return FeatureLayout(SYNTH_JOINTS, SYNTH_FEET)


def _foot_track(times, stride, freq, phase0):
    """Planted/swinging foot trajectory along X with height, plus labels.

    Stance occupies the first half of each gait cycle with the foot pinned
    at its plant position; swing advances one stride on a smootherstep
    ramp (flat at both ends).  Height rises on a fast sine and falls on a
    softer sine^1.5 tail; the asymmetry keeps boundary frames cleanly
    separable under the contact detector's velocity/height bands.
    """
    phase = freq * times + phase0
    cycle = np.floor(phase)
    u = phase - cycle
    stance = u < 0.5
    swing_u = np.clip((u - 0.5) * 2.0, 0.0, 1.0)
    plant_x = (cycle - phase0) * stride
    ramp = 6.0 * swing_u ** 5 - 15.0 * swing_u ** 4 + 10.0 * swing_u ** 3
    x = np.where(stance, plant_x, plant_x + stride * ramp)
    lift = np.where(swing_u <= 0.5, np.sin(np.pi * swing_u),
                    np.sin(np.pi * swing_u) ** 1.5)
    y = np.where(stance, 0.0, SWING_HEIGHT * lift)
    return x, y, stance.astype(np.float64)


def synthetic_walk(
    style: WalkStyle,
    clip_frames: int = 32,
    frame_time: float = 1.0 / 30.0,
    seed: int = 0,
) -> tuple[MotionClip, np.ndarray]:
    """Procedural walking clip plus exact ground-truth contact labels.

    The root advances at stride*frequency cm/s with a sinusoidal vertical
    bounce; feet alternate half-cycle stance/swing; lean tilts the head
    forward.  Seeded Gaussian jitter (sigma 0.1 cm) on the position
    channels provides diversity; contact channels carry the exact labels.
    """
    if clip_frames < 8:
        raise ValueError("clip_frames must be >= 8")
    if frame_time <= 0:
        raise ValueError("frame_time must be positive")
    layout = synthetic_layout()
    rng = np.random.default_rng(seed)
    times = np.arange(clip_frames) * frame_time

    speed = style.stride_cm * style.frequency_hz
    root = np.stack([
        speed * times,
        ROOT_HEIGHT + style.bounce_cm * np.sin(2.0 * np.pi * style.frequency_hz * times),
        np.zeros(clip_frames),
    ], axis=1)

    lean = np.deg2rad(style.lean_deg)
    head_rel = np.array([np.sin(lean) * HEAD_LENGTH, np.cos(lean) * HEAD_LENGTH, 0.0])

    lx, ly, l_labels = _foot_track(times, style.stride_cm, style.frequency_hz, 0.0)
    rx, ry, r_labels = _foot_track(times, style.stride_cm, style.frequency_hz, 0.5)
    left_foot = np.stack([lx, ly, np.full(clip_frames, HIP_HALF_WIDTH)], axis=1)
    right_foot = np.stack([rx, ry, np.full(clip_frames, -HIP_HALF_WIDTH)], axis=1)

    feats = np.zeros((clip_frames, layout.dim))
    feats[:, layout.root_indices] = root
    feats[:, layout.joint_indices("left_hip")] = [0.0, -HIP_DROP, HIP_HALF_WIDTH]
    feats[:, layout.joint_indices("right_hip")] = [0.0, -HIP_DROP, -HIP_HALF_WIDTH]
    feats[:, layout.joint_indices("left_foot")] = left_foot - root
    feats[:, layout.joint_indices("right_foot")] = right_foot - root
    feats[:, layout.joint_indices("head")] = head_rel

    n_pos = layout.contact_start
    feats[:, :n_pos] += rng.normal(0.0, JITTER_STD, size=(clip_frames, n_pos))
    labels = np.stack([l_labels, r_labels], axis=1)
    feats[:, layout.contact_indices] = labels

    clip = MotionClip(layout=layout, frame_time=frame_time, features=feats)
    return clip, labels


def synthetic_skeleton() -> Skeleton:
    """Position-channel skeleton matching the synthetic walker's layout.

    Joints are listed in depth-first file order (what parse_bvh would
    return for the written file).
    """
    pos3 = ("Xposition", "Yposition", "Zposition")
    root_ch = pos3 + ("Zrotation", "Xrotation", "Yrotation")
    zero = np.zeros(3)
    return Skeleton([
        Joint("root", None, zero, root_ch),
        Joint("left_hip", 0, zero, pos3),
        Joint("left_foot", 1, zero, pos3),
        Joint("left_foot__end", 2, np.array([8.0, 0.0, 0.0]), (), is_end_site=True),
        Joint("right_hip", 0, zero, pos3),
        Joint("right_foot", 4, zero, pos3),
        Joint("right_foot__end", 5, np.array([8.0, 0.0, 0.0]), (), is_end_site=True),
        Joint("head", 0, zero, pos3),
        Joint("head__end", 7, np.array([0.0, 10.0, 0.0]), (), is_end_site=True),
    ])


def clip_to_bvh(clip: MotionClip) -> str:
    """Render a synthetic-layout clip as BVH (position channels per joint)."""
    if set(clip.layout.joint_names) != set(SYNTH_JOINTS):
        raise ValueError("BVH export is defined for the synthetic skeleton layout")
    skeleton = synthetic_skeleton()
    offs = skeleton.channel_offsets()
    rel = {name: clip.joint_relative(name) for name in SYNTH_JOINTS[1:]}
    rows = np.zeros((clip.frames, skeleton.total_channels))
    for i in skeleton.real_joint_indices:
        joint = skeleton.joints[i]
        col = offs[i]
        if joint.parent is None:
            rows[:, col:col + 3] = clip.root_positions()
            # root rotation channels stay zero
            continue
        parent = skeleton.joints[joint.parent]
        base = rel[parent.name] if parent.parent is not None else 0.0
        rows[:, col:col + 3] = rel[joint.name] - base
    return write_bvh(skeleton, rows, clip.frame_time)


# -- feature CSV --------------------------------------------------------------


def clip_to_csv(clip: MotionClip) -> str:
    """Header row naming each channel, one row per frame, 6 decimal places."""
    lines = [",".join(clip.layout.channel_names)]
    for row in clip.features:
        lines.append(",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def layout_from_channel_names(names: list[str]) -> FeatureLayout:
    joints: list[str] = []
    feet: list[str] = []
    i = 0
    while i < len(names) and not names[i].startswith("contact_"):
        trio = names[i:i + 3]
        stem = trio[0][:-2]
        if len(trio) != 3 or [t[-2:] for t in trio] != ["_x", "_y", "_z"] or any(
                not t.startswith(stem) for t in trio):
            raise ValueError(f"malformed channel triple at column {i}: {trio}")
        joints.append(stem)
        i += 3
    while i < len(names):
        if not names[i].startswith("contact_"):
            raise ValueError(f"expected contact channel at column {i}, got {names[i]!r}")
        feet.append(names[i][len("contact_"):])
        i += 1
    return FeatureLayout(tuple(joints), tuple(feet))


def clip_from_csv(text: str, frame_time: float, normalized: bool = False) -> MotionClip:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty feature CSV")
    layout = layout_from_channel_names(lines[0].split(","))
    rows = [np.array([float(v) for v in ln.split(",")]) for ln in lines[1:]]
    feats = np.stack(rows) if rows else np.empty((0, layout.dim))
    return MotionClip(layout=layout, frame_time=frame_time, features=feats,
                      normalized=normalized)
