"""Camera trajectory types and ingestion of pose / feature files."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

ORTHO_TOL = 1e-6
NORM_TOL = 1e-6
SCENE_HALF_EXTENT = 4.0

POSE_CSV_HEADER = ["id", "tx", "ty", "tz", "qw", "qx", "qy", "qz"]
FEATURE_MAGIC = b"VSFT"


class IngestError(ValueError):
    """Raised when an input file cannot be turned into a valid trajectory."""


class ParseError(IngestError):
    pass


class ValidationError(IngestError):
    pass


@dataclass(frozen=True, eq=False)
class CameraView:
    id: int
    position: np.ndarray
    rotation: np.ndarray
    feature: Optional[np.ndarray] = None
    frame_time: Optional[float] = None

    def __post_init__(self):
        pos = np.array(self.position, dtype=np.float64).reshape(3)
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        check_rotation(rot, self.id)
        pos.setflags(write=False)
        rot.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)
        if self.feature is not None:
            feat = np.array(self.feature, dtype=np.float64).reshape(-1)
            norm = np.linalg.norm(feat)
            if abs(norm - 1.0) > NORM_TOL:
                raise ValidationError(
                    f"frame {self.id}: feature norm {norm:.6g} is not 1; normalize on load"
                )
            feat.setflags(write=False)
            object.__setattr__(self, "feature", feat)


@dataclass(frozen=True)
class DistanceWeights:
    """Convex weights for the position, rotation and semantic measures, plus
    the Gaussian bandwidth used for positions."""

    alpha: float = 0.7
    beta: float = 0.2
    gamma: float = 0.1
    sigma: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name}={w} outside [0, 1]")
        total = self.alpha + self.beta + self.gamma
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"alpha + beta + gamma = {total:.12g}, must equal 1")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def without_semantic(cls, alpha: float = 0.7, beta: float = 0.2, sigma: float = 0.5):
        """Drop the semantic term and rescale alpha/beta to keep their ratio."""
        total = alpha + beta
        if total <= 0:
            raise ValueError("alpha + beta must be positive")
        return cls(alpha / total, beta / total, 0.0, sigma)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class Trajectory:
    views: tuple
    source_path: str = ""
    bounds: tuple = field(init=False)

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValidationError("trajectory has no views")
        for i, v in enumerate(views):
            if v.id != i:
                raise ValidationError(f"view ids must be contiguous from 0; position {i} has id {v.id}")
        has_feat = [v.feature is not None for v in views]
        if any(has_feat) and not all(has_feat):
            raise ValidationError("features must be present on all views or none")
        if all(has_feat):
            dims = {v.feature.shape[0] for v in views}
            if len(dims) != 1:
                raise ValidationError(f"feature dimensions differ across views: {sorted(dims)}")
        object.__setattr__(self, "views", views)
        pos = np.stack([v.position for v in views])
        object.__setattr__(self, "bounds", (pos.min(axis=0), pos.max(axis=0)))

    def __len__(self):
        return len(self.views)

    @cached_property
    def positions(self) -> np.ndarray:
        out = np.stack([v.position for v in self.views])
        out.setflags(write=False)
        return out

    @cached_property
    def rotations(self) -> np.ndarray:
        out = np.stack([v.rotation for v in self.views])
        out.setflags(write=False)
        return out

    @cached_property
    def features(self) -> Optional[np.ndarray]:
        if self.views[0].feature is None:
            return None
        out = np.stack([v.feature for v in self.views])
        out.setflags(write=False)
        return out

    @property
    def has_features(self) -> bool:
        return self.views[0].feature is not None

    @classmethod
    def from_arrays(cls, positions, rotations, features=None, frame_times=None, source_path=""):
        positions = np.asarray(positions, dtype=np.float64)
        rotations = np.asarray(rotations, dtype=np.float64)
        n = positions.shape[0]
        views = []
        for i in range(n):
            feat = None if features is None else features[i]
            t = None if frame_times is None else frame_times[i]
            views.append(CameraView(i, positions[i], rotations[i], feat, t))
        return cls(tuple(views), source_path)


def check_rotation(rot: np.ndarray, frame_id) -> None:
    err = np.abs(rot.T @ rot - np.eye(3)).max()
    det = np.linalg.det(rot)
    if not (err <= ORTHO_TOL and abs(det - 1.0) <= ORTHO_TOL):
        raise ValidationError(
            f"frame {frame_id}: rotation is not orthonormal (|R^T R - I|max={err:.3g}, det={det:.6g})"
        )


# --- rotations ------------------------------------------------------------

def quat_to_matrix(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to a 3x3 rotation matrix. The input is
    normalized first; a zero quaternion raises ValueError."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("quaternion has zero or non-finite norm")
    w, x, y, z = q / norm
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    # Shepperd's method; returns w >= 0
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


# --- loading / saving -----------------------------------------------------

def load_trajectory(path, format: Optional[str] = None) -> Trajectory:
    """Read a camera trajectory.

    Parameters
    ----------
    path : str or Path
        Pose file.
    format : {"transforms_json", "pose_csv"}, optional
        Inferred from the file suffix when omitted (``.json`` or ``.csv``).

    Returns
    -------
    Trajectory
        Views re-indexed 0..N-1 in file order (transforms_json frames are
        ordered by ``frame_index`` when every frame carries one, otherwise by
        ``file_path``). Positions are left in scene units.
    """
    path = Path(path)
    if format is None:
        format = {".json": "transforms_json", ".csv": "pose_csv"}.get(path.suffix.lower())
        if format is None:
            raise ParseError(f"{path}: cannot infer pose format from suffix {path.suffix!r}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from exc
    if format == "transforms_json":
        return _parse_transforms(text, str(path))
    if format == "pose_csv":
        return _parse_pose_csv(text, str(path))
    raise ValueError(f"unknown pose format {format!r}")


def _parse_transforms(text: str, source: str) -> Trajectory:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    frames = doc.get("frames") if isinstance(doc, dict) else None
    if not isinstance(frames, list) or not frames:
        raise ParseError(f"{source}: expected a non-empty 'frames' array")

    records = []
    for i, fr in enumerate(frames):
        if not isinstance(fr, dict) or "transform_matrix" not in fr:
            raise ParseError(f"{source}: frame {i} lacks 'transform_matrix'")
        try:
            T = np.array(fr["transform_matrix"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{source}: frame {i} transform_matrix is not numeric") from exc
        if T.shape != (4, 4):
            raise ParseError(f"{source}: frame {i} transform_matrix has shape {T.shape}, expected (4, 4)")
        records.append((fr, T, i))

    if all("frame_index" in fr for fr, _, _ in records):
        records.sort(key=lambda r: r[0]["frame_index"])
    else:
        records.sort(key=lambda r: str(r[0].get("file_path", "")))

    views = []
    for new_id, (fr, T, raw) in enumerate(records):
        label = fr.get("file_path", f"#{raw}")
        try:
            check_rotation(T[:3, :3], label)
        except ValidationError as exc:
            raise ValidationError(f"{source}: {exc}") from None
        t = fr.get("time")
        views.append(CameraView(new_id, T[:3, 3], T[:3, :3], None, None if t is None else float(t)))
    return Trajectory(tuple(views), source)


def _parse_pose_csv(text: str, source: str) -> Trajectory:
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError(f"{source}: empty pose file")
    header = [h.strip() for h in rows[0]]
    if header != POSE_CSV_HEADER:
        raise ParseError(f"{source}: line 1: expected header {','.join(POSE_CSV_HEADER)}")
    views = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 8:
            raise ParseError(f"{source}: line {lineno}: expected 8 fields, got {len(row)}")
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise ParseError(f"{source}: line {lineno}: {exc}") from exc
        frame = row[0].strip()
        try:
            R = quat_to_matrix(vals[3:])
        except ValueError as exc:
            raise ValidationError(f"{source}: frame {frame} (line {lineno}): {exc}") from exc
        try:
            check_rotation(R, frame)
        except ValidationError as exc:
            raise ValidationError(f"{source}: {exc}") from None
        views.append(CameraView(len(views), vals[:3], R))
    if not views:
        raise ParseError(f"{source}: no pose rows")
    return Trajectory(tuple(views), source)


def save_trajectory(traj: Trajectory, path, format: Optional[str] = None) -> None:
    path = Path(path)
    if format is None:
        format = "pose_csv" if path.suffix.lower() == ".csv" else "transforms_json"
    if format == "transforms_json":
        frames = []
        for v in traj.views:
            T = np.eye(4)
            T[:3, :3] = v.rotation
            T[:3, 3] = v.position
            fr = {"file_path": f"frame_{v.id:06d}", "transform_matrix": T.tolist()}
            if v.frame_time is not None:
                fr["time"] = v.frame_time
            frames.append(fr)
        path.write_text(json.dumps({"frames": frames}, indent=1), encoding="utf-8")
    elif format == "pose_csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(POSE_CSV_HEADER)
            for v in traj.views:
                q = matrix_to_quat(v.rotation)
                w.writerow([v.id, *(repr(float(x)) for x in v.position), *(repr(float(x)) for x in q)])
    else:
        raise ValueError(f"unknown pose format {format!r}")


def load_features(path) -> dict:
    """Load a frame-id -> unit feature vector table (JSON or VSFT binary)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from exc
    if raw[:4] == FEATURE_MAGIC:
        table = _parse_feature_binary(raw, str(path))
    elif not raw.strip():
        return {}
    else:
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: not a JSON feature table or VSFT file: {exc}") from exc
        if not isinstance(doc, dict):
            raise ParseError(f"{path}: feature JSON must be an object mapping frame id to vector")
        table = {}
        for key, vec in doc.items():
            try:
                table[int(key)] = np.asarray(vec, dtype=np.float64).reshape(-1)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: frame {key}: {exc}") from exc
    return _normalize_table(table, str(path))


def _parse_feature_binary(raw: bytes, source: str) -> dict:
    if len(raw) < 12:
        raise ParseError(f"{source}: truncated VSFT header")
    count, dim = struct.unpack_from("<II", raw, 4)
    expected = 12 + 4 * count * dim
    if len(raw) != expected:
        raise ParseError(f"{source}: VSFT payload is {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(count, dim).astype(np.float64)
    return {i: data[i] for i in range(count)}


def _normalize_table(table: Mapping[int, np.ndarray], source: str) -> dict:
    out = {}
    dim = None
    for key in sorted(table):
        vec = table[key]
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise ValidationError(
                f"{source}: frame {key} has feature dimension {vec.shape[0]}, expected {dim}"
            )
        norm = np.linalg.norm(vec)
        if norm == 0.0 or not np.isfinite(norm):
            raise ValidationError(f"{source}: frame {key} has a zero or non-finite feature vector")
        out[key] = vec / norm
    return out


def save_features(table: Mapping[int, np.ndarray], path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        ids = sorted(table)
        if ids != list(range(len(ids))):
            raise ValueError("VSFT files need contiguous ids from 0")
        dim = len(table[ids[0]]) if ids else 0
        data = np.array([table[i] for i in ids], dtype="<f4").reshape(len(ids), dim)
        path.write_bytes(FEATURE_MAGIC + struct.pack("<II", len(ids), dim) + data.tobytes())
    else:
        doc = {str(k): [float(x) for x in table[k]] for k in sorted(table)}
        path.write_text(json.dumps(doc), encoding="utf-8")


def attach_features(traj: Trajectory, table: Mapping[int, np.ndarray]) -> Trajectory:
    """Return a copy of ``traj`` carrying features; the table must cover every
    view id (an empty table leaves the trajectory unchanged)."""
    if not table:
        return traj
    missing = [v.id for v in traj.views if v.id not in table]
    if missing:
        shown = ", ".join(map(str, missing[:5]))
        raise ValidationError(f"feature table lacks {len(missing)} frame(s), e.g. {shown}")
    views = tuple(
        CameraView(v.id, v.position, v.rotation, table[v.id], v.frame_time) for v in traj.views
    )
    return Trajectory(views, traj.source_path)


def normalize_positions(traj: Trajectory, half_extent: float = SCENE_HALF_EXTENT) -> Trajectory:
    """Center the position AABB at the origin and scale it uniformly so its
    longest side spans [-half_extent, half_extent]."""
    pos = traj.positions
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    extent = float((hi - lo).max())
    scale = 2.0 * half_extent / extent if extent > 0.0 else math.inf
    if not math.isfinite(scale):
        new_pos = np.zeros_like(pos)
    else:
        center = (lo + hi) / 2.0
        new_pos = (pos - center) * scale
        np.clip(new_pos, -half_extent, half_extent, out=new_pos)
    views = tuple(
        CameraView(v.id, new_pos[v.id], v.rotation, v.feature, v.frame_time) for v in traj.views
    )
    return Trajectory(views, traj.source_path)


def synthetic_trajectory(n: int, seed: int = 0, feature_dim: Optional[int] = None) -> Trajectory:
    """Smooth looping walk through a box-shaped room with cameras yawing
    around the up axis and small pitch jitter; used for demos and tests."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    speed = 1.0 + 0.8 * np.sin(6 * np.pi * t + rng.uniform(0, 2 * np.pi))
    s = np.cumsum(speed)
    s = 2 * np.pi * s / s[-1]
    pos = np.stack([
        4.0 * np.cos(s) + 0.8 * np.cos(3 * s),
        1.5 + 0.1 * np.sin(5 * s),
        2.5 * np.sin(s) + 0.5 * np.sin(2 * s),
    ], axis=1)
    pos += rng.normal(scale=0.02, size=pos.shape)
    yaw = s * 3.0 + 0.3 * np.sin(7 * s)
    pitch = 0.15 * np.sin(4 * s) + rng.normal(scale=0.01, size=n)
    rots = np.empty((n, 3, 3))
    for i in range(n):
        cy, sy, cp, sp = math.cos(yaw[i]), math.sin(yaw[i]), math.cos(pitch[i]), math.sin(pitch[i])
        Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        Rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
        rots[i] = Ry @ Rx
    feats = None
    if feature_dim:
        basis = rng.normal(size=(8, feature_dim))
        phase = np.stack([np.cos(k * s + k) for k in range(1, 9)], axis=1)
        feats = phase @ basis + 0.1 * rng.normal(size=(n, feature_dim))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return Trajectory.from_arrays(pos, rots, feats, source_path=f"synthetic:{n}:{seed}")


def random_trajectory(rng: np.random.Generator, n: int, feature_dim: Optional[int] = 8) -> Trajectory:
    """Positions uniform in [-4, 4]^3, rotations uniform on SO(3), features
    uniform on the unit sphere."""
    pos = rng.uniform(-SCENE_HALF_EXTENT, SCENE_HALF_EXTENT, size=(n, 3))
    quats = rng.normal(size=(n, 4))
    rots = np.stack([quat_to_matrix(q) for q in quats])
    feats = None
    if feature_dim:
        feats = rng.normal(size=(n, feature_dim))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return Trajectory.from_arrays(pos, rots, feats, source_path="random")

