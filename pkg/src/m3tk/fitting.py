"""Sequence-level refinement of pose parameters against 2D keypoints.

The loss combines confidence-weighted keypoint reprojection, vertex
acceleration smoothing, and a pull toward the per-frame initialization
(weights default to 1.0 / 0.5 / 0.01). Cameras are orthographic and
per-sequence constant. Body, hand, and global parameters are refined;
identity and face parameters stay frozen at their initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bodymodel import BodyModel, PoseParams, lbs_forward
from .errors import FormatError, NumericError, UsageError
from . import numcore as nc
from .numcore import AdamState, Tensor, adam_step, as_tensor, zero_grads

REFINED_FIELDS = ("theta_body", "theta_left", "theta_right",
                  "global_rotation", "global_translation")


@dataclass(frozen=True)
class OrthographicCamera:
    """(x, y) -> scale * (x, y) + (u0, v0); z is dropped."""

    scale: float = 1.0
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise UsageError(f"camera scale must be finite and positive, got {self.scale}")


def project_orthographic(points3d, camera: OrthographicCamera) -> Tensor:
    pts = as_tensor(points3d)
    if pts.ndim == 1 and pts.shape == (3,):
        xy = pts[0:2]
    elif pts.ndim == 2 and pts.shape[1] == 3:
        xy = pts[:, 0:2]
    else:
        raise UsageError(f"points must be (3,) or (K, 3), got shape {pts.shape}")
    return xy * camera.scale + Tensor(np.asarray(camera.offset))


@dataclass
class FitProblem:
    """A clip to refine: tracker initialization, targets, camera, weights."""

    model: BodyModel
    init_params: list[PoseParams]
    keypoints_2d: np.ndarray        # (T, K, 2)
    confidences: np.ndarray         # (T, K) in [0, 1]
    camera: OrthographicCamera = field(default_factory=OrthographicCamera)
    lambda_kp: float = 1.0
    lambda_acc: float = 0.5
    lambda_reg: float = 0.01

    def __post_init__(self):
        self.keypoints_2d = np.asarray(self.keypoints_2d, np.float64)
        self.confidences = np.asarray(self.confidences, np.float64)
        t = len(self.init_params)
        if t < 2:
            raise UsageError("need at least 2 frames (acceleration term)")
        if self.keypoints_2d.shape[:1] != (t,) or self.keypoints_2d.ndim != 3 \
                or self.keypoints_2d.shape[2] != 2:
            raise UsageError(
                f"keypoints must be (T, K, 2) with T={t}, got {self.keypoints_2d.shape}")
        if self.confidences.shape != self.keypoints_2d.shape[:2]:
            raise UsageError("confidences must be (T, K)")
        if np.any(self.confidences < 0) or np.any(self.confidences > 1):
            raise UsageError("confidences must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return len(self.init_params)

    @property
    def n_points(self) -> int:
        return self.keypoints_2d.shape[1]


def fit_loss(problem: FitProblem, params: Sequence[PoseParams]) -> Tensor:
    """Weighted sum of reprojection, acceleration, and init-deviation terms."""
    params = list(params)
    if len(params) != problem.n_frames:
        raise UsageError(
            f"params cover {len(params)} frames, problem has {problem.n_frames}")
    if problem.n_points != problem.model.n_joints:
        raise UsageError(
            f"keypoint count {problem.n_points} != model joints {problem.model.n_joints}")

    t_frames = problem.n_frames
    vertex_frames = []
    kp_terms = []
    for t, frame in enumerate(params):
        vertices, joints = lbs_forward(problem.model, frame)
        vertex_frames.append(vertices)
        projected = project_orthographic(joints, problem.camera)
        residual = nc.square(projected - Tensor(problem.keypoints_2d[t]))
        point_sq = nc.tsum(residual, axis=1)          # squared 2D distance per point
        weighted = point_sq * Tensor(problem.confidences[t])
        kp_terms.append(nc.tsum(weighted))
    kp_loss = nc.scale(_total(kp_terms), 1.0 / (t_frames * problem.n_points))

    if t_frames >= 3:
        acc_terms = []
        for t in range(1, t_frames - 1):
            acc = vertex_frames[t + 1] - nc.scale(vertex_frames[t], 2.0) \
                + vertex_frames[t - 1]
            acc_terms.append(nc.tsum(nc.square(acc)))
        count = (t_frames - 2) * problem.model.n_vertices * 3
        acc_loss = nc.scale(_total(acc_terms), 1.0 / count)
    else:
        acc_loss = Tensor(0.0)

    reg_terms = []
    reg_count = 0
    for frame, init in zip(params, problem.init_params):
        for name in REFINED_FIELDS:
            diff = as_tensor(getattr(frame, name)) - Tensor(
                np.asarray(as_tensor(getattr(init, name)).data))
            reg_terms.append(nc.tsum(nc.square(diff)))
            reg_count += as_tensor(getattr(init, name)).size
    reg_loss = nc.scale(_total(reg_terms), 1.0 / reg_count)

    return nc.scale(kp_loss, problem.lambda_kp) \
        + nc.scale(acc_loss, problem.lambda_acc) \
        + nc.scale(reg_loss, problem.lambda_reg)


def _total(terms: list[Tensor]) -> Tensor:
    out = terms[0]
    for term in terms[1:]:
        out = out + term
    return out


@dataclass
class RefineResult:
    params: list[PoseParams]
    loss_trace: list[float]

    @property
    def initial_loss(self) -> float:
        return self.loss_trace[0]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def refine_sequence(problem: FitProblem, steps: int, lr: float = 0.01) -> RefineResult:
    """Adam descent on fit_loss from the initialization.

    Returns the best-visited parameters, so the trace endpoint (the loss of
    the returned parameters) never exceeds the initial loss. Raises
    NumericError naming the step index if the loss goes non-finite.
    """
    if steps < 1:
        raise UsageError(f"steps must be >= 1, got {steps}")

    frames: list[PoseParams] = []
    trainable: list[Tensor] = []
    for init in problem.init_params:
        init = init.copy_numpy()
        fields = {}
        for name in ("beta", "psi_face"):
            fields[name] = getattr(init, name)
        for name in REFINED_FIELDS:
            tensor = Tensor(np.array(getattr(init, name)), requires_grad=True)
            fields[name] = tensor
            trainable.append(tensor)
        frames.append(PoseParams(**fields))

    state = AdamState(lr=lr)
    trace: list[float] = []
    best_loss = np.inf
    best_snapshot = None
    for step in range(steps):
        zero_grads(trainable)
        loss = fit_loss(problem, frames)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite fit loss at step {step}")
        trace.append(value)
        if value < best_loss:
            best_loss = value
            best_snapshot = [p.data.copy() for p in trainable]
        loss.backward()
        adam_step(trainable, state)

    final = fit_loss(problem, frames).item()
    if not np.isfinite(final):
        raise NumericError(f"non-finite fit loss at step {steps}")
    if final < best_loss:
        best_loss = final
        best_snapshot = [p.data.copy() for p in trainable]
    for tensor, snapshot in zip(trainable, best_snapshot):
        tensor.data = snapshot
    trace.append(best_loss)

    refined = [frame.copy_numpy() for frame in frames]
    return RefineResult(params=refined, loss_trace=trace)


# ---------------------------------------------------------------------------
# keypoint file format


def save_keypoints(path, keypoints: np.ndarray, confidences: np.ndarray) -> None:
    keypoints = np.asarray(keypoints, np.float64)
    confidences = np.asarray(confidences, np.float64)
    t, k = confidences.shape
    lines = [f"m3tk-keypoints v1 frames={t} points={k}"]
    for ft in range(t):
        row = []
        for pt in range(k):
            row.extend((repr(float(keypoints[ft, pt, 0])),
                        repr(float(keypoints[ft, pt, 1])),
                        repr(float(confidences[ft, pt]))))
        lines.append(" ".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_keypoints(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError("empty keypoint file")
    head = lines[0].split()
    if head[:2] != ["m3tk-keypoints", "v1"]:
        raise FormatError("not a m3tk-keypoints v1 file")
    meta = dict(part.split("=", 1) for part in head[2:] if "=" in part)
    try:
        t, k = int(meta["frames"]), int(meta["points"])
    except (KeyError, ValueError) as exc:
        raise FormatError("keypoint header must carry frames= and points=") from exc
    if len(lines) - 1 != t:
        raise FormatError(f"expected {t} frame lines, found {len(lines) - 1}")
    keypoints = np.zeros((t, k, 2))
    confidences = np.zeros((t, k))
    for ft, line in enumerate(lines[1:]):
        values = line.split()
        if len(values) != 3 * k:
            raise FormatError(f"frame {ft}: expected {3 * k} values, got {len(values)}")
        try:
            numbers = [float(v) for v in values]
        except ValueError as exc:
            raise FormatError(f"frame {ft}: non-numeric value") from exc
        triples = np.asarray(numbers).reshape(k, 3)
        keypoints[ft] = triples[:, :2]
        confidences[ft] = triples[:, 2]
    return keypoints, confidences


# ---------------------------------------------------------------------------
# pose parameter sequence files


_FRAME_LAYOUT = (("theta_body", (10, 6)), ("theta_left", (15, 6)),
                 ("theta_right", (15, 6)), ("psi_face", (108,)),
                 ("global_rotation", (6,)), ("global_translation", (3,)))
_FRAME_WIDTH = sum(int(np.prod(s)) for _, s in _FRAME_LAYOUT)


def save_params_sequence(path, params: Sequence[PoseParams]) -> None:
    """Text format: header, one beta line, then one 357-value frame line
    (body 60, left 90, right 90, face 108, global rotation 6, translation 3)."""
    params = [p.copy_numpy() for p in params]
    if not params:
        raise UsageError("cannot save an empty parameter sequence")
    beta = np.asarray(params[0].beta)
    lines = [f"m3tk-params v1 frames={len(params)} shape_dim={beta.size}"]
    lines.append(" ".join(repr(float(v)) for v in beta))
    for frame in params:
        flat = []
        for name, shape in _FRAME_LAYOUT:
            flat.extend(np.asarray(getattr(frame, name)).reshape(-1))
        lines.append(" ".join(repr(float(v)) for v in flat))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params_sequence(path) -> list[PoseParams]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError("empty parameter file")
    head = lines[0].split()
    if head[:2] != ["m3tk-params", "v1"]:
        raise FormatError("not a m3tk-params v1 file")
    meta = dict(part.split("=", 1) for part in head[2:] if "=" in part)
    try:
        frames = int(meta["frames"])
        shape_dim = int(meta["shape_dim"])
    except (KeyError, ValueError) as exc:
        raise FormatError("parameter header needs frames= and shape_dim=") from exc
    if len(lines) != frames + 2:
        raise FormatError(f"expected {frames + 2} lines, found {len(lines)}")
    beta_values = lines[1].split()
    if len(beta_values) != shape_dim:
        raise FormatError(f"beta line must carry {shape_dim} values")
    try:
        beta = np.asarray([float(v) for v in beta_values])
    except ValueError as exc:
        raise FormatError("non-numeric beta value") from exc
    out: list[PoseParams] = []
    for t, line in enumerate(lines[2:]):
        values = line.split()
        if len(values) != _FRAME_WIDTH:
            raise FormatError(
                f"frame {t}: expected {_FRAME_WIDTH} values, got {len(values)}")
        try:
            flat = np.asarray([float(v) for v in values])
        except ValueError as exc:
            raise FormatError(f"frame {t}: non-numeric value") from exc
        fields = {"beta": beta.copy()}
        cursor = 0
        for name, shape in _FRAME_LAYOUT:
            width = int(np.prod(shape))
            fields[name] = flat[cursor:cursor + width].reshape(shape)
            cursor += width
        out.append(PoseParams(**fields))
    return out
