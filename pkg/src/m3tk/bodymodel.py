"""Parametric upper-body model: blendshapes, 6D-rotation kinematics, LBS.

The model couples a body-style skeleton with a rich face region: identity
and expression blendshapes plus eyelid offsets deform the rest mesh, joints
are regressed from the shaped mesh, and linear blend skinning poses the
vertices. Neck-ring vertices blend between body- and face-driven skinning,
and teeth vertices follow their attachment joint rigidly.

All forward ops run on numcore tensors, so fitting can differentiate
through the full kinematic chain. A model instance is immutable after
load; forward calls are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FormatError, ModelError, NumericError, UsageError
from . import numcore as nc
from .numcore import Tensor, as_tensor

# per-frame parameter block shapes (body 10x6, 15x6 per hand, face 108)
N_BODY_JOINT_PARAMS = 10
N_HAND_JOINT_PARAMS = 15
PSI_DIM = 108
EXPR_SLICE = slice(0, 100)
EYELID_SLICE = slice(100, 102)
JAW_SLICE = slice(102, 108)

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
_MIRROR = np.diag([-1.0, 1.0, 1.0])

_ROLE_KINDS = ("root", "body", "left_hand", "right_hand", "jaw", "fixed")


def default_joint_roles(n_joints: int) -> tuple[tuple, ...]:
    """Positional rule: root, 10 body, 15 left hand, 15 right hand, jaw.

    Models with fewer joints take a prefix of that layout (the 42-joint
    full layout consumes it exactly); extra joints beyond it are fixed.
    """
    roles: list[tuple] = [("root",)]
    for k in range(N_BODY_JOINT_PARAMS):
        roles.append(("body", k))
    for k in range(N_HAND_JOINT_PARAMS):
        roles.append(("left_hand", k))
    for k in range(N_HAND_JOINT_PARAMS):
        roles.append(("right_hand", k))
    roles.append(("jaw",))
    while len(roles) < n_joints:
        roles.append(("fixed",))
    return tuple(roles[:n_joints])


@dataclass(frozen=True)
class PoseParams:
    """One frame of signing-motion parameters.

    beta is the static identity vector (length = the model's shape basis);
    the pose blocks are fixed-size 6D-rotation stacks, and psi_face packs
    100 expression + 2 eyelid + 6 jaw values. Global orientation and
    translation are carried explicitly for fitting and error metrics.
    """

    beta: object
    theta_body: object
    theta_left: object
    theta_right: object
    psi_face: object
    global_rotation: object = field(default_factory=lambda: IDENTITY_6D.copy())
    global_translation: object = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        checks = (
            ("theta_body", self.theta_body, (N_BODY_JOINT_PARAMS, 6)),
            ("theta_left", self.theta_left, (N_HAND_JOINT_PARAMS, 6)),
            ("theta_right", self.theta_right, (N_HAND_JOINT_PARAMS, 6)),
            ("psi_face", self.psi_face, (PSI_DIM,)),
            ("global_rotation", self.global_rotation, (6,)),
            ("global_translation", self.global_translation, (3,)),
        )
        for name, value, shape in checks:
            got = as_tensor(value).shape
            if got != shape:
                raise UsageError(f"{name} must have shape {shape}, got {got}")

    @staticmethod
    def rest(shape_dim: int) -> "PoseParams":
        """All-identity pose with zero shape/expression."""
        return PoseParams(
            beta=np.zeros(shape_dim),
            theta_body=np.tile(IDENTITY_6D, (N_BODY_JOINT_PARAMS, 1)),
            theta_left=np.tile(IDENTITY_6D, (N_HAND_JOINT_PARAMS, 1)),
            theta_right=np.tile(IDENTITY_6D, (N_HAND_JOINT_PARAMS, 1)),
            psi_face=_rest_psi(),
        )

    def copy_numpy(self) -> "PoseParams":
        def take(v):
            return np.array(as_tensor(v).data)
        return PoseParams(*(take(getattr(self, f)) for f in (
            "beta", "theta_body", "theta_left", "theta_right", "psi_face",
            "global_rotation", "global_translation")))


def _rest_psi() -> np.ndarray:
    psi = np.zeros(PSI_DIM)
    psi[JAW_SLICE] = IDENTITY_6D
    return psi


# ---------------------------------------------------------------------------
# rotations


def rot6d_to_matrix(r) -> Tensor:
    """Gram-Schmidt a 6-vector into a rotation matrix (columns b1,b2,b1xb2)."""
    r = as_tensor(r)
    if r.shape != (6,):
        raise UsageError(f"rot6d input must have shape (6,), got {r.shape}")
    a1, a2 = r[0:3], r[3:6]
    n1 = float(np.linalg.norm(a1.data))
    if n1 <= 1e-9:
        raise NumericError("degenerate 6D rotation: first column near zero")
    b1 = a1 / nc.sqrt(nc.tsum(nc.square(a1)))
    proj = nc.tsum(b1 * a2)
    ortho = a2 - b1 * proj
    n2 = float(np.linalg.norm(ortho.data))
    if n2 <= 1e-9:
        raise NumericError("degenerate 6D rotation: columns parallel")
    b2 = ortho / nc.sqrt(nc.tsum(nc.square(ortho)))
    b3 = _cross(b1, b2)
    return nc.stack([b1, b2, b3], axis=1)


def _cross(u: Tensor, v: Tensor) -> Tensor:
    return nc.stack([
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ])


def rot6d_to_matrix_np(r: np.ndarray) -> np.ndarray:
    """Vectorized numpy twin of rot6d_to_matrix for non-differentiable paths."""
    r = np.asarray(r, dtype=np.float64)
    a1, a2 = r[..., 0:3], r[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 <= 1e-9):
        raise NumericError("degenerate 6D rotation: first column near zero")
    b1 = a1 / n1
    ortho = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(ortho, axis=-1, keepdims=True)
    if np.any(n2 <= 1e-9):
        raise NumericError("degenerate 6D rotation: columns parallel")
    b2 = ortho / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_rot6d_np(m: np.ndarray) -> np.ndarray:
    """First two columns, flattened — the inverse of rot6d on rotations."""
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def mirror_hand_pose(theta: np.ndarray) -> np.ndarray:
    """Reflect a hand pose across the sagittal plane: R -> M R M, M=diag(-1,1,1).

    An involution; rotations about the left-right axis are preserved while
    spins about the vertical and forward axes flip sign.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[1] != 6:
        raise UsageError(f"hand pose must be (n_joints, 6), got {theta.shape}")
    rot = rot6d_to_matrix_np(theta)
    mirrored = _MIRROR[None] @ rot @ _MIRROR[None]
    return matrix_to_rot6d_np(mirrored)


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class BodyModel:
    template: np.ndarray           # (N_v, 3)
    shape_dirs: np.ndarray         # (N_v, 3, S); dims 0..9 are body identity
    pose_dirs: np.ndarray          # (N_v, 3, 9*(N_j-1))
    expr_dirs: np.ndarray          # (N_v, 3, E), E <= 100
    eyelid_dirs: np.ndarray        # (N_v, 3, 2)
    joint_regressor: np.ndarray    # (N_j, N_v)
    blend_weights: np.ndarray      # (N_v, N_j), rows sum to 1
    parents: np.ndarray            # (N_j,), parents[0] == -1
    neck_ring_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    neck_ring_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))
    teeth_vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    teeth_joints: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    joint_roles: tuple = None

    def __post_init__(self):
        arrays = {
            "template": np.asarray(self.template, np.float64),
            "shape_dirs": np.asarray(self.shape_dirs, np.float64),
            "pose_dirs": np.asarray(self.pose_dirs, np.float64),
            "expr_dirs": np.asarray(self.expr_dirs, np.float64),
            "eyelid_dirs": np.asarray(self.eyelid_dirs, np.float64),
            "joint_regressor": np.asarray(self.joint_regressor, np.float64),
            "blend_weights": np.asarray(self.blend_weights, np.float64),
            "parents": np.asarray(self.parents, np.int64),
            "neck_ring_indices": np.asarray(self.neck_ring_indices, np.int64),
            "neck_ring_ratios": np.asarray(self.neck_ring_ratios, np.float64),
            "teeth_vertices": np.asarray(self.teeth_vertices, np.int64),
            "teeth_joints": np.asarray(self.teeth_joints, np.int64),
        }
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)
        if self.joint_roles is None:
            object.__setattr__(self, "joint_roles", default_joint_roles(self.n_joints))
        else:
            object.__setattr__(self, "joint_roles", tuple(tuple(r) for r in self.joint_roles))
        self._validate()
        # body-identity shape dims must not deform the face region
        body_dims = min(10, self.shape_dim)
        face_mask = self.face_vertex_mask()
        if body_dims and face_mask.any():
            masked = self.shape_dirs.copy()
            masked[face_mask, :, :body_dims] = 0.0
            object.__setattr__(self, "shape_dirs", masked)
        object.__setattr__(self, "_skin_weights", self._build_skin_weights())
        for name in ("template", "shape_dirs", "pose_dirs", "expr_dirs",
                     "eyelid_dirs", "joint_regressor", "blend_weights",
                     "_skin_weights"):
            getattr(self, name).setflags(write=False)

    # -- structure ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joint_regressor.shape[0]

    @property
    def shape_dim(self) -> int:
        return self.shape_dirs.shape[2]

    @property
    def expr_dim(self) -> int:
        return self.expr_dirs.shape[2]

    @property
    def pose_corrective_dim(self) -> int:
        return self.pose_dirs.shape[2]

    def face_joints(self) -> set[int]:
        """The jaw joint and every descendant."""
        jaws = {j for j, role in enumerate(self.joint_roles) if role[0] == "jaw"}
        out = set(jaws)
        changed = True
        while changed:
            changed = False
            for j in range(self.n_joints):
                if j not in out and int(self.parents[j]) in out:
                    out.add(j)
                    changed = True
        return out

    def face_vertex_mask(self) -> np.ndarray:
        """Vertices touched by expression or eyelid blendshapes."""
        mask = np.any(self.expr_dirs != 0.0, axis=(1, 2))
        mask |= np.any(self.eyelid_dirs != 0.0, axis=(1, 2))
        return mask

    def _validate(self) -> None:
        n_v, n_j = self.n_vertices, self.n_joints
        if self.template.shape != (n_v, 3):
            raise ModelError(f"template must be (N_v, 3), got {self.template.shape}")
        for name, arr, cols in (("shape_dirs", self.shape_dirs, None),
                                ("pose_dirs", self.pose_dirs, None),
                                ("expr_dirs", self.expr_dirs, None),
                                ("eyelid_dirs", self.eyelid_dirs, 2)):
            if arr.ndim != 3 or arr.shape[0] != n_v or arr.shape[1] != 3:
                raise ModelError(f"{name} must be (N_v, 3, K), got {arr.shape}")
            if cols is not None and arr.shape[2] != cols:
                raise ModelError(f"{name} must have {cols} basis columns")
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} contains non-finite values")
        if self.expr_dim > 100:
            raise ModelError(f"expr_dirs has {self.expr_dim} > 100 basis columns")
        if self.pose_corrective_dim != 9 * (n_j - 1):
            raise ModelError(
                f"pose_dirs must have 9*(N_j-1)={9 * (n_j - 1)} columns, "
                f"got {self.pose_corrective_dim}")
        if self.joint_regressor.shape != (n_j, n_v):
            raise ModelError("joint_regressor must be (N_j, N_v)")
        if not np.all(np.isfinite(self.joint_regressor)):
            raise ModelError("joint_regressor contains non-finite values")

        w = self.blend_weights
        if w.shape != (n_v, n_j):
            raise ModelError("blend_weights must be (N_v, N_j)")
        if np.any(w < -1e-12):
            raise ModelError("blend weights must be nonnegative")
        sums = w.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ModelError(
                f"blend weights row sum != 1 at vertex {bad} (sum={sums[bad]:.6g})")

        if self.parents.shape != (n_j,) or self.parents[0] != -1:
            raise ModelError("parents must be a tree rooted at joint 0 (parents[0] == -1)")
        for j in range(1, n_j):
            p = int(self.parents[j])
            if not (0 <= p < n_j):
                raise ModelError(f"parent of joint {j} out of range")
            seen = {j}
            while p != -1:
                if p in seen:
                    raise ModelError(f"parents contain a cycle through joint {j}")
                seen.add(p)
                p = int(self.parents[p])

        if len(self.joint_roles) != n_j:
            raise ModelError("joint_roles length must equal n_joints")
        for j, role in enumerate(self.joint_roles):
            kind = role[0]
            if kind not in _ROLE_KINDS:
                raise ModelError(f"unknown joint role '{kind}'")
            if kind == "body" and not (0 <= role[1] < N_BODY_JOINT_PARAMS):
                raise ModelError(f"body role index out of range at joint {j}")
            if kind in ("left_hand", "right_hand") and not (0 <= role[1] < N_HAND_JOINT_PARAMS):
                raise ModelError(f"hand role index out of range at joint {j}")
        if self.joint_roles[0] != ("root",):
            raise ModelError("joint 0 must carry the root role")

        ring_idx, ring_ratio = self.neck_ring_indices, self.neck_ring_ratios
        if ring_idx.shape != ring_ratio.shape:
            raise ModelError("neck ring indices/ratios length mismatch")
        if ring_idx.size:
            if np.any(ring_idx < 0) or np.any(ring_idx >= n_v):
                raise ModelError("neck ring vertex index out of range")
            if np.any(ring_ratio < 0.1 - 1e-12) or np.any(ring_ratio > 0.9 + 1e-12):
                raise ModelError("neck ring ratio outside [0.1, 0.9]")
            if not self.face_joints():
                raise ModelError("neck ring requires a jaw joint in the tree")
        if self.teeth_vertices.shape != self.teeth_joints.shape:
            raise ModelError("teeth vertex/joint list length mismatch")
        if self.teeth_vertices.size:
            if np.any(self.teeth_vertices < 0) or np.any(self.teeth_vertices >= n_v):
                raise ModelError("teeth vertex index out of range")
            if np.any(self.teeth_joints < 0) or np.any(self.teeth_joints >= n_j):
                raise ModelError("teeth attachment joint out of range")

    def _build_skin_weights(self) -> np.ndarray:
        """Effective LBS weights: neck rows blended, teeth rows one-hot."""
        w = self.blend_weights.copy()
        face = sorted(self.face_joints())
        body = [j for j in range(self.n_joints) if j not in face]
        for v, ratio in zip(self.neck_ring_indices, self.neck_ring_ratios):
            row = self.blend_weights[v]
            body_mass = row[body].sum()
            face_mass = row[face].sum() if face else 0.0
            if body_mass <= 0.0 or face_mass <= 0.0:
                raise ModelError(
                    f"neck ring vertex {v} needs weight on both body and face joints")
            blended = np.zeros_like(row)
            blended[body] = ratio * row[body] / body_mass
            blended[face] = (1.0 - ratio) * row[face] / face_mass
            w[v] = blended
        for v, j in zip(self.teeth_vertices, self.teeth_joints):
            w[v] = 0.0
            w[v, j] = 1.0
        return w

    def skinning_weights(self) -> np.ndarray:
        return self._skin_weights


# ---------------------------------------------------------------------------
# forward kinematics


def _check_params(model: BodyModel, params: PoseParams) -> None:
    beta = as_tensor(params.beta)
    if beta.shape != (model.shape_dim,):
        raise UsageError(
            f"beta length {beta.shape} does not match model shape basis "
            f"({model.shape_dim},)")


def _basis_term(dirs: np.ndarray, coeffs: Tensor) -> Tensor:
    n_v = dirs.shape[0]
    k = dirs.shape[2]
    flat = Tensor(dirs.reshape(n_v * 3, k))
    return nc.reshape(nc.matmul(flat, nc.reshape(coeffs, (k, 1))), (n_v, 3))


def _joint_rotations(model: BodyModel, params: PoseParams) -> list[Tensor]:
    theta_body = as_tensor(params.theta_body)
    theta_left = as_tensor(params.theta_left)
    theta_right = as_tensor(params.theta_right)
    psi = as_tensor(params.psi_face)
    identity = Tensor(np.eye(3))
    rotations = []
    for role in model.joint_roles:
        kind = role[0]
        if kind == "root":
            rotations.append(rot6d_to_matrix(as_tensor(params.global_rotation)))
        elif kind == "body":
            rotations.append(rot6d_to_matrix(theta_body[role[1]]))
        elif kind == "left_hand":
            rotations.append(rot6d_to_matrix(theta_left[role[1]]))
        elif kind == "right_hand":
            rotations.append(rot6d_to_matrix(theta_right[role[1]]))
        elif kind == "jaw":
            rotations.append(rot6d_to_matrix(psi[JAW_SLICE]))
        else:
            rotations.append(identity)
    return rotations


def _pose_feature(rotations: Sequence[Tensor]) -> Tensor:
    # vectorized (R - I) of the non-root joints, in joint order
    identity = Tensor(np.eye(3))
    parts = [nc.reshape(r - identity, (9,)) for r in rotations[1:]]
    return nc.concat(parts)


def _shaped_mesh(model: BodyModel, params: PoseParams) -> Tensor:
    """Template + identity + expression offsets (drives joint regression)."""
    psi = as_tensor(params.psi_face)
    mesh = Tensor(model.template) + _basis_term(model.shape_dirs, as_tensor(params.beta))
    if model.expr_dim:
        mesh = mesh + _basis_term(model.expr_dirs, psi[0:model.expr_dim])
    return mesh


def rest_pose_mesh(model: BodyModel, params: PoseParams,
                   rotations: Sequence[Tensor] | None = None) -> Tensor:
    """Unposed mesh: template plus shape, expression, eyelid and pose
    corrective offsets (face blendshapes applied first, then eyelids,
    then body shape; pose correctives from the non-root rotations)."""
    _check_params(model, params)
    psi = as_tensor(params.psi_face)
    mesh = Tensor(model.template)
    if model.expr_dim:
        mesh = mesh + _basis_term(model.expr_dirs, psi[0:model.expr_dim])
    mesh = mesh + _basis_term(model.eyelid_dirs, psi[EYELID_SLICE])
    mesh = mesh + _basis_term(model.shape_dirs, as_tensor(params.beta))
    if model.pose_corrective_dim:
        if rotations is None:
            rotations = _joint_rotations(model, params)
        mesh = mesh + _basis_term(model.pose_dirs, _pose_feature(rotations))
    return mesh


def lbs_forward(model: BodyModel, params: PoseParams) -> tuple[Tensor, Tensor]:
    """Pose the mesh; returns (vertices (N_v,3), joints (N_j,3)).

    Joints come from the regressor on the shaped mesh; per-joint world
    transforms compose along the kinematic tree; vertices follow the
    effective skinning weights (neck blend and rigid teeth included).
    """
    _check_params(model, params)
    rotations = _joint_rotations(model, params)
    rest = rest_pose_mesh(model, params, rotations=rotations)
    j_rest = nc.matmul(Tensor(model.joint_regressor), _shaped_mesh(model, params))

    world_rot: list[Tensor] = [None] * model.n_joints
    world_pos: list[Tensor] = [None] * model.n_joints
    order = _topological_joints(model.parents)
    for j in order:
        p = int(model.parents[j])
        if p == -1:
            world_rot[j] = rotations[j]
            world_pos[j] = j_rest[j] + as_tensor(params.global_translation)
        else:
            world_rot[j] = nc.matmul(world_rot[p], rotations[j])
            offset = j_rest[j] - j_rest[p]
            moved = nc.reshape(
                nc.matmul(world_rot[p], nc.reshape(offset, (3, 1))), (3,))
            world_pos[j] = moved + world_pos[p]

    joints = nc.stack(world_pos, axis=0)
    weights = model.skinning_weights()
    vertices = None
    for j in range(model.n_joints):
        col = weights[:, j]
        if not np.any(col):
            continue
        local = rest - j_rest[j]
        term = nc.matmul(local, nc.transpose(world_rot[j])) + world_pos[j]
        contrib = Tensor(col[:, None]) * term
        vertices = contrib if vertices is None else vertices + contrib
    return vertices, joints


def _topological_joints(parents: np.ndarray) -> list[int]:
    order: list[int] = []
    placed = set()
    pending = list(range(len(parents)))
    while pending:
        progressed = False
        rest = []
        for j in pending:
            p = int(parents[j])
            if p == -1 or p in placed:
                order.append(j)
                placed.add(j)
                progressed = True
            else:
                rest.append(j)
        pending = rest
        if not progressed and pending:
            raise ModelError("parents do not form a tree rooted at joint 0")
    return order


# ---------------------------------------------------------------------------
# model file format


_SCALAR_FIELDS = ("n_vertices", "n_joints", "shape_dims", "pose_dims", "expr_dims")


def save_body_model(path, model: BodyModel) -> None:
    lines = ["m3tk-body v1"]
    lines.append(f"n_vertices {model.n_vertices}")
    lines.append(f"n_joints {model.n_joints}")
    lines.append(f"shape_dims {model.shape_dim}")
    lines.append(f"pose_dims {model.pose_corrective_dim}")
    lines.append(f"expr_dims {model.expr_dim}")

    def emit(name, arr):
        arr = np.asarray(arr)
        lines.append(name + " " + " ".join(str(s) for s in arr.shape))
        flat = arr.reshape(-1)
        for i in range(0, flat.size, 6):
            lines.append(" ".join(repr(float(v)) for v in flat[i:i + 6]))

    emit("template", model.template)
    emit("shape_dirs", model.shape_dirs)
    emit("pose_dirs", model.pose_dirs)
    emit("expr_dirs", model.expr_dirs)
    emit("eyelid_dirs", model.eyelid_dirs)
    emit("joint_regressor", model.joint_regressor)
    emit("blend_weights", model.blend_weights)
    lines.append("parents " + str(model.n_joints))
    lines.append(" ".join(str(int(p)) for p in model.parents))
    lines.append("joint_roles " + str(model.n_joints))
    lines.append(" ".join(_role_token(r) for r in model.joint_roles))
    lines.append(f"neck_ring {model.neck_ring_indices.size}")
    for v, ratio in zip(model.neck_ring_indices, model.neck_ring_ratios):
        lines.append(f"{int(v)} {repr(float(ratio))}")
    lines.append(f"teeth {model.teeth_vertices.size}")
    for v, j in zip(model.teeth_vertices, model.teeth_joints):
        lines.append(f"{int(v)} {int(j)}")
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _role_token(role: tuple) -> str:
    return role[0] if len(role) == 1 else f"{role[0]}:{role[1]}"


def _parse_role(token: str) -> tuple:
    if ":" in token:
        kind, idx = token.split(":", 1)
        return (kind, int(idx))
    return (token,)


class _TokenReader:
    def __init__(self, text: str):
        self.tokens = text.split()
        self.pos = 0

    def take(self, context: str) -> str:
        if self.pos >= len(self.tokens):
            raise FormatError(f"unexpected end of file while reading {context}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def take_int(self, context: str) -> int:
        tok = self.take(context)
        try:
            return int(tok)
        except ValueError as exc:
            raise FormatError(f"expected integer for {context}, got '{tok}'") from exc

    def take_float(self, context: str) -> float:
        tok = self.take(context)
        try:
            return float(tok)
        except ValueError as exc:
            raise FormatError(f"expected number for {context}, got '{tok}'") from exc

    def take_array(self, context: str, ndim: int) -> np.ndarray:
        shape = tuple(self.take_int(f"{context} extent") for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 0
        out = np.empty(count)
        for i in range(count):
            out[i] = self.take_float(f"{context} data")
        return out.reshape(shape)


def load_body_model(path) -> BodyModel:
    """Parse and validate a body model file; raises FormatError on parse
    problems and ModelError naming the violated invariant."""
    with open(path) as fh:
        text = fh.read()
    rd = _TokenReader(text)
    if rd.take("header") != "m3tk-body" or rd.take("header") != "v1":
        raise FormatError("not a m3tk-body v1 file")

    scalars = {}
    for name in _SCALAR_FIELDS:
        key = rd.take("scalar field name")
        if key != name:
            raise FormatError(f"expected field '{name}', found '{key}'")
        scalars[name] = rd.take_int(name)

    fields = {}
    array_ndims = {
        "template": 2, "shape_dirs": 3, "pose_dirs": 3, "expr_dirs": 3,
        "eyelid_dirs": 3, "joint_regressor": 2, "blend_weights": 2,
    }
    for name, ndim in array_ndims.items():
        key = rd.take("array field name")
        if key != name:
            raise FormatError(f"expected field '{name}', found '{key}'")
        fields[name] = rd.take_array(name, ndim)

    if rd.take("parents") != "parents":
        raise FormatError("expected field 'parents'")
    n_parents = rd.take_int("parents count")
    parents = np.array([rd.take_int("parents data") for _ in range(n_parents)])

    roles = None
    ring_idx: list[int] = []
    ring_ratio: list[float] = []
    teeth_v: list[int] = []
    teeth_j: list[int] = []
    while True:
        key = rd.take("section name")
        if key == "end":
            break
        if key == "joint_roles":
            count = rd.take_int("joint_roles count")
            roles = tuple(_parse_role(rd.take("joint role")) for _ in range(count))
        elif key == "neck_ring":
            count = rd.take_int("neck_ring count")
            for _ in range(count):
                ring_idx.append(rd.take_int("neck_ring index"))
                ring_ratio.append(rd.take_float("neck_ring ratio"))
        elif key == "teeth":
            count = rd.take_int("teeth count")
            for _ in range(count):
                teeth_v.append(rd.take_int("teeth vertex"))
                teeth_j.append(rd.take_int("teeth joint"))
        else:
            raise FormatError(f"unknown section '{key}'")

    model = BodyModel(
        template=fields["template"],
        shape_dirs=fields["shape_dirs"],
        pose_dirs=fields["pose_dirs"],
        expr_dirs=fields["expr_dirs"],
        eyelid_dirs=fields["eyelid_dirs"],
        joint_regressor=fields["joint_regressor"],
        blend_weights=fields["blend_weights"],
        parents=parents,
        neck_ring_indices=np.asarray(ring_idx, np.int64),
        neck_ring_ratios=np.asarray(ring_ratio),
        teeth_vertices=np.asarray(teeth_v, np.int64),
        teeth_joints=np.asarray(teeth_j, np.int64),
        joint_roles=roles,
    )
    declared = (scalars["n_vertices"], scalars["n_joints"])
    if (model.n_vertices, model.n_joints) != declared:
        raise FormatError(
            f"declared sizes {declared} disagree with arrays "
            f"({model.n_vertices}, {model.n_joints})")
    if (scalars["shape_dims"], scalars["pose_dims"], scalars["expr_dims"]) != (
            model.shape_dim, model.pose_corrective_dim, model.expr_dim):
        raise FormatError("declared basis dims disagree with arrays")
    return model
