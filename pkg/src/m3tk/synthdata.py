"""Bundled synthetic fixtures: toy body model and motion generators.

Real capture corpora are out of scope, so every experiment in the test
suite runs on data from here: a 12-vertex / 4-joint body model, sinusoidal
parameter trajectories per modality, and a low-rank PCA-coefficient face
generator (Gaussian mixture over a compact latent) that recreates the
regime where VQ codebooks collapse.
"""

from __future__ import annotations

import numpy as np

from .bodymodel import (
    IDENTITY_6D,
    N_BODY_JOINT_PARAMS,
    N_HAND_JOINT_PARAMS,
    PSI_DIM,
    BodyModel,
    PoseParams,
    matrix_to_rot6d_np,
)

MODALITY_DIMS = {"body": 60, "left_hand": 90, "right_hand": 90, "face": 108}


def toy_body_model() -> BodyModel:
    """Deterministic 12-vertex, 4-joint model: root, two body joints, jaw.

    Vertex pairs straddle each joint so the regressor recovers joint
    locations exactly; vertices 8/9 form the neck ring and 10/11 are teeth
    attached to the jaw.
    """
    template = np.array([
        [-0.25, 0.0, 0.0], [0.25, 0.0, 0.0],      # root pair
        [-0.25, 1.0, 0.0], [0.25, 1.0, 0.0],      # spine pair (body:0)
        [0.75, 1.0, 0.0], [1.25, 1.0, 0.0],       # arm pair (body:1)
        [-0.25, 2.0, 0.0], [0.25, 2.0, 0.0],      # face pair (jaw)
        [-0.15, 1.6, 0.0], [0.15, 1.7, 0.0],      # neck ring
        [-0.1, 1.9, 0.1], [0.1, 1.9, 0.1],        # teeth
    ])
    n_v, n_j = 12, 4

    shape_dirs = np.zeros((n_v, 3, 3))
    shape_dirs[0:6, 0, 0] = 0.1           # dim 0 widens the body along x
    shape_dirs[2:6, 1, 1] = 0.1           # dim 1 stretches the torso
    shape_dirs[0:2, 2, 2] = 0.05          # dim 2 pushes the hips in z

    expr_dirs = np.zeros((n_v, 3, 4))
    expr_dirs[6:8, 1, 0] = 0.05           # raise the face pair
    expr_dirs[6, 0, 1] = 0.04
    expr_dirs[7, 0, 2] = -0.04
    expr_dirs[6:8, 2, 3] = 0.03

    eyelid_dirs = np.zeros((n_v, 3, 2))
    eyelid_dirs[6, 1, 0] = -0.02
    eyelid_dirs[7, 1, 1] = -0.02

    pose_dirs = np.zeros((n_v, 3, 9 * (n_j - 1)))
    # mild corrective on the arm pair driven by body:1's rotation entries
    pose_dirs[4, 0, 9] = 0.02
    pose_dirs[5, 2, 13] = 0.02

    joint_regressor = np.zeros((n_j, n_v))
    for joint, (a, b) in enumerate(((0, 1), (2, 3), (4, 5), (6, 7))):
        joint_regressor[joint, a] = 0.5
        joint_regressor[joint, b] = 0.5

    blend_weights = np.zeros((n_v, n_j))
    blend_weights[0:2, 0] = 1.0
    blend_weights[2:4, 1] = 1.0
    blend_weights[4:6, 2] = 1.0
    blend_weights[6:8, 3] = 1.0
    blend_weights[8] = (0.0, 0.6, 0.0, 0.4)
    blend_weights[9] = (0.0, 0.3, 0.0, 0.7)
    blend_weights[10:12, 3] = 1.0

    return BodyModel(
        template=template,
        shape_dirs=shape_dirs,
        pose_dirs=pose_dirs,
        expr_dirs=expr_dirs,
        eyelid_dirs=eyelid_dirs,
        joint_regressor=joint_regressor,
        blend_weights=blend_weights,
        parents=np.array([-1, 0, 1, 1]),
        neck_ring_indices=np.array([8, 9]),
        neck_ring_ratios=np.array([0.9, 0.1]),
        teeth_vertices=np.array([10, 11]),
        teeth_joints=np.array([3, 3]),
        joint_roles=(("root",), ("body", 0), ("body", 1), ("jaw",)),
    )


# ---------------------------------------------------------------------------
# rotations and poses


def random_rotation_matrix(rng: np.random.Generator) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-np.pi, np.pi)
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def random_rotation_6d(rng: np.random.Generator) -> np.ndarray:
    return matrix_to_rot6d_np(random_rotation_matrix(rng))


def random_pose(rng: np.random.Generator, shape_dim: int,
                spread: float = 0.4) -> PoseParams:
    """A valid random pose: proper 6D rows, bounded shape/expression."""
    def rot_block(rows):
        return np.stack([random_rotation_6d(rng) for _ in range(rows)])

    psi = rng.uniform(-spread, spread, PSI_DIM)
    psi[102:108] = random_rotation_6d(rng)
    return PoseParams(
        beta=rng.uniform(-spread, spread, shape_dim),
        theta_body=rot_block(N_BODY_JOINT_PARAMS),
        theta_left=rot_block(N_HAND_JOINT_PARAMS),
        theta_right=rot_block(N_HAND_JOINT_PARAMS),
        psi_face=psi,
        global_rotation=random_rotation_6d(rng),
        global_translation=rng.uniform(-spread, spread, 3),
    )


def perturb_pose(params: PoseParams, rng: np.random.Generator,
                 sigma: float = 0.05) -> PoseParams:
    """Additive noise on the refinable blocks (simulates tracker error)."""
    params = params.copy_numpy()
    return PoseParams(
        beta=params.beta,
        theta_body=params.theta_body + rng.normal(0, sigma, (N_BODY_JOINT_PARAMS, 6)),
        theta_left=params.theta_left + rng.normal(0, sigma, (N_HAND_JOINT_PARAMS, 6)),
        theta_right=params.theta_right + rng.normal(0, sigma, (N_HAND_JOINT_PARAMS, 6)),
        psi_face=params.psi_face,
        global_rotation=params.global_rotation + rng.normal(0, sigma, 6),
        global_translation=params.global_translation + rng.normal(0, sigma, 3),
    )


def rest_pose_sequence(model: BodyModel, n_frames: int,
                       rng: np.random.Generator | None = None,
                       wiggle: float = 0.0) -> list[PoseParams]:
    """Identity poses, optionally with small smooth rotations on body:0."""
    frames = []
    for t in range(n_frames):
        pose = PoseParams.rest(model.shape_dim)
        if wiggle:
            angle = wiggle * np.sin(2 * np.pi * t / max(n_frames, 1))
            rot = np.array([[np.cos(angle), -np.sin(angle), 0],
                            [np.sin(angle), np.cos(angle), 0],
                            [0, 0, 1.0]])
            theta = np.tile(IDENTITY_6D, (N_BODY_JOINT_PARAMS, 1))
            theta[0] = matrix_to_rot6d_np(rot)
            pose = PoseParams(
                beta=pose.beta, theta_body=theta, theta_left=pose.theta_left,
                theta_right=pose.theta_right, psi_face=pose.psi_face)
        frames.append(pose)
    return frames


# ---------------------------------------------------------------------------
# motion generators


class SinusoidGenerator:
    """Smooth motion from a few shared sinusoidal sources.

    A fixed mixing basis spreads ``rank`` per-sequence sine sources across
    all dimensions, so the dataset lives near a low-dimensional manifold
    the way correlated pose parameters do; per-sequence frequency, phase,
    and amplitude draws provide the variation.
    """

    def __init__(self, seed: int, dim: int, rank: int = 3):
        rng = np.random.default_rng(seed)
        basis = rng.normal(size=(dim, rank))
        basis /= np.linalg.norm(basis, axis=0, keepdims=True)
        self.basis = basis * np.sqrt(dim / rank) * 0.35
        self.dim = dim
        self.rank = rank

    def sequence(self, rng: np.random.Generator, n_frames: int) -> np.ndarray:
        t = np.arange(n_frames)[:, None] / max(n_frames, 1)
        freqs = rng.integers(1, 4, size=(1, self.rank))
        phases = rng.uniform(0, 2 * np.pi, size=(1, self.rank))
        amps = rng.uniform(0.4, 1.0, size=(1, self.rank))
        sources = amps * np.sin(2 * np.pi * freqs * t + phases)
        return sources @ self.basis.T


def sinusoid_motion(rng: np.random.Generator, n_frames: int, dim: int,
                    rank: int = 3) -> np.ndarray:
    """One smooth low-rank trajectory (fresh mixing basis per call)."""
    return SinusoidGenerator(int(rng.integers(2**31)), dim, rank).sequence(rng, n_frames)


def sinusoid_dataset(seed: int, n_sequences: int, n_frames: int,
                     dim: int, rank: int = 3) -> list[np.ndarray]:
    """Sequences sharing one mixing basis (dataset-level structure)."""
    rng = np.random.default_rng(seed)
    generator = SinusoidGenerator(seed, dim, rank)
    return [generator.sequence(rng, n_frames) for _ in range(n_sequences)]


class KeyframeMotionGenerator:
    """Motions that ease between keyframes drawn from a finite pose
    inventory, one keyframe per token window.

    Mirrors the quasi-discrete structure of signing (a vocabulary of holds
    connected by smooth transitions): every window realizes one of
    n_poses^2 transition prototypes plus small jitter, a family a
    desk-scale tokenizer can learn to near-zero error.
    """

    def __init__(self, seed: int, dim: int, n_poses: int = 8,
                 window: int = 4, jitter: float = 0.01):
        rng = np.random.default_rng(seed)
        self.poses = rng.uniform(-0.8, 0.8, size=(n_poses, dim))
        self.dim = dim
        self.window = window
        self.jitter = jitter

    def sequence(self, rng: np.random.Generator, n_frames: int) -> np.ndarray:
        w = self.window
        if n_frames % w:
            raise ValueError(f"n_frames must be a multiple of {w}")
        n_windows = n_frames // w
        keys = self.poses[rng.integers(len(self.poses), size=n_windows + 1)]
        t = (np.arange(w) / w)[:, None]
        ease = 3 * t**2 - 2 * t**3
        parts = [keys[i] * (1 - ease) + keys[i + 1] * ease for i in range(n_windows)]
        out = np.concatenate(parts, axis=0)
        if self.jitter:
            out = out + rng.normal(0, self.jitter, out.shape)
        return out

    def dataset(self, seed: int, n_sequences: int, n_frames: int) -> list[np.ndarray]:
        rng = np.random.default_rng(seed)
        return [self.sequence(rng, n_frames) for _ in range(n_sequences)]


class FacePcaGenerator:
    """Expressive-face coefficients: a Gaussian mixture over a low-rank
    latent, traced smoothly through time.

    Mimics the structure of PCA expression spaces: all variance lives in a
    handful of directions, and distinct mixture components stand in for
    expression clusters (mouthings, brow raises).
    """

    def __init__(self, seed: int, dim: int = 108, rank: int = 6,
                 n_components: int = 32, scale: float = 0.8,
                 center_spread: float = 1.6):
        rng = np.random.default_rng(seed)
        basis = rng.normal(size=(dim, rank))
        basis, _ = np.linalg.qr(basis)
        self.basis = basis * scale
        self.centers = rng.normal(0, center_spread, size=(n_components, rank))
        self.dim = dim
        self.rank = rank
        self.n_components = n_components

    def sequence(self, rng: np.random.Generator, n_frames: int) -> np.ndarray:
        start = self.centers[rng.integers(self.n_components)]
        end = self.centers[rng.integers(self.n_components)]
        start = start + rng.normal(0, 0.3, self.rank)
        end = end + rng.normal(0, 0.3, self.rank)
        t = np.linspace(0.0, 1.0, n_frames)[:, None]
        ease = 3 * t**2 - 2 * t**3
        latent = start[None] * (1 - ease) + end[None] * ease
        jitter_f = rng.integers(1, 3)
        jitter = 0.15 * np.sin(2 * np.pi * jitter_f * t + rng.uniform(0, 2 * np.pi))
        latent = latent + jitter * rng.normal(0, 1, (1, self.rank))
        return latent @ self.basis.T

    def dataset(self, seed: int, n_sequences: int, n_frames: int) -> list[np.ndarray]:
        rng = np.random.default_rng(seed)
        return [self.sequence(rng, n_frames) for _ in range(n_sequences)]
