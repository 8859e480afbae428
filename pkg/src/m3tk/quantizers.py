"""FSQ and baseline VQ quantization of latent frames, plus token analytics.

FSQ bounds each latent dimension with (L/2)*tanh and rounds it straight
through to one of L fixed levels; the per-dimension digits pack into a
single integer over the implicit product codebook. Even level counts use
the half-unit offset convention (shift by 1/2 before rounding, shift back
after) so exactly L levels occur and the preset codebook sizes come out to
100 / 180 / 216.

The VQ baseline keeps a learned codebook with nearest-neighbour lookup,
straight-through gradients, and the usual codebook/commitment losses; it
exists so the collapse phenomenon can be reproduced against FSQ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, UsageError
from .numcore import Tensor, as_tensor, stop_gradient, straight_through, square, sub, tanh, tsum

MODALITIES = ("body", "left_hand", "right_hand", "face")

# level presets giving the paper-scale codebook sizes 100 / 180 / 216
PRESET_LEVELS = {
    "body": (5, 5, 4),
    "hand": (6, 6, 5),
    "face": (6, 6, 6),
}


@dataclass(frozen=True)
class LevelSpec:
    """Per-dimension level counts of the implicit FSQ codebook."""

    levels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if len(self.levels) == 0 or any(v < 2 for v in self.levels):
            raise UsageError(f"levels must all be >= 2, got {self.levels}")

    @property
    def dim(self) -> int:
        return len(self.levels)

    @property
    def codebook_size(self) -> int:
        return math.prod(self.levels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=np.float64)


def _offsets(spec: LevelSpec) -> np.ndarray:
    # half-unit shift for even level counts; odd counts round plainly
    return np.where(np.asarray(spec.levels) % 2 == 0, 0.5, 0.0)


def _round_levels(bounded: np.ndarray, spec: LevelSpec) -> np.ndarray:
    off = _offsets(spec)
    rounded = np.round(bounded - off) + off
    # tanh saturating to exactly 1.0 can round one level past the grid edge
    top = (np.asarray(spec.levels) - 1) / 2.0
    return np.clip(rounded, -top, top)


def fsq_bound(z, spec: LevelSpec) -> Tensor:
    """Smooth bound (L/2)*tanh(z) applied per dimension (graph-aware)."""
    z = as_tensor(z)
    half = spec.as_array() / 2.0
    if z.shape[-1] != spec.dim:
        raise UsageError(f"latent dim {z.shape[-1]} != spec dim {spec.dim}")
    return tanh(z) * Tensor(half)


def fsq_quantize(z, spec: LevelSpec) -> tuple[Tensor, np.ndarray]:
    """Quantize one latent frame (or a stack of frames, last axis = dim).

    Returns the rounded bounded values with a straight-through gradient
    (backward is the identity on the smooth bound, so d/dz of the output
    equals d/dz of (L/2)*tanh(z)) and the integer digits in [0, L_i).
    """
    bounded = fsq_bound(z, spec)
    quantized = straight_through(bounded, lambda b: _round_levels(b, spec))
    digits = quantized.data + np.floor(np.asarray(spec.levels) / 2.0) - _offsets(spec)
    digits = np.rint(digits).astype(np.int64)
    return quantized, digits


def fsq_latent(digits: np.ndarray, spec: LevelSpec) -> np.ndarray:
    """Map digits back to the centered latent values rescaled to [-1, 1).

    This is the representation the decoders consume; it is the fixed point
    of re-quantization (feeding these values through fsq_quantize returns
    the same digits).
    """
    digits = np.asarray(digits)
    if digits.shape[-1] != spec.dim:
        raise UsageError(f"digit dim {digits.shape[-1]} != spec dim {spec.dim}")
    levels = np.asarray(spec.levels)
    if np.any(digits < 0) or np.any(digits >= levels):
        raise DataError("digit out of range for level spec")
    centered = digits - np.floor(levels / 2.0) + _offsets(spec)
    return centered * (2.0 / levels)


def fsq_scale(spec: LevelSpec) -> np.ndarray:
    """Per-dimension factor 2/L that renormalizes rounded values to [-1, 1)."""
    return 2.0 / spec.as_array()


def digits_to_index(digits: Sequence[int], spec: LevelSpec) -> int:
    """Mixed-radix packing: index = sum_i digit_i * prod_{j<i} L_j."""
    digits = list(digits)
    if len(digits) != spec.dim:
        raise UsageError(f"expected {spec.dim} digits, got {len(digits)}")
    index = 0
    base = 1
    for d, level in zip(digits, spec.levels):
        d = int(d)
        if not (0 <= d < level):
            raise UsageError(f"digit {d} out of range [0, {level})")
        index += d * base
        base *= level
    return index


def index_to_digits(index: int, spec: LevelSpec) -> tuple[int, ...]:
    index = int(index)
    if not (0 <= index < spec.codebook_size):
        raise UsageError(f"index {index} out of range [0, {spec.codebook_size})")
    digits = []
    for level in spec.levels:
        digits.append(index % level)
        index //= level
    return tuple(digits)


# ---------------------------------------------------------------------------
# VQ baseline


@dataclass
class Codebook:
    """Learned VQ codebook; ``entries`` participates in the gradient graph."""

    entries: Tensor
    usage_counts: np.ndarray = None

    def __post_init__(self):
        self.entries = as_tensor(self.entries)
        if self.entries.ndim != 2 or self.entries.shape[0] < 1:
            raise UsageError(f"codebook entries must be K x d, got {self.entries.shape}")
        if not np.all(np.isfinite(self.entries.data)):
            raise UsageError("codebook entries must be finite")
        if self.usage_counts is None:
            self.usage_counts = np.zeros(self.entries.shape[0], dtype=np.int64)
        self.usage_counts = np.asarray(self.usage_counts, dtype=np.int64)
        if self.usage_counts.shape != (self.entries.shape[0],):
            raise UsageError("usage_counts length must match codebook size")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    @staticmethod
    def random(size: int, dim: int, rng: np.random.Generator) -> "Codebook":
        init = rng.uniform(-1.0 / size, 1.0 / size, size=(size, dim))
        return Codebook(Tensor(init, requires_grad=True))


def vq_nearest(z_values: np.ndarray, cb: Codebook) -> int:
    """Nearest entry by L2; equidistant ties break to the lowest index."""
    diff = cb.entries.data - z_values[None, :]
    return int(np.argmin(np.einsum("kd,kd->k", diff, diff)))


def vq_quantize(z, cb: Codebook, count_usage: bool = True) -> tuple[Tensor, int]:
    """Replace one latent frame with its nearest codebook entry.

    The returned tensor equals the selected entry in the forward pass while
    gradients pass straight through to ``z``; the entry itself trains only
    through vq_losses. Usage counting mutates the codebook, so concurrent
    callers must serialize or merge counts.
    """
    z = as_tensor(z)
    if cb.size < 1:
        raise UsageError("empty codebook")
    if z.shape != (cb.dim,):
        raise UsageError(f"latent shape {z.shape} != codebook dim ({cb.dim},)")
    index = vq_nearest(z.data, cb)
    if count_usage:
        cb.usage_counts[index] += 1
    entry_values = cb.entries.data[index]
    quantized = straight_through(z, lambda _: entry_values.copy())
    return quantized, index


def vq_losses(z, entry) -> tuple[Tensor, Tensor]:
    """(codebook_loss, commitment_loss) = (||sg(z)-e||^2, ||z-sg(e)||^2)."""
    z, entry = as_tensor(z), as_tensor(entry)
    if z.shape != entry.shape:
        raise UsageError(f"shape mismatch {z.shape} vs {entry.shape}")
    codebook_loss = tsum(square(sub(entry, stop_gradient(z))))
    commitment_loss = tsum(square(sub(z, stop_gradient(entry))))
    return codebook_loss, commitment_loss


# ---------------------------------------------------------------------------
# token streams and analytics


@dataclass
class TokenStream:
    """Discrete code indices for one modality plus its language tag."""

    modality: str
    language: str
    indices: list[int]
    includes_eos: bool = False

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise UsageError(f"unknown modality '{self.modality}'")
        self.indices = [int(i) for i in self.indices]
        if any(i < 0 for i in self.indices):
            raise DataError("token indices must be nonnegative")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class UtilizationReport:
    """Coverage and frequency statistics of an observed token population."""

    used_fraction: float
    frequency_histogram: np.ndarray
    frequency_sd: float

    @property
    def total_tokens(self) -> int:
        return int(self.frequency_histogram.sum())


def utilization(streams: Iterable, codebook_size: int) -> UtilizationReport:
    """Histogram token indices from streams (or raw index sequences).

    used_fraction counts codes that appear at least once; frequency_sd is
    the population standard deviation of the per-code counts.
    """
    if codebook_size < 1:
        raise UsageError("codebook size must be positive")
    hist = np.zeros(codebook_size, dtype=np.int64)
    for stream in streams:
        indices = getattr(stream, "indices", stream)
        indices = np.asarray(list(indices), dtype=np.int64)
        if indices.size == 0:
            continue
        if indices.min() < 0 or indices.max() >= codebook_size:
            raise DataError(
                f"token index outside [0, {codebook_size}): "
                f"min {indices.min()}, max {indices.max()}")
        hist += np.bincount(indices, minlength=codebook_size)
    used = float(np.count_nonzero(hist)) / codebook_size
    sd = float(np.std(hist))
    return UtilizationReport(used_fraction=used, frequency_histogram=hist,
                             frequency_sd=sd)
