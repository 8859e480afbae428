"""Modality-specific convolutional encoder/decoder pairs with a discrete
bottleneck (FSQ by default, learned-codebook VQ as the baseline).

Encoders stack dilated 1D residual blocks with two stride-2 downsampling
stages (window w = 4); decoders mirror them with nearest-neighbour
upsampling in place of strides. Training minimizes parameter-space
reconstruction error with Adam under an optional warmup-cosine schedule.

Left-hand sequences are mirrored into right-hand space before encoding and
un-mirrored after decoding, so one hand model serves both sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bodymodel import mirror_hand_pose
from .errors import DataError, FormatError, NumericError, UsageError
from . import numcore as nc
from .numcore import AdamState, CosineSchedule, Tensor, adam_step, cosine_lr, zero_grads
from .quantizers import (
    Codebook,
    LevelSpec,
    PRESET_LEVELS,
    TokenStream,
    digits_to_index,
    fsq_latent,
    fsq_quantize,
    fsq_scale,
    index_to_digits,
)

# flattened per-frame dims (10x6 body, 15x6 per hand, 108 face)
MODALITY_DIMS = {"body": 60, "left_hand": 90, "right_hand": 90, "face": 108}
VAE_MODALITIES = ("body", "hand", "face")
VAE_INPUT_DIMS = {"body": 60, "hand": 90, "face": 108}


def vae_modality_for(stream_modality: str) -> str:
    if stream_modality in ("left_hand", "right_hand"):
        return "hand"
    if stream_modality in ("body", "face"):
        return stream_modality
    raise UsageError(f"unknown modality '{stream_modality}'")


@dataclass
class MotionSequence:
    """Per-modality time series of flattened pose/expression parameters."""

    modality: str
    fps: float
    frames: np.ndarray      # (T, D_m)

    def __post_init__(self):
        if self.modality not in MODALITY_DIMS:
            raise UsageError(f"unknown modality '{self.modality}'")
        self.frames = np.asarray(self.frames, np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != MODALITY_DIMS[self.modality]:
            raise UsageError(
                f"{self.modality} frames must be (T, {MODALITY_DIMS[self.modality]}), "
                f"got {self.frames.shape}")
        if self.fps <= 0:
            raise UsageError(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class VaeConfig:
    modality: str           # body / hand / face
    input_dim: int
    width: int = 64
    n_res_blocks: int = 2
    dilation_growth: int = 3
    downsample_stages: int = 2
    latent_dim: int = 3
    activation: str = "softplus"
    latent_gain: float = 2.0

    def __post_init__(self):
        if self.modality not in VAE_MODALITIES:
            raise UsageError(f"vae modality must be one of {VAE_MODALITIES}")
        if self.activation not in ("softplus", "tanh"):
            raise UsageError(f"activation must be softplus or tanh, got {self.activation}")
        if self.latent_gain <= 0:
            raise UsageError("latent_gain must be positive")
        if self.input_dim != VAE_INPUT_DIMS[self.modality]:
            raise UsageError(
                f"{self.modality} input_dim must be {VAE_INPUT_DIMS[self.modality]}")
        for name in ("width", "n_res_blocks", "dilation_growth",
                     "downsample_stages", "latent_dim"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")

    @property
    def window(self) -> int:
        """Temporal downsampling factor w = 2^downsample_stages."""
        return 2 ** self.downsample_stages

    @staticmethod
    def desk(modality: str, **overrides) -> "VaeConfig":
        return VaeConfig(modality=modality, input_dim=VAE_INPUT_DIMS[modality],
                         **overrides)

    @staticmethod
    def paper(modality: str) -> "VaeConfig":
        return VaeConfig(modality=modality, input_dim=VAE_INPUT_DIMS[modality],
                         width=1024, n_res_blocks=6)


# ---------------------------------------------------------------------------
# layers


_ACTIVATIONS = {"tanh": nc.tanh, "softplus": nc.softplus}


class Conv1dLayer:
    def __init__(self, rng, c_in: int, c_out: int, kernel: int,
                 stride: int = 1, dilation: int = 1):
        bound = 1.0 / np.sqrt(c_in * kernel)
        self.weight = Tensor(rng.uniform(-bound, bound, (c_out, c_in, kernel)),
                             requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, c_out), requires_grad=True)
        self.stride = stride
        self.dilation = dilation
        self.c_out = c_out

    def __call__(self, x: Tensor) -> Tensor:
        y = nc.conv1d(x, self.weight, stride=self.stride, dilation=self.dilation)
        return y + nc.reshape(self.bias, (self.c_out, 1))

    def params(self, prefix: str):
        return [(f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias)]


class ResidualBlock:
    def __init__(self, rng, channels: int, dilation: int, activation=nc.tanh):
        self.conv_dilated = Conv1dLayer(rng, channels, channels, 3, dilation=dilation)
        self.conv_mix = Conv1dLayer(rng, channels, channels, 1)
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv_dilated(self.activation(x))
        h = self.conv_mix(self.activation(h))
        return x + h

    def params(self, prefix: str):
        return (self.conv_dilated.params(f"{prefix}.dilated")
                + self.conv_mix.params(f"{prefix}.mix"))


class Encoder:
    def __init__(self, rng, config: VaeConfig):
        act = _ACTIVATIONS[config.activation]
        self.conv_in = Conv1dLayer(rng, config.input_dim, config.width, 3)
        self.stages = []
        for _ in range(config.downsample_stages):
            down = Conv1dLayer(rng, config.width, config.width, 3, stride=2)
            blocks = [ResidualBlock(rng, config.width, config.dilation_growth ** i, act)
                      for i in range(config.n_res_blocks)]
            self.stages.append((down, blocks))
        self.conv_out = Conv1dLayer(rng, config.width, config.latent_dim, 3)
        # spread initial latents over the quantizer grid
        self.conv_out.weight.data *= config.latent_gain
        self.conv_out.bias.data *= config.latent_gain

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv_in(x)
        for down, blocks in self.stages:
            h = down(h)
            for block in blocks:
                h = block(h)
        return self.conv_out(h)

    def params(self, prefix: str = "encoder"):
        out = self.conv_in.params(f"{prefix}.conv_in")
        for s, (down, blocks) in enumerate(self.stages):
            out += down.params(f"{prefix}.stage{s}.down")
            for b, block in enumerate(blocks):
                out += block.params(f"{prefix}.stage{s}.block{b}")
        return out + self.conv_out.params(f"{prefix}.conv_out")


class Decoder:
    def __init__(self, rng, config: VaeConfig):
        act = _ACTIVATIONS[config.activation]
        self.conv_in = Conv1dLayer(rng, config.latent_dim, config.width, 3)
        self.stages = []
        for _ in range(config.downsample_stages):
            blocks = [ResidualBlock(rng, config.width, config.dilation_growth ** i, act)
                      for i in reversed(range(config.n_res_blocks))]
            up_conv = Conv1dLayer(rng, config.width, config.width, 3)
            self.stages.append((blocks, up_conv))
        self.conv_out = Conv1dLayer(rng, config.width, config.input_dim, 3)

    def __call__(self, z: Tensor) -> Tensor:
        h = self.conv_in(z)
        for blocks, up_conv in self.stages:
            for block in blocks:
                h = block(h)
            h = up_conv(nc.upsample_nearest(h, 2))
        return self.conv_out(h)

    def params(self, prefix: str = "decoder"):
        out = self.conv_in.params(f"{prefix}.conv_in")
        for s, (blocks, up_conv) in enumerate(self.stages):
            for b, block in enumerate(blocks):
                out += block.params(f"{prefix}.stage{s}.block{b}")
            out += up_conv.params(f"{prefix}.stage{s}.up")
        return out + self.conv_out.params(f"{prefix}.conv_out")


# ---------------------------------------------------------------------------
# the VAE


class MotionVae:
    """Encoder + discrete bottleneck + decoder for one modality.

    ``quantizer`` is a LevelSpec (FSQ, no learned state) or a Codebook
    (VQ baseline with commitment weight ``vq_beta``).
    """

    def __init__(self, config: VaeConfig, quantizer, seed: int = 0,
                 vq_beta: float = 0.25):
        rng = np.random.default_rng(seed)
        self.config = config
        self.encoder = Encoder(rng, config)
        self.decoder = Decoder(rng, config)
        self.quantizer = quantizer
        self.vq_beta = float(vq_beta)
        if isinstance(quantizer, LevelSpec):
            if quantizer.dim != config.latent_dim:
                raise UsageError(
                    f"FSQ spec dim {quantizer.dim} != latent_dim {config.latent_dim}")
        elif isinstance(quantizer, Codebook):
            if quantizer.dim != config.latent_dim:
                raise UsageError(
                    f"codebook dim {quantizer.dim} != latent_dim {config.latent_dim}")
        else:
            raise UsageError("quantizer must be a LevelSpec or a Codebook")

    @property
    def is_fsq(self) -> bool:
        return isinstance(self.quantizer, LevelSpec)

    @property
    def window(self) -> int:
        return self.config.window

    @property
    def codebook_size(self) -> int:
        return self.quantizer.codebook_size if self.is_fsq else self.quantizer.size

    def named_params(self):
        out = self.encoder.params() + self.decoder.params()
        if not self.is_fsq:
            out.append(("quantizer.entries", self.quantizer.entries))
        return out

    def parameters(self):
        return [p for _, p in self.named_params()]

    # -- forward pieces ----------------------------------------------------

    def _prepare(self, x: MotionSequence, pad: bool) -> np.ndarray:
        if x.frames.shape[1] != self.config.input_dim:
            raise UsageError(
                f"sequence dim {x.frames.shape[1]} != vae input {self.config.input_dim}")
        if vae_modality_for(x.modality) != self.config.modality:
            raise UsageError(
                f"{self.config.modality} vae cannot encode a {x.modality} sequence")
        frames = x.frames
        if x.modality == "left_hand":
            frames = _mirror_frames(frames)
        t = frames.shape[0]
        w = self.window
        if t < w:
            raise UsageError(f"need at least {w} frames, got {t}")
        if t % w:
            if pad:
                extra = w - t % w
                frames = np.concatenate([frames, np.repeat(frames[-1:], extra, 0)])
            else:
                frames = frames[:(t // w) * w]
        return frames

    def _encode_tensor(self, frames: Tensor) -> Tensor:
        return self.encoder(frames)

    def encode(self, x: MotionSequence, pad: bool = False) -> np.ndarray:
        """Latent sequence (T/w, latent_dim); deterministic and pure.

        Sequences whose length is not a multiple of w are truncated to
        floor(T/w)*w frames (or right-padded by edge replication when
        ``pad`` is set).
        """
        frames = self._prepare(x, pad)
        z = self._encode_tensor(Tensor(frames.T))
        return z.data.T.copy()

    def quantize_latent(self, z: Tensor, hard: bool = True):
        """Bottleneck on (d, T') latents -> (decoder input, indices).

        ``hard=False`` swaps rounding for the smooth bound (the oracle form
        used by gradient checks). VQ ignores ``hard``.
        """
        if self.is_fsq:
            spec = self.quantizer
            zt = nc.transpose(z)               # (T', d)
            if hard:
                quantized, digits = fsq_quantize(zt, spec)
                indices = [digits_to_index(d, spec) for d in digits]
            else:
                from .quantizers import fsq_bound
                quantized = fsq_bound(zt, spec)
                indices = []
            normalized = quantized * Tensor(fsq_scale(spec))
            return nc.transpose(normalized), indices
        return self._vq_bottleneck(z)

    def _vq_bottleneck(self, z: Tensor):
        cb = self.quantizer
        zt = nc.transpose(z)                   # (T', d)
        diff = zt.data[:, None, :] - cb.entries.data[None, :, :]
        dist = np.einsum("tkd,tkd->tk", diff, diff)
        indices = np.argmin(dist, axis=1)
        cb.usage_counts += np.bincount(indices, minlength=cb.size)
        selected = cb.entries.data[indices]
        # forward: selected entry; backward: straight through to z
        quantized = zt + Tensor(selected - zt.data)
        self._last_vq = (zt, indices)
        return nc.transpose(quantized), [int(i) for i in indices]

    def vq_aux_losses(self) -> tuple[Tensor, Tensor]:
        """Codebook and commitment losses for the latest VQ bottleneck."""
        if self.is_fsq:
            raise UsageError("aux losses only exist for the VQ baseline")
        zt, indices = self._last_vq
        selected = nc.getitem(self.quantizer.entries, indices)
        codebook_loss = nc.tmean(nc.square(selected - Tensor(zt.data)))
        commitment = nc.tmean(nc.square(zt - Tensor(selected.data)))
        return codebook_loss, commitment

    def reconstruct_tensor(self, frames: Tensor, hard: bool = True) -> Tensor:
        """(D, T) -> (D, T) through encoder, bottleneck, decoder."""
        z = self._encode_tensor(frames)
        dec_in, _ = self.quantize_latent(z, hard=hard)
        return self.decoder(dec_in)

    # -- public pipeline ----------------------------------------------------

    def tokenize(self, x: MotionSequence, language: str = "UNK",
                 pad: bool = False) -> TokenStream:
        frames = self._prepare(x, pad)
        z = self._encode_tensor(Tensor(frames.T))
        _, indices = self.quantize_latent(z, hard=True)
        return TokenStream(modality=x.modality, language=language,
                           indices=indices, includes_eos=False)

    def detokenize(self, stream: TokenStream, fps: float = 25.0) -> MotionSequence:
        if vae_modality_for(stream.modality) != self.config.modality:
            raise UsageError(
                f"{self.config.modality} vae cannot decode a {stream.modality} stream")
        if not stream.indices:
            raise UsageError("cannot detokenize an empty stream")
        if self.is_fsq:
            spec = self.quantizer
            for i in stream.indices:
                if not (0 <= i < spec.codebook_size):
                    raise DataError(f"token index {i} outside [0, {spec.codebook_size})")
            digits = np.array([index_to_digits(i, spec) for i in stream.indices])
            latent = fsq_latent(digits, spec)
        else:
            cb = self.quantizer
            for i in stream.indices:
                if not (0 <= i < cb.size):
                    raise DataError(f"token index {i} outside [0, {cb.size})")
            latent = cb.entries.data[np.asarray(stream.indices)]
        decoded = self.decoder(Tensor(latent.T)).data.T
        if stream.modality == "left_hand":
            decoded = _mirror_frames(decoded)
        return MotionSequence(modality=stream.modality, fps=fps,
                              frames=decoded.copy())


def _mirror_frames(frames: np.ndarray) -> np.ndarray:
    t = frames.shape[0]
    rows = frames.reshape(t * 15, 6)
    return mirror_hand_pose(rows).reshape(t, -1)


# ---------------------------------------------------------------------------
# training


def reconstruction_loss(vae: MotionVae, batch: np.ndarray,
                        hard: bool = True) -> Tensor:
    """Mean squared reconstruction error over a (B, T, D) batch."""
    x = Tensor(np.transpose(batch, (0, 2, 1)))      # (B, D, T)
    z = vae.encoder(x)
    if vae.is_fsq:
        spec = vae.quantizer
        b, d, tw = z.shape
        flat = nc.reshape(nc.transpose(z, (0, 2, 1)), (b * tw, d))
        if hard:
            quantized, _ = fsq_quantize(flat, spec)
        else:
            from .quantizers import fsq_bound
            quantized = fsq_bound(flat, spec)
        normalized = quantized * Tensor(fsq_scale(spec))
        dec_in = nc.transpose(nc.reshape(normalized, (b, tw, d)), (0, 2, 1))
        recon = vae.decoder(dec_in)
        return nc.tmean(nc.square(recon - x))
    # VQ path: nearest entries with straight-through, plus aux losses
    cb = vae.quantizer
    b, d, tw = z.shape
    flat = nc.reshape(nc.transpose(z, (0, 2, 1)), (b * tw, d))
    diff = flat.data[:, None, :] - cb.entries.data[None, :, :]
    dist = np.einsum("tkd,tkd->tk", diff, diff)
    indices = np.argmin(dist, axis=1)
    cb.usage_counts += np.bincount(indices, minlength=cb.size)
    selected_const = cb.entries.data[indices]
    quantized = flat + Tensor(selected_const - flat.data)
    dec_in = nc.transpose(nc.reshape(quantized, (b, tw, d)), (0, 2, 1))
    recon = vae.decoder(dec_in)
    recon_loss = nc.tmean(nc.square(recon - x))
    selected = nc.getitem(cb.entries, indices)
    codebook_loss = nc.tmean(nc.square(selected - Tensor(flat.data)))
    commitment = nc.tmean(nc.square(flat - Tensor(selected_const)))
    return recon_loss + codebook_loss + nc.scale(commitment, vae.vq_beta)


def evaluate_reconstruction(vae: MotionVae, dataset: Sequence[np.ndarray]) -> float:
    """Mean per-sequence reconstruction MSE (inference only, no updates)."""
    total = 0.0
    for frames in dataset:
        frames = _truncate(np.asarray(frames, np.float64), vae.window)
        x = Tensor(frames.T)
        recon = vae.reconstruct_tensor(x)
        total += float(np.mean((recon.data - x.data) ** 2))
    return total / len(dataset)


def _truncate(frames: np.ndarray, w: int) -> np.ndarray:
    t = frames.shape[0]
    if t < w:
        raise UsageError(f"sequence shorter than window {w}")
    return frames[:(t // w) * w]


def train(vae: MotionVae, dataset: Sequence[np.ndarray], epochs: int,
          schedule: CosineSchedule | None = None, lr: float = 1e-3,
          batch_size: int = 16, seed: int = 0,
          val_dataset: Sequence[np.ndarray] | None = None) -> list[float]:
    """Adam training on mean squared reconstruction; returns the per-epoch
    mean loss trace. With a validation set, the parameters revert to the
    epoch with the lowest validation reconstruction at the end."""
    if epochs < 0:
        raise UsageError("epochs must be >= 0")
    if not dataset:
        raise UsageError("dataset is empty")
    dims = {frames.shape[1] for frames in dataset}
    if dims != {vae.config.input_dim}:
        raise UsageError(f"dataset dims {dims} != vae input {vae.config.input_dim}")
    if epochs == 0:
        return []
    if schedule is not None and schedule.total_epochs < epochs:
        raise UsageError("schedule is shorter than the training run")

    data = [_truncate(np.asarray(f, np.float64), vae.window) for f in dataset]
    rng = np.random.default_rng(seed)
    params = vae.parameters()
    state = AdamState(lr=lr)
    trace: list[float] = []
    best_val = np.inf
    best_snapshot = None

    for epoch in range(epochs):
        if schedule is not None:
            # warmup starts the ramp at 0; floor it so epoch 0 still moves
            state.lr = max(cosine_lr(schedule, epoch), schedule.min_lr)
        order = rng.permutation(len(data))
        epoch_losses = []
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            # batch together sequences of equal length
            by_len: dict[int, list[int]] = {}
            for i in chunk:
                by_len.setdefault(data[i].shape[0], []).append(i)
            for indices in by_len.values():
                batch = np.stack([data[i] for i in indices])
                zero_grads(params)
                loss = reconstruction_loss(vae, batch)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(f"non-finite training loss at epoch {epoch}")
                loss.backward()
                adam_step(params, state)
                epoch_losses.append((value, len(indices)))
        total = sum(v * n for v, n in epoch_losses)
        count = sum(n for _, n in epoch_losses)
        trace.append(total / count)
        if val_dataset is not None:
            val = evaluate_reconstruction(vae, val_dataset)
            if val < best_val:
                best_val = val
                best_snapshot = [p.data.copy() for p in params]

    if best_snapshot is not None:
        for p, snap in zip(params, best_snapshot):
            p.data = snap
    return trace


# ---------------------------------------------------------------------------
# presets and checkpoints


def make_vae(modality: str, quantizer_kind: str = "fsq", scale: str = "desk",
             seed: int = 0, vq_beta: float = 0.25, **overrides) -> MotionVae:
    """Build a VAE with the preset level counts (body 5,5,4 / hand 6,6,5 /
    face 6,6,6); the VQ baseline gets a codebook of the matching size."""
    if scale == "desk":
        config = VaeConfig.desk(modality, **overrides)
    elif scale == "paper":
        config = VaeConfig.paper(modality)
    else:
        raise UsageError(f"scale must be desk or paper, got '{scale}'")
    levels = LevelSpec(PRESET_LEVELS[modality])
    if quantizer_kind == "fsq":
        quantizer = levels
    elif quantizer_kind == "vq":
        rng = np.random.default_rng(seed + 1)
        quantizer = Codebook.random(levels.codebook_size, config.latent_dim, rng)
    else:
        raise UsageError(f"quantizer must be fsq or vq, got '{quantizer_kind}'")
    return MotionVae(config, quantizer, seed=seed, vq_beta=vq_beta)


def save_checkpoint(path, vae: MotionVae) -> None:
    c = vae.config
    lines = ["m3tk-vae v1"]
    for name in ("modality", "input_dim", "width", "n_res_blocks",
                 "dilation_growth", "downsample_stages", "latent_dim",
                 "activation", "latent_gain"):
        lines.append(f"{name} {getattr(c, name)!r}" if name == "latent_gain"
                     else f"{name} {getattr(c, name)}")
    if vae.is_fsq:
        lines.append("quantizer fsq " + " ".join(str(v) for v in vae.quantizer.levels))
    else:
        lines.append(f"quantizer vq {vae.quantizer.size} {vae.quantizer.dim} "
                     f"{repr(vae.vq_beta)}")
    named = vae.named_params()
    lines.append(f"params {len(named)}")
    for name, tensor in named:
        shape = tensor.shape
        lines.append(f"param {name} {len(shape)} " + " ".join(str(s) for s in shape))
        flat = tensor.data.reshape(-1)
        for i in range(0, flat.size, 6):
            lines.append(" ".join(repr(float(v)) for v in flat[i:i + 6]))
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> MotionVae:
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(context):
        nonlocal pos
        if pos >= len(tokens):
            raise FormatError(f"unexpected end of checkpoint while reading {context}")
        tok = tokens[pos]
        pos += 1
        return tok

    def take_int(context):
        tok = take(context)
        try:
            return int(tok)
        except ValueError as exc:
            raise FormatError(f"expected integer for {context}, got '{tok}'") from exc

    if take("header") != "m3tk-vae" or take("header") != "v1":
        raise FormatError("not a m3tk-vae v1 checkpoint")
    fields = {}
    for name in ("modality", "input_dim", "width", "n_res_blocks",
                 "dilation_growth", "downsample_stages", "latent_dim",
                 "activation", "latent_gain"):
        key = take("config field")
        if key != name:
            raise FormatError(f"expected config field '{name}', found '{key}'")
        fields[name] = take(name)
    try:
        gain = float(fields["latent_gain"])
    except ValueError as exc:
        raise FormatError("bad latent_gain") from exc
    config = VaeConfig(
        modality=fields["modality"],
        input_dim=int(fields["input_dim"]),
        width=int(fields["width"]),
        n_res_blocks=int(fields["n_res_blocks"]),
        dilation_growth=int(fields["dilation_growth"]),
        downsample_stages=int(fields["downsample_stages"]),
        latent_dim=int(fields["latent_dim"]),
        activation=fields["activation"],
        latent_gain=gain,
    )
    if take("quantizer") != "quantizer":
        raise FormatError("expected 'quantizer' section")
    kind = take("quantizer kind")
    vq_beta = 0.25
    if kind == "fsq":
        levels = tuple(take_int("fsq level") for _ in range(config.latent_dim))
        quantizer = LevelSpec(levels)
    elif kind == "vq":
        size = take_int("vq size")
        dim = take_int("vq dim")
        try:
            vq_beta = float(take("vq beta"))
        except ValueError as exc:
            raise FormatError("bad vq beta") from exc
        if dim != config.latent_dim:
            raise FormatError("vq codebook dim disagrees with latent_dim")
        quantizer = Codebook(Tensor(np.zeros((size, dim)), requires_grad=True))
    else:
        raise FormatError(f"unknown quantizer kind '{kind}'")

    vae = MotionVae(config, quantizer, seed=0, vq_beta=vq_beta)
    table = dict(vae.named_params())
    if take("params") != "params":
        raise FormatError("expected 'params' section")
    count = take_int("param count")
    if count != len(table):
        raise FormatError(
            f"checkpoint has {count} parameters, model expects {len(table)}")
    for _ in range(count):
        if take("param") != "param":
            raise FormatError("expected 'param' entry")
        name = take("param name")
        if name not in table:
            raise FormatError(f"unknown parameter '{name}'")
        ndim = take_int("param ndim")
        shape = tuple(take_int("param extent") for _ in range(ndim))
        if shape != table[name].shape:
            raise FormatError(
                f"parameter '{name}' has shape {shape}, expected {table[name].shape}")
        size = int(np.prod(shape)) if shape else 1
        values = np.empty(size)
        for i in range(size):
            tok = take("param data")
            try:
                values[i] = float(tok)
            except ValueError as exc:
                raise FormatError(f"bad float in parameter '{name}'") from exc
        table[name].data = values.reshape(shape)
    if take("end") != "end":
        raise FormatError("missing 'end' marker")
    return vae
