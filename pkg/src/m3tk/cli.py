"""Command-line surface: train / tokenize / detokenize / stats / fit /
eval / gen-fixtures over the toolkit's file formats.

Exit codes: 0 success, 2 usage or validation failure, 3 numeric failure.
Every subcommand that takes --seed is bitwise reproducible. The fixture
root defaults to $M3T_DATA_DIR (falling back to ./m3tk-data).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .errors import M3tkError, NumericError
from . import fitting, metrics, motionio, motionvae, synthdata, tokencodec
from .bodymodel import PoseParams, lbs_forward, load_body_model, save_body_model
from .motionvae import MotionSequence
from .numcore import CosineSchedule
from .quantizers import utilization

PRESETS = {f"{kind}-{mod}": (kind, mod)
           for kind in ("fsq", "vq") for mod in ("body", "hand", "face")}


def data_dir(override: str | None = None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("M3T_DATA_DIR", "m3tk-data"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m3tk", description="discrete multi-modal motion tokenization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a motion VAE on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="fsq-face")
    p.add_argument("--modality", choices=("body", "hand", "face"),
                   help="override the preset's modality")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--warmup-epochs", type=int, default=0,
                   help="enable the warmup-cosine schedule (paper: 25)")
    p.add_argument("--min-lr", type=float, default=1e-6)
    p.add_argument("--val-fraction", type=float, default=0.0,
                   help="tail fraction of the dataset held out for "
                        "best-checkpoint selection")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", help="per-epoch loss trace file")

    p = sub.add_parser("tokenize", help="motion file -> token document")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--language", default="UNK")

    p = sub.add_parser("detokenize", help="token document -> motion file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--fps", type=float, default=25.0)

    p = sub.add_parser("stats", help="codebook utilization of token documents")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("fit", help="refine a parameter sequence against keypoints")
    p.add_argument("--model", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--camera-scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")

    p = sub.add_parser("eval", help="geometric or text metric report")
    kind = p.add_subparsers(dest="kind", required=True)
    g = kind.add_parser("geometry", help="DTW joint/vertex errors")
    g.add_argument("--pred", required=True)
    g.add_argument("--gt", required=True)
    g.add_argument("--output", required=True)
    t = kind.add_parser("text", help="BLEU-4 / ROUGE-L on sentence files")
    t.add_argument("--hyp", required=True)
    t.add_argument("--ref", required=True)
    t.add_argument("--output", required=True)

    p = sub.add_parser("gen-fixtures", help="write the bundled synthetic fixtures")
    p.add_argument("--out", help="fixture root (default $M3T_DATA_DIR or ./m3tk-data)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequences", type=int, default=64)
    p.add_argument("--frames", type=int, default=16)

    parser.add_argument("--jobs", type=int, default=1,
                        help="reserved; current implementation is serial")
    return parser


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    kind, modality = PRESETS[args.preset]
    if args.modality:
        modality = args.modality
    sequences = motionio.read_dataset(args.data)
    expected = motionvae.VAE_INPUT_DIMS[modality]
    arrays = []
    for seq in sequences:
        if seq.frames.shape[1] != expected:
            raise M3tkError(
                f"dataset sequence dim {seq.frames.shape[1]} does not match "
                f"{modality} input dim {expected}")
        frames = seq.frames
        if seq.modality == "left_hand":
            frames = motionvae._mirror_frames(frames)
        arrays.append(frames)

    vae = motionvae.make_vae(modality, quantizer_kind=kind, scale=args.scale,
                             seed=args.seed)
    val = None
    if args.val_fraction > 0:
        held = max(1, int(len(arrays) * args.val_fraction))
        val = arrays[-held:]
        arrays = arrays[:-held]
    schedule = None
    if args.warmup_epochs > 0:
        schedule = CosineSchedule(base_lr=args.lr, min_lr=args.min_lr,
                                  warmup_epochs=args.warmup_epochs,
                                  total_epochs=max(args.epochs, args.warmup_epochs + 2))
    trace = motionvae.train(vae, arrays, epochs=args.epochs, schedule=schedule,
                            lr=args.lr, batch_size=args.batch_size,
                            seed=args.seed, val_dataset=val)
    motionvae.save_checkpoint(args.out, vae)
    if args.trace:
        with open(args.trace, "w") as fh:
            for epoch, value in enumerate(trace):
                fh.write(f"{epoch} {value!r}\n")
    print(f"trained {args.preset} for {len(trace)} epochs; "
          f"final loss {trace[-1]:.6g}" if trace else "no epochs requested")
    return 0


def cmd_tokenize(args) -> int:
    vae = motionvae.load_checkpoint(args.checkpoint)
    seq = motionio.read_motion(args.input)
    stream = vae.tokenize(seq, language=args.language)
    text = tokencodec.serialize_token_stream(stream, vae.codebook_size)
    with open(args.output, "w") as fh:
        fh.write(text)
    print(f"wrote {len(stream.indices)} tokens for modality {stream.modality}")
    return 0


def cmd_detokenize(args) -> int:
    vae = motionvae.load_checkpoint(args.checkpoint)
    with open(args.input) as fh:
        stream, _ = tokencodec.parse_token_stream(fh.read())
    seq = vae.detokenize(stream, fps=args.fps)
    motionio.write_motion(args.output, seq)
    print(f"wrote {seq.n_frames} frames of modality {seq.modality}")
    return 0


def cmd_stats(args) -> int:
    by_modality: dict[str, tuple[list, int]] = {}
    for path in args.inputs:
        with open(path) as fh:
            stream, codebook = tokencodec.parse_token_stream(fh.read())
        streams, size = by_modality.setdefault(stream.modality, ([], codebook))
        if size != codebook:
            raise M3tkError(
                f"conflicting codebook sizes for {stream.modality}: {size} vs {codebook}")
        streams.append(stream)
    if not by_modality:
        raise M3tkError("no token documents given")

    lines = ["m3tk-stats v1"]
    for modality in sorted(by_modality):
        streams, size = by_modality[modality]
        report = utilization(streams, size)
        lines.append(f"modality {modality} codebook {size} "
                     f"used_fraction {report.used_fraction!r} "
                     f"frequency_sd {report.frequency_sd!r} "
                     f"total {report.total_tokens}")
        lines.append("code count")
        for code, count in enumerate(report.frequency_histogram):
            lines.append(f"{code} {int(count)}")
    with open(args.output, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote stats for {len(by_modality)} modalities")
    return 0


def cmd_fit(args) -> int:
    model = load_body_model(args.model)
    keypoints, confidences = fitting.load_keypoints(args.keypoints)
    init = fitting.load_params_sequence(args.init)
    if len(init) != keypoints.shape[0]:
        raise M3tkError(
            f"init has {len(init)} frames, keypoints have {keypoints.shape[0]}")
    problem = fitting.FitProblem(
        model=model, init_params=init, keypoints_2d=keypoints,
        confidences=confidences,
        camera=fitting.OrthographicCamera(scale=args.camera_scale))
    result = fitting.refine_sequence(problem, steps=args.steps, lr=args.lr)
    fitting.save_params_sequence(args.out, result.params)
    if args.trace:
        with open(args.trace, "w") as fh:
            for step, value in enumerate(result.loss_trace):
                fh.write(f"{step} {value!r}\n")
    print(f"fit: initial {result.initial_loss:.6g} -> final {result.final_loss:.6g}")
    return 0


def _as_points(seq: MotionSequence) -> np.ndarray:
    t, d = seq.frames.shape
    if d % 3:
        raise M3tkError(f"motion dim {d} is not a multiple of 3 (not point data)")
    return seq.frames.reshape(t, d // 3, 3)


def cmd_eval_geometry(args) -> int:
    pred = _as_points(motionio.read_motion(args.pred))
    gt = _as_points(motionio.read_motion(args.gt))
    if pred.shape[1] != gt.shape[1]:
        raise M3tkError(
            f"point count mismatch: pred {pred.shape[1]}, gt {gt.shape[1]}")
    values = {
        "dtw_jpe": metrics.dtw_jpe(pred, gt, align="none"),
        "dtw_pa_jpe": metrics.dtw_jpe(pred, gt, align="procrustes"),
        "dtw_vpe": metrics.dtw_vpe(pred, gt, align="none"),
    }
    with open(args.output, "w") as fh:
        fh.write(metrics.format_metric_report([], values))
    print(" ".join(f"{k}={v:.6g}" for k, v in values.items()))
    return 0


def _read_sentences(path) -> list[list[str]]:
    with open(path) as fh:
        return [line.split() for line in fh.read().splitlines() if line.strip()]


def cmd_eval_text(args) -> int:
    hyps = _read_sentences(args.hyp)
    refs = _read_sentences(args.ref)
    if len(hyps) != len(refs):
        raise M3tkError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    per_sequence = [{"rouge_l": metrics.rouge_l([h], [r])}
                    for h, r in zip(hyps, refs)]
    corpus = {"bleu4": metrics.bleu4(hyps, refs),
              "rouge_l": metrics.rouge_l(hyps, refs)}
    with open(args.output, "w") as fh:
        fh.write(metrics.format_metric_report(per_sequence, corpus))
    print(f"bleu4={corpus['bleu4']:.6g} rouge_l={corpus['rouge_l']:.6g}")
    return 0


def cmd_gen_fixtures(args) -> int:
    root = data_dir(args.out)
    root.mkdir(parents=True, exist_ok=True)
    seed = args.seed
    n_seq, n_frames = args.sequences, args.frames

    model = synthdata.toy_body_model()
    save_body_model(root / "toy.body", model)

    for offset, (modality, vae_mod) in enumerate(
            (("body", "body"), ("right_hand", "hand"), ("face", "face"))):
        dim = motionvae.MODALITY_DIMS[modality]
        data = synthdata.sinusoid_dataset(seed + 11 * (offset + 1),
                                          n_seq, n_frames, dim)
        sequences = [MotionSequence(modality, 25.0, frames) for frames in data]
        motionio.write_dataset(root / f"{vae_mod}_train.m3ts", sequences)
        motionio.write_motion(root / f"{vae_mod}_sample.motion", sequences[0])

    generator = synthdata.FacePcaGenerator(seed + 77)
    pca = generator.dataset(seed + 78, n_seq, n_frames)
    motionio.write_dataset(root / "face_pca_train.m3ts",
                           [MotionSequence("face", 25.0, f) for f in pca])

    # fitting fixture: ground truth poses, exact keypoints, perturbed init
    rng = np.random.default_rng(seed + 5)
    gt = synthdata.rest_pose_sequence(model, 6, wiggle=0.4)
    camera = fitting.OrthographicCamera()
    keypoints = np.zeros((len(gt), model.n_joints, 2))
    for t, pose in enumerate(gt):
        _, joints = lbs_forward(model, pose)
        keypoints[t] = fitting.project_orthographic(joints, camera).data
    confidences = np.ones((len(gt), model.n_joints))
    fitting.save_keypoints(root / "fit_keypoints.kp2d", keypoints, confidences)
    fitting.save_params_sequence(root / "fit_gt.params", gt)
    init = [synthdata.perturb_pose(pose, rng, sigma=0.08) for pose in gt]
    fitting.save_params_sequence(root / "fit_init.params", init)

    print(f"fixtures written to {root}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "tokenize": cmd_tokenize,
        "detokenize": cmd_detokenize,
        "stats": cmd_stats,
        "fit": cmd_fit,
        "gen-fixtures": cmd_gen_fixtures,
    }
    try:
        if args.command == "eval":
            handler = cmd_eval_geometry if args.kind == "geometry" else cmd_eval_text
            return handler(args)
        return handlers[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except M3tkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
