"""Command-line interface.

Subcommands: ``synth-gen`` (write a synthetic dataset), ``adapt`` (run the
online pipeline over an embedding stream), ``diagnose`` (per-sample geometry
CSV), ``grad-check`` (finite-difference oracles), ``eig-check`` (linear
algebra self-tests).

Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import fileio, gradcheck, synth
from .adapt import SubspaceTTA, run_stream
from .encoder import ToyEncoder
from .exceptions import SubttaError
from .linalg import principal_angles, sym_eig
from .predictor import TextAnchorSet, diagnose as diagnose_sample, zero_shot
from .subspace import extract_subspace, text_covariance


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--samples-per-class", type=int, default=320)
    p.add_argument("--severity", type=int, default=5)
    p.add_argument("--rotation-max-deg", type=float, default=40.0)
    p.add_argument("--nuisance-max", type=float, default=2.2)
    p.add_argument("--decoy-strength", type=float, default=0.15)
    p.add_argument("--gain-drift-max", type=float, default=1.2)
    p.add_argument("--anchor-overlap", type=float, default=0.35)
    p.add_argument("--class-run-length", type=int, default=32)
    p.add_argument("--within-class-noise", type=float, default=0.1)


def _add_tta_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rank", type=int, default=None,
                   help="subspace rank (default min(n_classes, 64))")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.02,
                   help="alignment-stage Adam learning rate")
    p.add_argument("--tta-lr", type=float, default=0.01,
                   help="TTA-stage Adam learning rate")
    p.add_argument("--align-steps", type=int, default=3)
    p.add_argument("--tta-steps", type=int, default=2)
    p.add_argument("--objective", choices=("entropy", "icv"), default="icv")
    p.add_argument("--temperature", type=float, default=0.01)
    p.add_argument("--no-align", action="store_true")
    p.add_argument("--no-project", action="store_true")
    p.add_argument("--reset-between-segments", action="store_true", default=True)
    p.add_argument("--no-reset-between-segments", dest="reset_between_segments",
                   action="store_false")


def _synth_config(args) -> synth.SynthConfig:
    return synth.SynthConfig(
        dim=args.dim, n_classes=args.classes,
        samples_per_class=args.samples_per_class, severity=args.severity,
        rotation_max_deg=args.rotation_max_deg, nuisance_max=args.nuisance_max,
        decoy_strength=args.decoy_strength, gain_drift_max=args.gain_drift_max,
        anchor_overlap=args.anchor_overlap,
        class_run_length=args.class_run_length,
        within_class_noise=args.within_class_noise,
        batch_size=getattr(args, "batch_size", 64), seed=args.seed,
    )


def _config_echo(args, keys) -> dict:
    return {k.replace("_", "-"): getattr(args, k) for k in keys if hasattr(args, k)}


def cmd_synth_gen(args) -> int:
    cfg = _synth_config(args)
    ds = synth.generate(cfg)
    os.makedirs(args.outdir, exist_ok=True)
    fileio.write_embeddings(os.path.join(args.outdir, "embeddings.seb"),
                            ds.shifted, ds.labels)
    fileio.write_embeddings(os.path.join(args.outdir, "clean.seb"),
                            ds.clean, ds.labels)
    fileio.write_embeddings(os.path.join(args.outdir, "anchors.seb"), ds.anchors.anchors)
    fileio.write_config(
        _config_echo(args, ("dim", "classes", "samples_per_class", "severity",
                            "rotation_max_deg", "nuisance_max", "decoy_strength",
                            "gain_drift_max", "anchor_overlap",
                            "class_run_length", "within_class_noise",
                            "batch_size", "seed")),
        os.path.join(args.outdir, "config.txt"))
    print(f"wrote {ds.shifted.shape[0]} samples, {cfg.n_classes} anchors to {args.outdir}")
    return 0


def _read_anchors(path) -> TextAnchorSet:
    """Load anchors from file; float32 storage quantizes the row norms, so
    they are re-normalized before the strict unit-norm validation."""
    matrix, _ = fileio.read_embeddings(path)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return TextAnchorSet.from_matrix(matrix / np.maximum(norms, 1e-12))


def _file_batches(matrix, labels, batch_size):
    n = (matrix.shape[0] // batch_size) * batch_size
    for start in range(0, n, batch_size):
        end = start + batch_size
        yield matrix[start:end], (labels[start:end] if labels is not None else None)


def cmd_adapt(args) -> int:
    if args.synth:
        cfg = _synth_config(args)
        ds = synth.generate(cfg)
        anchors = ds.anchors
        segments = [("synth", ds.batches())]
    else:
        if not args.data or not args.anchors:
            print("adapt: need --synth, or --data and --anchors", file=sys.stderr)
            return 2
        anchors = _read_anchors(args.anchors)
        segments = []
        for path in args.data:
            matrix, labels = fileio.read_embeddings(path)
            segments.append((os.path.basename(path),
                             _file_batches(matrix, labels, args.batch_size)))

    summary, reports = run_stream(
        anchors, segments,
        reset_between_segments=args.reset_between_segments,
        rank=args.rank, alpha=args.alpha, lr=args.lr, tta_lr=args.tta_lr,
        align_steps=args.align_steps, tta_steps=args.tta_steps,
        objective=args.objective, temperature=args.temperature,
        align=not args.no_align, project=not args.no_project, seed=args.seed,
    )
    os.makedirs(args.outdir, exist_ok=True)
    fileio.write_step_csv(reports, os.path.join(args.outdir, "steps.csv"))
    fileio.write_config(
        _config_echo(args, ("rank", "alpha", "batch_size", "lr", "tta_lr",
                            "align_steps", "tta_steps",
                            "objective", "temperature", "seed", "no_align",
                            "no_project", "reset_between_segments", "synth",
                            "dim", "classes", "samples_per_class", "severity",
                            "rotation_max_deg", "nuisance_max", "decoy_strength",
                            "gain_drift_max", "anchor_overlap",
                            "class_run_length", "within_class_noise")),
        os.path.join(args.outdir, "config.txt"))
    for key in ("n_batches", "mean_accuracy", "final10_accuracy",
                "first10_align_loss", "final10_align_loss"):
        print(f"{key}={summary[key]}")
    return 0


def cmd_diagnose(args) -> int:
    matrix, labels = fileio.read_embeddings(args.embeddings)
    anchors = _read_anchors(args.anchors)
    rank = args.rank if args.rank is not None else min(anchors.n_classes, 64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bt = extract_subspace(text_covariance(anchors.anchors), rank)
    if not args.raw:
        # Model what the frozen source encoder would emit for these inputs.
        enc = ToyEncoder(dim=anchors.dim)
        matrix = enc.forward(matrix).embeddings
    lines = ["sample,label,pred_class,angle_to_text_subspace,"
             "semantic_concentration,gt_similarity"]
    correct = 0
    labeled = 0
    for i in range(matrix.shape[0]):
        pred = zero_shot(matrix[i], anchors, args.temperature)
        if labels is not None:
            diag = diagnose_sample(matrix[i], bt, anchors, int(labels[i]))
            gt_sim = diag.gt_similarity
            label_field = str(int(labels[i]))
            labeled += 1
            correct += int(pred.class_index == int(labels[i]))
        else:
            diag = diagnose_sample(matrix[i], bt, anchors, 0)
            gt_sim = float("nan")
            label_field = ""
        lines.append(",".join([
            str(i), label_field, str(pred.class_index),
            fileio.fmt9(diag.angle_to_text_subspace),
            fileio.fmt9(diag.semantic_concentration),
            fileio.fmt9(gt_sim),
        ]))
    fileio.atomic_write(args.out, ("\n".join(lines) + "\n").encode("ascii"))
    if labeled:
        print(f"source_accuracy={correct / labeled}")
    print(f"wrote {matrix.shape[0]} rows to {args.out}")
    return 0


def cmd_grad_check(args) -> int:
    return 0 if gradcheck.run_all(base_seed=args.seed) else 1


def cmd_eig_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True

    def report(name, passed, detail):
        nonlocal ok
        ok = ok and passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    worst_recon = 0.0
    worst_trace = 0.0
    for _ in range(20):
        d = int(rng.integers(4, 32))
        a = rng.normal(size=(d, d))
        m = 0.5 * (a + a.T)
        eig = sym_eig(m)
        recon = eig.vectors @ np.diag(eig.values) @ eig.vectors.T
        worst_recon = max(worst_recon,
                          np.linalg.norm(recon - m) / max(np.linalg.norm(m), 1e-12))
        worst_trace = max(worst_trace,
                          abs(np.sum(eig.values) - np.trace(m)) / max(abs(np.trace(m)), 1.0))
    report("eig reconstruction", worst_recon <= 1e-8, f"worst rel err {worst_recon:.3e}")
    report("trace identity", worst_trace <= 1e-8, f"worst rel err {worst_trace:.3e}")

    worst_sym = 0.0
    for _ in range(20):
        d, r = 16, 4
        a = gradcheck.random_orthonormal(rng, r, d)
        b = gradcheck.random_orthonormal(rng, r, d)
        worst_sym = max(worst_sym, float(np.max(np.abs(
            principal_angles(a, b) - principal_angles(b, a)))))
    report("principal-angle symmetry", worst_sym <= 1e-10, f"worst drift {worst_sym:.3e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subtta")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic benchmark dataset")
    _add_synth_flags(p)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("adapt", help="run online adaptation over a stream")
    p.add_argument("--synth", action="store_true",
                   help="generate the stream instead of reading files")
    _add_synth_flags(p)
    p.add_argument("--data", action="append",
                   help="embedding file; repeat for multiple segments")
    p.add_argument("--anchors", help="anchor embedding file")
    _add_tta_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("diagnose", help="per-sample geometry diagnostics CSV")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--temperature", type=float, default=0.01)
    p.add_argument("--raw", action="store_true",
                   help="diagnose file embeddings directly, bypassing the source encoder")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("grad-check", help="finite-difference gradient oracles")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("eig-check", help="linear algebra self-tests")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eig_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SubttaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
