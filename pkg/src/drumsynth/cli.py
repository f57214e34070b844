"""Command-line surface. Results go to stdout (JSON where structured),
diagnostics and timing to stderr, and every failure exits nonzero with a
one-line ``error: ...`` message on stderr. All randomized commands take
--seed and produce bit-identical outputs for a given seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig
from .descriptors import DESCRIPTOR_NAMES, DescriptorVector, describe, match_descriptors
from .envelope import extract_class_envelope, write_envelope
from .evaluation import (
    control_eval_protocol,
    fad_from_audio,
    fad_from_embeddings,
    read_embeddings,
    report_summary,
    write_scatter_csv,
    write_summary_json,
)
from .gan.model import checkpoint_generator, generate_batch, load_checkpoint
from .gan.train import train
from .gradcheck import TOLERANCE, check_descriptors, check_ops
from .sampler import DatasetManifest, Sampler, class_histogram
from .synthdata import DEFAULT_PROPORTIONS, synth_dataset
from .wavio import read_wav, write_wav


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_run_config(path) -> RunConfig:
    return RunConfig() if path is None else RunConfig.load(path)


def cmd_synth_dataset(args):
    proportions = (
        tuple(float(p) for p in args.proportions.split(","))
        if args.proportions
        else DEFAULT_PROPORTIONS
    )
    manifest = synth_dataset(
        args.out, args.n, proportions, seed=args.seed,
        length=args.length, sample_rate=args.sample_rate,
    )
    _emit({
        "manifest": str(Path(args.out) / "manifest.jsonl"),
        "counts": {c.value: n for c, n in manifest.class_counts().items()},
    })
    return 0


def cmd_envelopes_extract(args):
    manifest = DatasetManifest.load(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for drum_class in manifest.classes:
        clips = [read_wav(manifest.resolve(manifest.entries[i])) for i in manifest.by_class[drum_class]]
        table = extract_class_envelope(
            clips, drum_class, length=args.length,
            smooth_len=args.smooth, fade_len=args.fade,
        )
        path = out_dir / f"{drum_class.value}.env"
        write_envelope(table, path)
        written[drum_class.value] = str(path)
    _emit(written)
    return 0


def cmd_describe(args):
    cfg = _load_run_config(args.config).descriptor_config()
    vec = describe(read_wav(args.infile), cfg)
    if args.json:
        _emit({"brightness": vec.brightness, "depth": vec.depth, "warmth": vec.warmth})
    else:
        for name in DESCRIPTOR_NAMES:
            print(f"{name} = {vec.get(name):.3f}")
    return 0


def cmd_gradcheck(args):
    op_errors = check_ops(seed=args.seed, n_inputs=args.inputs)
    desc_errors = check_descriptors(seed=args.seed, n_inputs=args.inputs)
    failures = 0
    for name, err in sorted({**op_errors, **desc_errors}.items()):
        status = "ok" if err < TOLERANCE else "FAIL"
        if err >= TOLERANCE:
            failures += 1
        print(f"{name}: max_rel_err={err:.3e} {status}")
    print(f"{'PASS' if failures == 0 else 'FAIL'}: {len(op_errors) + len(desc_errors)} checks, tolerance {TOLERANCE}", file=sys.stderr)
    return 0 if failures == 0 else 1


def cmd_train_toy(args):
    run = _load_run_config(args.config)
    gan_cfg = run.gan_config()
    overrides = {}
    if args.descriptors is not None:
        overrides["descriptors"] = tuple(d for d in args.descriptors.split(",") if d)
    if args.use_envelope:
        overrides["use_envelope"] = True
    if overrides:
        from dataclasses import replace

        gan_cfg = replace(gan_cfg, **overrides)
    manifest = DatasetManifest.load(args.manifest)
    result = train(
        gan_cfg, manifest, steps=args.steps, seed=args.seed,
        sampler_mode=args.sampler_mode,
        lr=run["train.lr"], lam=run["train.lambda_lp"], desc_weight=run["train.desc_weight"],
        desc_cfg=run.descriptor_config(),
        envelope_smooth=run["train.envelope_smooth"], envelope_fade=run["train.envelope_fade"],
        checkpoint_path=args.out, log_path=args.log,
    )
    last = result.log_rows[-1] if result.log_rows else None
    _emit({
        "checkpoint": str(args.out),
        "steps": args.steps,
        "final": last,
    })
    return 0


def _parse_targets(args) -> dict:
    targets = {}
    for name in DESCRIPTOR_NAMES:
        value = getattr(args, name, None)
        if value is not None:
            targets[name] = value
    return targets


def cmd_generate(args):
    cfg, params, envelopes = load_checkpoint(args.ckpt)
    targets = _parse_targets(args)
    for name in cfg.descriptors:
        if name not in targets:
            raise ValueError(f"checkpoint conditions on {name!r}; pass --{name}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clips, stats = generate_batch(
        cfg, params, args.n, (args.drum_class, targets or None), seed=args.seed,
        envelopes=envelopes,
    )
    paths = []
    for i, clip in enumerate(clips):
        path = out_dir / f"gen_{i:05d}.wav"
        write_wav(clip, path, fmt=args.format)
        paths.append(str(path))
    print(
        f"throughput: {stats.clips_per_second:.2f} clips/s, "
        f"{stats.audio_seconds_per_second:.2f} audio seconds/s",
        file=sys.stderr,
    )
    _emit({"written": len(paths), "out_dir": str(out_dir), "class": args.drum_class})
    return 0


def cmd_match_descriptors(args):
    run = _load_run_config(args.config)
    cfg = run.descriptor_config()
    clip = read_wav(args.infile)
    targets = _parse_targets(args)
    if not targets:
        raise ValueError("pass at least one of --brightness/--depth/--warmth")
    start = describe(clip, cfg)
    full_target = DescriptorVector(
        brightness=targets.get("brightness", start.brightness),
        depth=targets.get("depth", start.depth),
        warmth=targets.get("warmth", start.warmth),
    )
    result = match_descriptors(
        clip, full_target, mask=tuple(targets), steps=args.steps,
        step_size=args.step_size, cfg=cfg,
    )
    write_wav(result, args.out, fmt="float32")
    final = describe(result, cfg)
    _emit({
        "initial": {n: start.get(n) for n in targets},
        "target": targets,
        "achieved": {n: final.get(n) for n in targets},
        "out": str(args.out),
    })
    return 0


def cmd_fad(args):
    if (args.emb_a is None) != (args.emb_b is None):
        raise ValueError("pass both --emb-a and --emb-b or neither")
    if args.emb_a is not None:
        value = fad_from_embeddings(read_embeddings(args.emb_a), read_embeddings(args.emb_b))
    else:
        if args.dir_a is None or args.dir_b is None:
            raise ValueError("pass --dir-a and --dir-b (or embedding files)")
        mel = _load_run_config(args.config).mel_config()
        value = fad_from_audio(args.dir_a, args.dir_b, mel)
    if args.json:
        _emit({"fad": value})
    else:
        print(f"{value:.10g}")
    return 0


def cmd_eval_control(args):
    run = _load_run_config(args.config)
    desc_cfg = run.descriptor_config()
    cfg, params, envelopes = load_checkpoint(args.ckpt)
    if args.drum_class not in cfg.classes:
        raise ValueError(f"class {args.drum_class!r} not in checkpoint classes {cfg.classes}")
    manifest = DatasetManifest.load(args.manifest)
    vectors = []
    for entry in manifest.entries:
        if args.norm_scope == "per_class" and entry.drum_class.value != args.drum_class:
            continue
        clip = read_wav(manifest.resolve(entry))
        vectors.append(describe(clip, desc_cfg))
    generate_fn = checkpoint_generator(cfg, params, envelopes)
    records, ordering, mae, regression = control_eval_protocol(
        generate_fn, vectors, args.descriptor, args.mode, args.n,
        seed=args.seed, drum_class=args.drum_class, cfg=desc_cfg,
    )
    if args.out_csv:
        write_scatter_csv(args.out_csv, records)
    if args.out_json:
        write_summary_json(args.out_json, ordering, mae, regression)
    _emit(report_summary(ordering, mae, regression))
    return 0


def cmd_sample_report(args):
    manifest = DatasetManifest.load(args.manifest)
    sampler = Sampler(manifest, mode=args.mode, seed=args.seed)
    draws = sampler.draw(args.draws)
    counts, chi_square = class_histogram(draws, classes=manifest.classes)
    _emit({
        "mode": args.mode,
        "draws": args.draws,
        "counts": {c.value: n for c, n in sorted(counts.items(), key=lambda kv: kv[0].value)},
        "frequencies": {
            c.value: n / args.draws for c, n in sorted(counts.items(), key=lambda kv: kv[0].value)
        },
        "chi_square_vs_uniform": chi_square,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drumsynth",
        description="Drum synthesis toolkit: descriptors, toy GAN, envelopes, sampling, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-dataset", help="write a synthetic drum dataset + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--proportions", help="comma list, e.g. 0.1,0.6,0.3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, default=4096)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.set_defaults(func=cmd_synth_dataset)

    p = sub.add_parser("envelopes-extract", help="extract per-class envelopes from a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--length", type=int, default=4096)
    p.add_argument("--smooth", type=int, default=257)
    p.add_argument("--fade", type=int, default=512)
    p.set_defaults(func=cmd_envelopes_extract)

    p = sub.add_parser("describe", help="timbral descriptors of a WAV file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("gradcheck", help="finite-difference check of every engine op")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inputs", type=int, default=5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="train the toy waveform GAN")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--sampler-mode", choices=("natural", "balanced"), default="balanced")
    p.add_argument("--descriptors", help="comma list of conditioned descriptors")
    p.add_argument("--use-envelope", action="store_true")
    p.add_argument("--log", help="loss CSV path")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("generate", help="generate clips from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--class", dest="drum_class", required=True)
    p.add_argument("--brightness", type=float)
    p.add_argument("--depth", type=float)
    p.add_argument("--warmth", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("match-descriptors", help="gradient-descend a clip toward descriptor targets")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--brightness", type=float)
    p.add_argument("--depth", type=float)
    p.add_argument("--warmth", type=float)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--step-size", type=float, default=1e-3)
    p.add_argument("--config")
    p.set_defaults(func=cmd_match_descriptors)

    p = sub.add_parser("fad", help="Fréchet audio distance between two sets")
    p.add_argument("--dir-a")
    p.add_argument("--dir-b")
    p.add_argument("--emb-a", help="F32M embedding file for side A")
    p.add_argument("--emb-b", help="F32M embedding file for side B")
    p.add_argument("--json", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_fad)

    p = sub.add_parser("eval-control", help="descriptor-control evaluation of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--descriptor", choices=DESCRIPTOR_NAMES, required=True)
    p.add_argument("--mode", choices=("single", "combined", "combined_dataset"), default="single")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class", dest="drum_class", required=True)
    p.add_argument("--norm-scope", choices=("per_class", "global"), default="per_class")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval_control)

    p = sub.add_parser("sample-report", help="sampling-distribution report over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("natural", "balanced"), default="balanced")
    p.add_argument("--draws", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
