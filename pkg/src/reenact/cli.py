"""Command-line entry points for every workflow."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import torch

from reenact import __version__
from reenact.config import ToolkitConfig, config_hash, load_config
from reenact.data import load_dataset
from reenact.errors import ReenactError
from reenact.images import FaceImage
from reenact.landmarks import Landmark, LandmarkEdit, interpolate, manipulate, rasterize


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file (or set FREENET_CONFIG)")
    parser.add_argument("--seed", type=int, help="seed override for this run")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override, e.g. --set ulc_train.epochs=50 (repeatable)",
    )


def _build_config(args) -> ToolkitConfig:
    overrides: dict[str, object] = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ReenactError(f"override must look like key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    config = load_config(args.config, overrides)
    if args.seed is not None:
        config.ulc_train.seed = args.seed
        config.gag_train.seed = args.seed
    return config


def _load_landmark(path: str) -> Landmark:
    return Landmark.load(path)


def _parse_edit(spec: str) -> LandmarkEdit:
    # "INDEX:DX,DY", e.g. "5:0.1,-0.05"
    try:
        index_part, delta_part = spec.split(":")
        dx, dy = delta_part.split(",")
        return LandmarkEdit(int(index_part), (float(dx), float(dy)))
    except ValueError as exc:
        raise ReenactError(f"edit must look like INDEX:DX,DY, got {spec!r}") from exc


def _generate_image(generator, reference: FaceImage, lm: Landmark, grouping, resolution) -> FaceImage:
    raster = rasterize(lm, resolution, grouping)
    with torch.no_grad():
        out = generator(
            reference.to_tensor().unsqueeze(0),
            torch.from_numpy(raster.pixels[None, None, :, :]).float(),
        )
    return FaceImage.from_tensor(out)


def cmd_synth_data(args) -> int:
    from reenact.synth import SynthSpec, generate_synthetic_dataset

    spec = SynthSpec(
        identities=args.identities,
        expressions=args.expressions,
        poses=args.poses,
        seed=args.seed if args.seed is not None else 0,
    )
    manifest = generate_synthetic_dataset(spec, args.out)
    print(manifest)
    return 0


def cmd_train_ulc(args) -> int:
    from reenact.training import train_ulc

    config = _build_config(args)
    dataset = load_dataset(args.data)
    result = train_ulc(dataset, config, args.out)
    summary = {
        "checkpoint": str(result.checkpoint_path),
        "metrics": str(result.metrics_path),
        "holdout_ace": result.holdout_ace_tail,
        "config_hash": config_hash(config),
    }
    print(json.dumps(summary))
    return 0


def cmd_train_gag(args) -> int:
    from reenact.training import train_gag

    config = _build_config(args)
    dataset = load_dataset(args.data)
    result = train_gag(dataset, args.ulc, config, args.out)
    print(
        json.dumps(
            {
                "checkpoint": str(result.checkpoint_path),
                "metrics": str(result.metrics_path),
                "config_hash": config_hash(config),
            }
        )
    )
    return 0


def cmd_reenact(args) -> int:
    from reenact.converter import convert
    from reenact.training import load_converter, load_generator

    config = _build_config(args)
    converter = load_converter(args.ulc, config)
    generator = load_generator(args.gag, config)
    reference = FaceImage.load_png(args.reference)
    target_ref = _load_landmark(args.ref_landmarks)
    source = _load_landmark(args.source_landmarks)
    converted = convert(target_ref, source, converter)
    from reenact.landmarks import DEFAULT_GROUPING

    image = _generate_image(
        generator, reference, converted, DEFAULT_GROUPING, config.gag.landmark_resolution
    )
    image.save_png(args.out)
    if args.out_landmarks:
        converted.save(args.out_landmarks)
    print(args.out)
    return 0


def cmd_interpolate(args) -> int:
    from reenact.landmarks import DEFAULT_GROUPING
    from reenact.training import load_generator

    config = _build_config(args)
    generator = load_generator(args.gag, config)
    reference = FaceImage.load_png(args.reference)
    a = _load_landmark(args.a)
    b = _load_landmark(args.b)
    if args.steps < 2:
        raise ReenactError("--steps must be at least 2")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.steps):
        t = i / (args.steps - 1)
        lm = interpolate(a, b, t)
        image = _generate_image(
            generator, reference, lm, DEFAULT_GROUPING, config.gag.landmark_resolution
        )
        image.save_png(out_dir / f"frame{i:03d}.png")
        lm.save(out_dir / f"frame{i:03d}.json")
    print(out_dir)
    return 0


def cmd_manipulate(args) -> int:
    lm = _load_landmark(args.landmarks)
    edits = [_parse_edit(e) for e in args.edit]
    edited = manipulate(lm, edits)
    edited.save(args.out)
    if args.render:
        from reenact.landmarks import DEFAULT_GROUPING
        from reenact.training import load_generator

        config = _build_config(args)
        if not args.gag or not args.reference:
            raise ReenactError("--render needs --gag and --reference")
        generator = load_generator(args.gag, config)
        reference = FaceImage.load_png(args.reference)
        image = _generate_image(
            generator, reference, edited, DEFAULT_GROUPING, config.gag.landmark_resolution
        )
        image.save_png(args.render)
    print(args.out)
    return 0


def cmd_eval(args) -> int:
    from reenact.converter import convert
    from reenact.data import enumerate_pair_combos, pair_sample_from_combo
    from reenact.landmarks import ace
    from reenact.metrics import count_params, fid, measure_speed, ssim
    from reenact.report import metric_bars_figure
    from reenact.training import load_converter, load_generator
    from reenact.triplet import build_extractor

    config = _build_config(args)
    dataset = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    converter = load_converter(args.ulc, config)

    combos = enumerate_pair_combos(dataset)
    aces = []
    for combo in combos:
        s = pair_sample_from_combo(dataset, combo)
        aces.append(ace(convert(s.l_target_ref, s.l_source, converter), s.l_target_truth))
    report: dict[str, object] = {
        "dataset": str(args.data),
        "records": len(dataset),
        "conversion_pairs": len(combos),
        "ace_mean": float(np.mean(aces)),
        "ace_max": float(np.max(aces)),
        "ulc_params": count_params(converter),
        "config_hash": config_hash(config),
    }

    if args.gag:
        generator = load_generator(args.gag, config)
        report["gag_params"] = count_params(generator)
        extractor = build_extractor("pixel-scaled")
        ssims, real_feats, fake_feats = [], [], []
        for combo in combos[: args.max_images]:
            s = pair_sample_from_combo(dataset, combo)
            from reenact.data import SampleKey

            ref_img = dataset.image(dataset.reference_key(combo.target, combo.pose))
            truth_img = dataset.image(SampleKey(combo.target, combo.expression, combo.pose))
            converted = convert(s.l_target_ref, s.l_source, converter)
            gen = _generate_image(
                generator, ref_img, converted, dataset.grouping, config.gag.landmark_resolution
            )
            ssims.append(ssim(gen, truth_img))
            with torch.no_grad():
                real_feats.append(extractor(truth_img.to_tensor().unsqueeze(0))[0].numpy())
                fake_feats.append(extractor(gen.to_tensor().unsqueeze(0))[0].numpy())
        report["ssim_mean"] = float(np.mean(ssims))
        if len(real_feats) > 1:
            report["fid"] = fid(np.stack(real_feats), np.stack(fake_feats))

    if args.speed_iterations:
        ref = dataset.landmark(dataset.reference_key(dataset.identities[0], dataset.poses[0]))
        src = dataset.landmark(dataset.records[0])
        speed = measure_speed(
            lambda: convert(ref, src, converter),
            device_descriptor=args.device_descriptor,
            iterations=args.speed_iterations,
        )
        report["ulc_fps"] = speed.fps
        report["ulc_latency_ms"] = speed.latency_ms
        report["device"] = speed.device

    (out / "report.json").write_text(json.dumps(report, indent=1))
    with (out / "metrics.csv").open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        for key, value in report.items():
            writer.writerow([key, value])
    figure_values = {
        k: float(v)
        for k, v in report.items()
        if isinstance(v, (int, float)) and k not in ("records", "conversion_pairs")
    }
    metric_bars_figure(figure_values, out / "metrics.png")
    print(json.dumps(report))
    return 0


def cmd_ablation(args) -> int:
    from reenact.ablation import run_ablation

    config = _build_config(args)
    dataset = load_dataset(args.data)
    seeds = [int(s) for s in args.seeds.split(",")]
    result = run_ablation(dataset, seeds, config, args.out)
    print(
        json.dumps(
            {
                "rows": result.rows(),
                "ordered": result.ordered(),
                "gaps_exceed_spread": result.gaps_exceed_spread(),
            }
        )
    )
    return 0


def cmd_serve(args) -> int:
    from reenact.service import serve

    config = _build_config(args)
    serve(args.ulc, args.gag, config, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reenact",
        description="Face reenactment toolkit: landmark expression retargeting "
        "plus geometry-aware face generation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the procedural synthetic dataset")
    _add_common(p)
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--expressions", type=int, required=True)
    p.add_argument("--poses", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train-ulc", help="train the landmark converter")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train_ulc)

    p = sub.add_parser("train-gag", help="train the face generator (frozen converter)")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ulc", required=True, help="converter checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_gag)

    p = sub.add_parser("reenact", help="reenact one face from a reference and landmarks")
    _add_common(p)
    p.add_argument("--reference", required=True, help="reference face PNG")
    p.add_argument("--ref-landmarks", required=True)
    p.add_argument("--source-landmarks", required=True)
    p.add_argument("--ulc", required=True)
    p.add_argument("--gag", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--out-landmarks", help="also write the converted landmarks")
    p.set_defaults(func=cmd_reenact)

    p = sub.add_parser("interpolate", help="render frames along a landmark interpolation")
    _add_common(p)
    p.add_argument("--a", required=True, help="landmark JSON at t=0")
    p.add_argument("--b", required=True, help="landmark JSON at t=1")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--reference", required=True)
    p.add_argument("--gag", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("manipulate", help="displace individual landmark points")
    _add_common(p)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--edit", action="append", required=True, metavar="INDEX:DX,DY")
    p.add_argument("--out", required=True, help="output landmark JSON")
    p.add_argument("--render", help="optional output PNG (needs --gag and --reference)")
    p.add_argument("--gag")
    p.add_argument("--reference")
    p.set_defaults(func=cmd_manipulate)

    p = sub.add_parser("eval", help="evaluate checkpoints; writes report + figures")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ulc", required=True)
    p.add_argument("--gag")
    p.add_argument("--out", required=True)
    p.add_argument("--max-images", type=int, default=32)
    p.add_argument("--speed-iterations", type=int, default=0)
    p.add_argument("--device-descriptor", default="cpu")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablation", help="converter loss ablation (3 variants x seeds)")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    _add_common(p)
    p.add_argument("--ulc", required=True)
    p.add_argument("--gag", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ReenactError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
