"""Command-line surface tying the toolkit together.

Exit codes: 0 success, 2 input error, 3 plugin/child failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from . import dataset as ds
from .afs import read_afs1
from .backstats import (
    default_moments,
    estimate_moments,
    histogram,
    iter_corpus,
    load_moments,
    save_moments,
)
from .errors import InputError, PluginError, RgbaBenchError
from .losses import (
    GaussianSampler,
    ThreePointSampler,
    TwoPointAsymmetricSampler,
    TwoPointSymmetricSampler,
    UniformSampler,
    abmse_closed,
    abmse_mc,
)
from .metrics import PluginConfig, frechet_distance, gaussian_stats
from .rgba import (
    CANONICAL_BACKGROUNDS,
    Background,
    RgbImage,
    blend,
    load_image,
    save_image,
    save_rgb,
    to_signed,
)
from .report import compare, emit, parse_report, run_eval
from .surgery import extend_decoder_last_conv, extend_encoder_first_conv, read_atc1, write_atc1
from .surgery import TensorContainer

_SAMPLERS = {
    "gaussian": GaussianSampler,
    "uniform": UniformSampler,
    "two-point": TwoPointSymmetricSampler,
    "two-point-skew": TwoPointAsymmetricSampler,
    "three-point": ThreePointSampler,
}


def _write_output(data: bytes, out: Optional[str]) -> None:
    if out:
        with open(out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)


def _parse_background(spec: str) -> Background:
    if spec in CANONICAL_BACKGROUNDS.names:
        return CANONICAL_BACKGROUNDS.by_name(spec)
    if "," in spec:
        parts = spec.split(",")
        if len(parts) != 3:
            raise InputError("background color needs 3 channels, got %r" % spec)
        try:
            r, g, b = (float(p) for p in parts)
        except ValueError as exc:
            raise InputError("bad background color %r" % spec) from exc
        return Background.solid(r, g, b)
    if os.path.exists(spec):
        return Background.from_image(RgbImage(load_image(spec).rgb))
    raise InputError(
        "background %r is neither a canonical name, an r,g,b triple, "
        "nor an image file" % spec
    )


def _image_paths(directory: str) -> list:
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise InputError("cannot list directory %r: %s" % (directory, exc)) from exc
    paths = [
        os.path.join(directory, n)
        for n in names
        if os.path.isfile(os.path.join(directory, n))
    ]
    if not paths:
        raise InputError("no files in %r" % directory)
    return paths


def _cmd_blend(args) -> int:
    image = load_image(args.image)
    background = _parse_background(args.background)
    save_rgb(blend(image, background), args.out)
    return 0


def _load_plugins(path: Optional[str]) -> list:
    if not path:
        return []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            entries = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError("cannot read plugin config %r: %s" % (path, exc)) from exc
    if not isinstance(entries, list):
        raise InputError("plugin config must be a json list")
    configs = []
    for entry in entries:
        command = entry.get("command")
        if isinstance(command, str):
            import shlex

            command = tuple(shlex.split(command))
        elif isinstance(command, list):
            command = tuple(str(c) for c in command)
        else:
            raise InputError("plugin entry needs a command string or list")
        configs.append(
            PluginConfig(
                name=entry.get("name", ""),
                command=command,
                direction=entry.get("direction", "lower-better"),
                timeout=float(entry.get("timeout", 300.0)),
                reentrant=bool(entry.get("reentrant", False)),
            )
        )
    return configs


def _load_subtype_labels(path: Optional[str]) -> Optional[dict]:
    if not path:
        return None
    labels = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "," not in line:
                    raise InputError("bad label line %r (expected stem,label)" % line)
                stem, label = line.split(",", 1)
                labels[stem.strip()] = label.strip()
    except OSError as exc:
        raise InputError("cannot read labels %r: %s" % (path, exc)) from exc
    return labels


def _cmd_eval(args) -> int:
    report = run_eval(
        gt_dir=args.gt,
        pred_dir=args.pred,
        metrics=tuple(m.strip() for m in args.metrics.split(",") if m.strip()),
        plugins=_load_plugins(args.plugins),
        features_dir=args.features,
        threads=args.threads,
        dataset=args.dataset,
        subtype_labels=_load_subtype_labels(args.subtype_labels),
    )
    _write_output(emit(report, args.format), args.out)
    return 0


def _cmd_abmse(args) -> int:
    moments = load_moments(args.moments) if args.moments else default_moments()
    gt = load_image(args.gt)
    pred = load_image(args.pred)
    if moments.domain == "signed":
        x, xhat = to_signed(gt), to_signed(pred)
    else:
        x, xhat = gt, pred
    closed = abmse_closed(x, xhat, moments)
    print("closed %.10g" % closed)
    if args.mc:
        sampler = _SAMPLERS[args.sampler].from_moments(moments)
        estimate, stderr = abmse_mc(x, xhat, sampler, args.mc, seed=args.seed)
        print("mc %.10g %.10g" % (estimate, stderr))
    return 0


def _cmd_fid(args) -> int:
    gt_feats, gt_meta = read_afs1(args.gt_features)
    pred_feats, pred_meta = read_afs1(args.pred_features)
    if gt_meta.get("extractor") != pred_meta.get("extractor"):
        raise InputError(
            "feature extractor tags differ: %r vs %r"
            % (gt_meta.get("extractor"), pred_meta.get("extractor"))
        )
    value = frechet_distance(gaussian_stats(gt_feats), gaussian_stats(pred_feats))
    print("fid %.10g" % value)
    return 0


def _cmd_moments(args) -> int:
    if args.defaults:
        moments = default_moments()
    else:
        if not args.images:
            raise InputError("moments needs --images DIR or --defaults")
        moments = estimate_moments(
            iter_corpus(_image_paths(args.images)), domain=args.domain
        )
    if args.out:
        save_moments(moments, args.out)
    else:
        print(json.dumps(moments.to_dict(), indent=2))
    return 0


def _cmd_histogram(args) -> int:
    hist = histogram(iter_corpus(_image_paths(args.images)), bins=args.bins)
    _write_output(hist.to_csv().encode("utf-8"), args.out)
    return 0


def _stem_map(directory: str) -> dict:
    mapping = {}
    for path in _image_paths(directory):
        stem = os.path.splitext(os.path.basename(path))[0]
        if stem in mapping:
            raise InputError("duplicate stem %r in %r" % (stem, directory))
        mapping[stem] = path
    return mapping


def _cmd_ingest(args) -> int:
    fg_map = _stem_map(args.fg)
    matte_map = _stem_map(args.matte)
    missing = sorted(set(fg_map) ^ set(matte_map))
    if missing:
        raise InputError("unmatched foreground/matte stems: %s" % missing)
    os.makedirs(args.out, exist_ok=True)
    entries = []
    for stem in sorted(fg_map):
        fg = RgbImage(load_image(fg_map[stem]).rgb)
        matte = ds.load_matte(matte_map[stem])
        rgba = ds.ingest_pair(fg, matte)
        out_path = os.path.join(args.out, stem + ".png")
        save_image(rgba, out_path)
        entries.append(
            ds.ManifestEntry(
                id=stem,
                rgba_path=out_path,
                width=rgba.width,
                height=rgba.height,
            )
        )
    manifest = ds.DatasetManifest(dataset_name=args.name, entries=tuple(entries))
    manifest_path = args.manifest or os.path.join(args.out, "manifest.json")
    ds.save_manifest(manifest, manifest_path)
    print("ingested %d pairs -> %s" % (len(entries), manifest_path))
    return 0


def _cmd_split(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    updated = ds.split_manifest(manifest, args.test_fraction, args.seed)
    out = args.out or args.manifest
    ds.save_manifest(updated, out)
    s = ds.stats(updated)
    print("split %s: %d train / %d test" % (updated.dataset_name, s.n_train, s.n_test))
    return 0


def _cmd_stats(args) -> int:
    manifests = [ds.load_manifest(p) for p in args.manifest]
    _write_output(ds.stats_csv(manifests).encode("utf-8"), args.out)
    return 0


def _cmd_augment(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    fired = 0
    entries = []
    for entry in manifest.entries:
        image = load_image(entry.rgba_path)
        augmented = ds.augment_entry(image, entry.id, args.seed, args.probability)
        if augmented is not image:
            fired += 1
        out_path = os.path.join(args.out, entry.id + ".png")
        save_image(augmented, out_path)
        entries.append(
            ds.ManifestEntry(
                id=entry.id,
                rgba_path=out_path,
                width=entry.width,
                height=entry.height,
                split=entry.split,
            )
        )
    ds.save_manifest(
        ds.DatasetManifest(
            dataset_name=manifest.dataset_name,
            entries=tuple(entries),
            seed=args.seed,
            test_fraction=manifest.test_fraction,
        ),
        os.path.join(args.out, "manifest.json"),
    )
    print("augmented %d of %d images" % (fired, len(entries)))
    return 0


def _cmd_surgery_extend(args) -> int:
    container = read_atc1(args.weights)
    tensors = dict(container.tensors)
    if not args.encoder_conv and not args.decoder_conv:
        raise InputError("surgery extend needs --encoder-conv and/or --decoder-conv")
    for name, op in (
        (args.encoder_conv, extend_encoder_first_conv),
        (args.decoder_conv, extend_decoder_last_conv),
    ):
        if not name:
            continue
        if name not in tensors:
            raise InputError("no tensor named %r in %r" % (name, args.weights))
        tensors[name] = op(tensors[name])
    write_atc1(
        TensorContainer(tensors=tensors, metadata=container.metadata), args.out
    )
    print("wrote %s" % args.out)
    return 0


def _cmd_report(args) -> int:
    def read(path):
        try:
            with open(path, "rb") as fh:
                return parse_report(fh.read())
        except OSError as exc:
            raise InputError("cannot read report %r: %s" % (path, exc)) from exc

    if args.compare:
        if len(args.files) != 2:
            raise InputError("--compare needs baseline and candidate report files")
        comparison = compare(read(args.files[0]), read(args.files[1]))
        _write_output(emit(comparison, args.format), args.out)
    else:
        if len(args.files) != 1:
            raise InputError("report re-emission takes one report file")
        _write_output(emit(read(args.files[0]), args.format), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgbabench",
        description="Transparency-aware RGBA image evaluation and loss numerics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blend", help="composite an RGBA image over a background")
    p.add_argument("--image", required=True)
    p.add_argument("--background", required=True,
                   help="canonical name, r,g,b triple, or image file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_blend)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--metrics", default="mse,psnr,ssim")
    p.add_argument("--features", help="directory of per-background feature files")
    p.add_argument("--plugins", help="json list of external scorer configs")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dataset", default="")
    p.add_argument("--subtype-labels", help="csv of stem,label lines")
    p.add_argument("--format", choices=("json", "csv", "markdown"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("abmse", help="closed-form blended reconstruction error")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--moments", help="moments json (default: built-in constants)")
    p.add_argument("--mc", type=int, default=0,
                   help="also run a Monte-Carlo estimate with this many samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=sorted(_SAMPLERS), default="gaussian")
    p.set_defaults(func=_cmd_abmse)

    p = sub.add_parser("fid", help="Frechet distance between two feature files")
    p.add_argument("--gt-features", required=True)
    p.add_argument("--pred-features", required=True)
    p.set_defaults(func=_cmd_fid)

    p = sub.add_parser("moments", help="estimate background channel moments")
    p.add_argument("--images", help="directory of background images")
    p.add_argument("--domain", choices=("unit", "signed"), default="signed")
    p.add_argument("--defaults", action="store_true",
                   help="emit the built-in constants instead of estimating")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("histogram", help="per-channel pixel value histogram")
    p.add_argument("--images", required=True)
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_histogram)

    p = sub.add_parser("ingest", help="combine foregrounds and mattes into RGBA")
    p.add_argument("--fg", required=True)
    p.add_argument("--matte", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="dataset")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("split", help="assign train/test splits in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-fraction", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("--manifest", required=True, nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("augment", help="composite entries over random backgrounds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--probability", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("surgery", help="convolution weight surgery")
    surgery_sub = p.add_subparsers(dest="surgery_command", required=True)
    pe = surgery_sub.add_parser("extend", help="extend 3-channel convs to 4")
    pe.add_argument("--weights", required=True)
    pe.add_argument("--encoder-conv", help="tensor to gain a zeroed alpha input slice")
    pe.add_argument("--decoder-conv", help="tensor to gain an opaque alpha output channel")
    pe.add_argument("-o", "--out", required=True)
    pe.set_defaults(func=_cmd_surgery_extend)

    p = sub.add_parser("report", help="re-emit or compare report files")
    p.add_argument("files", nargs="+")
    p.add_argument("--compare", action="store_true",
                   help="treat the two files as baseline and candidate")
    p.add_argument("--format", choices=("json", "csv", "markdown"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args) or 0
    except PluginError as exc:
        print("plugin error: %s" % exc, file=sys.stderr)
        if exc.stderr:
            print(exc.stderr, file=sys.stderr, end="")
        return 3
    except RgbaBenchError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
