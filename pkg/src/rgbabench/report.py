"""Evaluation orchestration and report emission.

``run_eval`` pairs ground-truth and prediction directories by filename
stem, lifts every requested metric over the canonical backgrounds, and
assembles a report whose markdown/CSV forms mirror the per-color
evaluation tables (metric rows, nine color columns, overall mean).
Reports can be compared against a baseline with signed per-cell deltas.

Determinism: workers write into preallocated (background, pair) slot
arrays and the reduction runs single-threaded in fixed order, so the
emitted bytes are identical for any worker-thread count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .afs import read_afs1
from .errors import InputError
from .metrics import (
    DESCRIPTORS,
    M4Result,
    MetricDescriptor,
    PluginConfig,
    aggregate_overall,
    frechet_distance,
    gaussian_stats,
    mse,
    psnr,
    run_plugin,
    ssim,
)
from .rgba import (
    CANONICAL_BACKGROUNDS,
    CanonicalBackgroundSet,
    RgbaImage,
    blend,
    load_image,
    save_rgb,
)

PAIRWISE_FUNCS: Dict[str, Callable] = {
    "mse": mse,
    "psnr": psnr,
    "ssim": ssim,
}

_BACKGROUND_NAMES = CANONICAL_BACKGROUNDS.names


@dataclass(frozen=True)
class MetricReport:
    """Per-metric background-averaged scores for one evaluated model."""

    dataset: str
    rows: Dict[str, M4Result]
    subtypes: Dict[str, Dict[str, M4Result]] = field(default_factory=dict)

    def __post_init__(self):
        for group in [self.rows, *self.subtypes.values()]:
            for name, row in group.items():
                if row.metric != name:
                    raise InputError(
                        "row key %r does not match metric name %r"
                        % (name, row.metric)
                    )
                if set(row.per_background) != set(_BACKGROUND_NAMES):
                    raise InputError(
                        "metric %r does not carry the canonical background labels"
                        % name
                    )


@dataclass(frozen=True)
class ComparisonRow:
    """Candidate-minus-baseline deltas for one metric."""

    metric: str
    per_background: Dict[str, float]
    overall_delta: float
    improvement: bool


@dataclass(frozen=True)
class Comparison:
    """Two reports side by side with per-cell deltas."""

    baseline: MetricReport
    candidate: MetricReport
    rows: Dict[str, ComparisonRow]


def _match_pairs(gt_dir: str, pred_dir: str) -> Sequence[Tuple[str, str, str]]:
    def stem_map(directory):
        mapping = {}
        try:
            names = sorted(os.listdir(directory))
        except OSError as exc:
            raise InputError("cannot list directory %r: %s" % (directory, exc)) from exc
        for name in names:
            path = os.path.join(directory, name)
            if not os.path.isfile(path):
                continue
            stem = os.path.splitext(name)[0]
            if stem in mapping:
                raise InputError(
                    "duplicate stem %r in %r (%s and %s)"
                    % (stem, directory, mapping[stem], name)
                )
            mapping[stem] = path
        return mapping

    gt = stem_map(gt_dir)
    pred = stem_map(pred_dir)
    missing_pred = sorted(set(gt) - set(pred))
    missing_gt = sorted(set(pred) - set(gt))
    if missing_pred or missing_gt:
        raise InputError(
            "unmatched filenames: missing from pred %s, missing from gt %s"
            % (missing_pred, missing_gt)
        )
    if not gt:
        raise InputError("no image pairs found")
    return [(stem, gt[stem], pred[stem]) for stem in sorted(gt)]


def _m4_from_slots(metric: str, slots: np.ndarray, names: Sequence[str],
                   columns: Optional[np.ndarray] = None) -> M4Result:
    per_background = {}
    for i, name in enumerate(names):
        row = slots[i] if columns is None else slots[i][columns]
        per_background[name] = float(np.mean(row))
    return M4Result(
        metric=metric,
        per_background=per_background,
        overall=aggregate_overall(list(per_background.values())),
    )


def _fid_rows(features_dir: str, names: Sequence[str]) -> M4Result:
    per_background = {}
    for name in names:
        gt_path = os.path.join(features_dir, "gt_%s.afs" % name)
        pred_path = os.path.join(features_dir, "pred_%s.afs" % name)
        for path in (gt_path, pred_path):
            if not os.path.isfile(path):
                raise InputError("missing feature file %r" % path)
        gt_feats, gt_meta = read_afs1(gt_path)
        pred_feats, pred_meta = read_afs1(pred_path)
        gt_tag = gt_meta.get("extractor")
        pred_tag = pred_meta.get("extractor")
        if gt_tag != pred_tag:
            raise InputError(
                "feature extractor tags differ for %r: %r vs %r"
                % (name, gt_tag, pred_tag)
            )
        per_background[name] = frechet_distance(
            gaussian_stats(gt_feats), gaussian_stats(pred_feats)
        )
    return M4Result(
        metric="fid",
        per_background=per_background,
        overall=aggregate_overall(list(per_background.values())),
    )


def run_eval(
    gt_dir: str,
    pred_dir: str,
    metrics: Sequence[str] = ("mse", "psnr", "ssim"),
    backgrounds: CanonicalBackgroundSet = CANONICAL_BACKGROUNDS,
    plugins: Sequence[PluginConfig] = (),
    features_dir: Optional[str] = None,
    threads: int = 1,
    dataset: str = "",
    subtype_labels: Optional[Dict[str, str]] = None,
) -> MetricReport:
    """Evaluate a prediction directory against ground truth.

    Pairs are matched by filename stem; a stem present on only one side
    is a hard error. Pairwise metrics run over (background, pair) work
    items on a thread pool; "fid" is read per background from feature
    files named gt_<background>.afs / pred_<background>.afs in
    ``features_dir``; plugin scorers run through the manifest protocol.
    """
    if not metrics and not plugins:
        raise InputError("run_eval needs at least one metric")
    if threads < 1:
        raise InputError("threads must be >= 1, got %d" % threads)
    pairwise = [m for m in metrics if m in PAIRWISE_FUNCS]
    unknown = [m for m in metrics if m not in PAIRWISE_FUNCS and m != "fid"]
    if unknown:
        raise InputError("unknown metrics: %s" % unknown)
    want_fid = "fid" in metrics
    if want_fid and not features_dir:
        raise InputError("fid requires a feature-file directory")

    pairs = _match_pairs(gt_dir, pred_dir)
    stems = [stem for stem, _, _ in pairs]
    gt_images = [load_image(p) for _, p, _ in pairs]
    pred_images = [load_image(p) for _, _, p in pairs]
    n = len(pairs)
    names = backgrounds.names

    slot_arrays = {m: np.empty((len(names), n)) for m in pairwise}

    def eval_cell(bi: int, pi: int) -> None:
        bg = backgrounds[bi]
        a = blend(gt_images[pi], bg)
        b = blend(pred_images[pi], bg)
        for m in pairwise:
            slot_arrays[m][bi, pi] = PAIRWISE_FUNCS[m](a, b)

    if pairwise:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(eval_cell, bi, pi)
                for bi in range(len(names))
                for pi in range(n)
            ]
            for fut in futures:
                fut.result()

    rows: Dict[str, M4Result] = {}
    for m in metrics:
        if m in PAIRWISE_FUNCS:
            rows[m] = _m4_from_slots(m, slot_arrays[m], names)
        elif m == "fid":
            rows[m] = _fid_rows(features_dir, names)

    plugin_slots: Dict[str, np.ndarray] = {}
    for cfg in plugins:
        if cfg.name in rows or cfg.name in plugin_slots:
            raise InputError("duplicate metric name %r" % cfg.name)
        plugin_slots[cfg.name] = _run_plugin_metric(
            cfg, gt_images, pred_images, backgrounds, threads
        )
        rows[cfg.name] = _m4_from_slots(cfg.name, plugin_slots[cfg.name], names)

    subtypes: Dict[str, Dict[str, M4Result]] = {}
    if subtype_labels:
        unknown_stems = sorted(set(subtype_labels) - set(stems))
        if unknown_stems:
            raise InputError(
                "subtype labels reference unknown stems: %s" % unknown_stems
            )
        by_label: Dict[str, list] = {}
        for idx, stem in enumerate(stems):
            label = subtype_labels.get(stem)
            if label is not None:
                by_label.setdefault(label, []).append(idx)
        for label in sorted(by_label):
            columns = np.asarray(by_label[label], dtype=np.intp)
            group: Dict[str, M4Result] = {}
            for m in pairwise:
                group[m] = _m4_from_slots(m, slot_arrays[m], names, columns)
            for name, slots in plugin_slots.items():
                group[name] = _m4_from_slots(name, slots, names, columns)
            # set-level metrics cannot be subset after the fact; fid is
            # deliberately absent from subtype groups
            subtypes[label] = group

    return MetricReport(
        dataset=dataset or os.path.basename(os.path.normpath(gt_dir)),
        rows=rows,
        subtypes=subtypes,
    )


def _run_plugin_metric(
    cfg: PluginConfig,
    gt_images: Sequence[RgbaImage],
    pred_images: Sequence[RgbaImage],
    backgrounds: CanonicalBackgroundSet,
    threads: int,
) -> np.ndarray:
    import tempfile

    names = backgrounds.names
    slots = np.empty((len(names), len(gt_images)))

    def score_background(bi: int) -> None:
        bg = backgrounds[bi]
        with tempfile.TemporaryDirectory(prefix="rgbabench-eval-") as tmp:
            pair_paths = []
            for pi, (x, xhat) in enumerate(zip(gt_images, pred_images)):
                gt_path = os.path.join(tmp, "%d_gt.png" % pi)
                pred_path = os.path.join(tmp, "%d_pred.png" % pi)
                save_rgb(blend(x, bg), gt_path)
                save_rgb(blend(xhat, bg), pred_path)
                pair_paths.append((gt_path, pred_path))
            scores = run_plugin(cfg.command, pair_paths, timeout=cfg.timeout)
        slots[bi] = scores

    if cfg.reentrant and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(score_background, bi) for bi in range(len(names))]
            for fut in futures:
                fut.result()
    else:
        # plugins are serialized unless declared reentrant
        for bi in range(len(names)):
            score_background(bi)
    return slots


def compare(
    baseline: MetricReport,
    candidate: MetricReport,
    descriptors: Optional[Dict[str, MetricDescriptor]] = None,
) -> Comparison:
    """Candidate-minus-baseline deltas per cell, with an improvement flag
    driven by each metric's declared direction."""
    table = dict(DESCRIPTORS)
    if descriptors:
        table.update(descriptors)
    if set(baseline.rows) != set(candidate.rows):
        raise InputError(
            "metric sets differ: %s vs %s"
            % (sorted(baseline.rows), sorted(candidate.rows))
        )
    rows: Dict[str, ComparisonRow] = {}
    for name, cand_row in candidate.rows.items():
        base_row = baseline.rows[name]
        if name not in table:
            raise InputError("no direction declared for metric %r" % name)
        direction = table[name].direction
        deltas = {
            bg: cand_row.per_background[bg] - base_row.per_background[bg]
            for bg in _BACKGROUND_NAMES
        }
        overall_delta = cand_row.overall - base_row.overall
        if direction == "higher-better":
            improvement = overall_delta > 0
        else:
            improvement = overall_delta < 0
        rows[name] = ComparisonRow(
            metric=name,
            per_background=deltas,
            overall_delta=overall_delta,
            improvement=improvement,
        )
    return Comparison(baseline=baseline, candidate=candidate, rows=rows)


def _report_payload(report: MetricReport) -> dict:
    def row_payload(row: M4Result) -> dict:
        return {
            "metric": row.metric,
            "per_background": {bg: row.per_background[bg] for bg in _BACKGROUND_NAMES},
            "overall": row.overall,
        }

    return {
        "type": "report",
        "dataset": report.dataset,
        "backgrounds": list(_BACKGROUND_NAMES),
        "rows": [row_payload(r) for r in report.rows.values()],
        "subtypes": {
            label: [row_payload(r) for r in group.values()]
            for label, group in report.subtypes.items()
        },
    }


def _comparison_payload(comparison: Comparison) -> dict:
    return {
        "type": "comparison",
        "baseline": _report_payload(comparison.baseline),
        "candidate": _report_payload(comparison.candidate),
        "rows": [
            {
                "metric": row.metric,
                "delta_per_background": {
                    bg: row.per_background[bg] for bg in _BACKGROUND_NAMES
                },
                "delta_overall": row.overall_delta,
                "improvement": row.improvement,
            }
            for row in comparison.rows.values()
        ],
    }


def _csv_report(report: MetricReport) -> str:
    header = "group,metric," + ",".join(_BACKGROUND_NAMES) + ",overall"
    lines = [header]

    def add_rows(group_label: str, rows: Dict[str, M4Result]) -> None:
        for row in rows.values():
            cells = ["%.4f" % row.per_background[bg] for bg in _BACKGROUND_NAMES]
            lines.append(
                "%s,%s,%s,%.4f" % (group_label, row.metric, ",".join(cells), row.overall)
            )

    add_rows("all", report.rows)
    for label in report.subtypes:
        add_rows(label, report.subtypes[label])
    return "\n".join(lines) + "\n"


def _csv_comparison(comparison: Comparison) -> str:
    header = "metric," + ",".join(_BACKGROUND_NAMES) + ",overall,improvement"
    lines = [header]
    for row in comparison.rows.values():
        cells = ["%+.4f" % row.per_background[bg] for bg in _BACKGROUND_NAMES]
        lines.append(
            "%s,%s,%+.4f,%s"
            % (row.metric, ",".join(cells), row.overall_delta,
               "yes" if row.improvement else "no")
        )
    return "\n".join(lines) + "\n"


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join(["---"] * len(header)) + "|")
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def _md_report(report: MetricReport) -> str:
    header = ["Metric", *_BACKGROUND_NAMES, "Overall"]

    def table_for(rows: Dict[str, M4Result]) -> str:
        body = [
            [
                row.metric,
                *["%.4f" % row.per_background[bg] for bg in _BACKGROUND_NAMES],
                "%.4f" % row.overall,
            ]
            for row in rows.values()
        ]
        return _md_table(header, body)

    parts = ["# Evaluation: %s" % report.dataset, "", table_for(report.rows)]
    for label in report.subtypes:
        parts.extend(["", "## %s" % label, "", table_for(report.subtypes[label])])
    return "\n".join(parts) + "\n"


def _md_comparison(comparison: Comparison) -> str:
    header = ["Metric", *_BACKGROUND_NAMES, "Overall", "Better"]
    body = []
    for name, row in comparison.rows.items():
        cand = comparison.candidate.rows[name]
        body.append(
            [
                name,
                *["%.4f" % cand.per_background[bg] for bg in _BACKGROUND_NAMES],
                "%.4f" % cand.overall,
                "yes" if row.improvement else "no",
            ]
        )
        body.append(
            [
                "Δ",
                *["%+.4f" % row.per_background[bg] for bg in _BACKGROUND_NAMES],
                "%+.4f" % row.overall_delta,
                "",
            ]
        )
    title = "# Comparison: %s vs %s" % (
        comparison.candidate.dataset,
        comparison.baseline.dataset,
    )
    return "\n".join([title, "", _md_table(header, body)]) + "\n"


def emit(obj, fmt: str = "json") -> bytes:
    """Serialize a report or comparison deterministically.

    JSON keeps full float precision; CSV and markdown print 4 decimals
    with columns in canonical background order.
    """
    if isinstance(obj, MetricReport):
        if fmt == "json":
            text = json.dumps(_report_payload(obj), indent=2) + "\n"
        elif fmt == "csv":
            text = _csv_report(obj)
        elif fmt == "markdown":
            text = _md_report(obj)
        else:
            raise InputError("unknown format %r" % (fmt,))
    elif isinstance(obj, Comparison):
        if fmt == "json":
            text = json.dumps(_comparison_payload(obj), indent=2) + "\n"
        elif fmt == "csv":
            text = _csv_comparison(obj)
        elif fmt == "markdown":
            text = _md_comparison(obj)
        else:
            raise InputError("unknown format %r" % (fmt,))
    else:
        raise InputError("emit expects a MetricReport or Comparison")
    return text.encode("utf-8")


def _rows_from_payload(payload_rows) -> Dict[str, M4Result]:
    rows: Dict[str, M4Result] = {}
    for entry in payload_rows:
        row = M4Result(
            metric=entry["metric"],
            per_background={
                bg: float(v) for bg, v in entry["per_background"].items()
            },
            overall=float(entry["overall"]),
        )
        rows[row.metric] = row
    return rows


def parse_report(data: bytes) -> MetricReport:
    """Inverse of ``emit(report, "json")``; emit(parse(emit(r))) is
    byte-identical."""
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError("not a report json: %s" % exc) from exc
    if payload.get("type") != "report":
        raise InputError("json payload is not a report")
    try:
        return MetricReport(
            dataset=payload["dataset"],
            rows=_rows_from_payload(payload["rows"]),
            subtypes={
                label: _rows_from_payload(rows)
                for label, rows in payload.get("subtypes", {}).items()
            },
        )
    except KeyError as exc:
        raise InputError("report json missing key %s" % exc) from exc
