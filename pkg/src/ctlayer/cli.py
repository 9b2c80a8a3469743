"""Command-line pipeline: deterministic subcommands with machine-readable outputs.

Command groups:
    ct  score | curve          copy-detection scores over embedding triples
    fp  build | match | eval | baseline      fingerprint db operations
    sim heatmap                all-pairs curve similarity
    aug rotate | downup | shuffle | bg-gauss | bg-image   dataset curation

Exit codes: 0 success, 1 invocation/validation error, 2 data error. Outputs
are written atomically (temp file + rename) and are byte-identical given the
same argv and input files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ct_core, fingerprint, imageops, tensor_io
from .errors import CtlayerError, UsageError
from .partition import fit_kmeans

_EPILOG = "seeded runs are reproducible byte for byte"


@dataclass(frozen=True)
class RunConfig:
    """A parsed, range-validated invocation: command plus flag values."""

    command: str
    params: dict


class _Parser(argparse.ArgumentParser):
    # argparse exits on error by default; route through the typed error instead
    def error(self, message: str):
        raise UsageError(message)


def _int_at_least(minimum: int, name: str):
    def convert(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer")
        if value < minimum:
            raise argparse.ArgumentTypeError(f"{name} must be >= {minimum}")
        return value

    return convert


def _float_at_least(minimum: float, name: str):
    def convert(text: str) -> float:
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number")
        if value < minimum:
            raise argparse.ArgumentTypeError(f"{name} must be >= {minimum}")
        return value

    return convert


def _add_triple_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--train", required=True, help="training embeddings file")
    parser.add_argument("--test", required=True, help="test embeddings file")
    parser.add_argument("--gen", required=True, help="generated embeddings file")
    parser.add_argument("--format", choices=("cte1", "csv"), default="cte1", help="input format tag")


def _add_ct_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=_int_at_least(1, "k"), default=5, help="cells per layer")
    parser.add_argument("--tau-p", type=_int_at_least(1, "tau-p"), default=10, help="min test samples per cell")
    parser.add_argument("--tau-q", type=_int_at_least(1, "tau-q"), default=10, help="min generated samples per cell")
    parser.add_argument("--seed", type=_int_at_least(0, "seed"), default=0, help="PRNG seed")
    parser.add_argument("--max-iters", type=_int_at_least(1, "max-iters"), default=100)
    parser.add_argument("--tol", type=_float_at_least(0.0, "tol"), default=1e-6)
    parser.add_argument("--no-tie-correction", action="store_true", help="use the plain rank variance")
    parser.add_argument("--threads", type=_int_at_least(1, "threads"), default=1,
                        help="parallelism cap; outputs are independent of it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctlayer", description=__doc__.splitlines()[0], epilog=_EPILOG)
    groups = parser.add_subparsers(dest="group", required=True, metavar="{ct,fp,sim,aug}")

    ct = groups.add_parser("ct", help="copy-detection scores")
    ct_sub = ct.add_subparsers(dest="command", required=True)

    score = ct_sub.add_parser("score", help="single-layer score with cell diagnostics")
    _add_triple_flags(score)
    _add_ct_flags(score)
    score.add_argument("--layer", type=_int_at_least(0, "layer"), default=0)
    score.add_argument("--label", default=None)
    score.add_argument("--out", default=None, help="diagnostics JSON path")

    curve = ct_sub.add_parser("curve", help="per-layer score curve")
    _add_triple_flags(curve)
    _add_ct_flags(curve)
    curve.add_argument("--label", default=None)
    curve.add_argument("--out", required=True, help="curve CSV path")
    curve.add_argument("--json", default=None, help="curve JSON path")
    curve.add_argument("--diagnostics", default=None, help="per-cell diagnostics JSON path")
    curve.add_argument("--svg", default=None, help="line-plot SVG path")

    fp = groups.add_parser("fp", help="fingerprint db operations")
    fp_sub = fp.add_subparsers(dest="command", required=True)

    build = fp_sub.add_parser("build", help="assemble a db from a curve manifest")
    build.add_argument("--manifest", required=True,
                       help="CSV: label,architecture,curve_json[,features_json]")
    build.add_argument("--out", required=True, help="db JSON path")

    match = fp_sub.add_parser("match", help="match one query against a db")
    match.add_argument("--db", required=True)
    query_src = match.add_mutually_exclusive_group(required=True)
    query_src.add_argument("--query", help="query curve JSON")
    query_src.add_argument("--query-features", help="query baseline-features JSON")
    match.add_argument("--metric", choices=fingerprint.METRICS, default="combined")
    match.add_argument("--out", default=None, help="match result JSON path")

    evalp = fp_sub.add_parser("eval", help="accuracy over a query manifest")
    evalp.add_argument("--db", required=True)
    evalp.add_argument("--queries", required=True,
                       help="CSV: label,architecture,curve_json (or features_json with --features)")
    evalp.add_argument("--metric", choices=fingerprint.METRICS, default="combined")
    evalp.add_argument("--features", action="store_true", help="match baseline features instead of curves")
    evalp.add_argument("--out", default=None, help="per-query results JSON path")

    baseline = fp_sub.add_parser("baseline", help="pixel moments + Fréchet feature vector")
    baseline.add_argument("--images", required=True, help="directory of PNG images")
    baseline.add_argument("--embeds", required=True, help="dataset embeddings (CTE1; final layer used)")
    baseline.add_argument("--ref", required=True, help="reference embeddings (CTE1; final layer used)")
    baseline.add_argument("--format", choices=("cte1", "csv"), default="cte1")
    baseline.add_argument("--label", default=None)
    baseline.add_argument("--out", required=True, help="features JSON path")

    sim = groups.add_parser("sim", help="curve similarity")
    sim_sub = sim.add_subparsers(dest="command", required=True)
    heatmap = sim_sub.add_parser("heatmap", help="all-pairs cosine similarity matrix")
    heatmap.add_argument("--curves", required=True, help="CSV: label,family,curve_json")
    heatmap.add_argument("--out", required=True, help="heatmap CSV path")
    heatmap.add_argument("--json", default=None, help="intra/inter mean JSON path")
    heatmap.add_argument("--svg", default=None, help="heatmap SVG path")

    aug = groups.add_parser("aug", help="dataset curation transforms")
    aug_sub = aug.add_subparsers(dest="command", required=True)

    def _aug_common(p: argparse.ArgumentParser, needs_mask: bool = False) -> None:
        p.add_argument("--input", required=True, help="PNG file or directory")
        if needs_mask:
            p.add_argument("--mask", required=True, help="mask PNG file or directory")
        p.add_argument("--out", required=True, help="output PNG file or directory")
        p.add_argument("--seed", type=_int_at_least(0, "seed"), default=0)
        p.add_argument("--manifest", default=None, help="manifest CSV path")

    rot = aug_sub.add_parser("rotate", help="right-angle or bilinear rotation")
    _aug_common(rot)
    rot.add_argument("--angle", type=float, default=None,
                     help="fixed angle; default picks 90/180/270 per image from the seed")
    rot.add_argument("--mode", choices=("right-angle", "bilinear"), default="right-angle")

    downup = aug_sub.add_parser("downup", help="average-pool down, bilinear up")
    _aug_common(downup)
    downup.add_argument("--factor", type=_int_at_least(1, "factor"), default=2)

    shuffle = aug_sub.add_parser("shuffle", help="grid patch shuffle")
    _aug_common(shuffle)
    shuffle.add_argument("--grid", type=_int_at_least(1, "grid"), default=4)
    shuffle.add_argument("--perm", default=None, help="comma-separated permutation; default random per seed")

    bg_gauss = aug_sub.add_parser("bg-gauss", help="composite foreground onto Gaussian noise")
    _aug_common(bg_gauss, needs_mask=True)
    bg_gauss.add_argument("--mean", type=float, default=0.5)
    bg_gauss.add_argument("--std", type=_float_at_least(0.0, "std"), default=0.25)

    bg_image = aug_sub.add_parser("bg-image", help="composite foreground onto a background image")
    _aug_common(bg_image, needs_mask=True)
    bg_image.add_argument("--bg", required=True, help="background PNG file or directory")

    return parser


def parse_args(argv) -> RunConfig:
    """Validate argv into a RunConfig or raise UsageError naming the problem."""
    parser = build_parser()
    namespace = parser.parse_args(list(argv))
    params = vars(namespace)
    command = f"{params.pop('group')} {params.pop('command')}"
    return RunConfig(command=command, params=params)


# ---------------------------------------------------------------------------
# output helpers


def _write_atomic_bytes(path, data: bytes) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(target.parent), prefix=target.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_atomic_text(path, text: str) -> None:
    _write_atomic_bytes(path, text.encode("utf-8"))


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# SVG plots (fixed 640x480 viewBox, labeled axes)


def svg_curve(curve: ct_core.CtCurve) -> str:
    width, height = 640, 480
    left, right, top, bottom = 60, 20, 20, 50
    plot_w = width - left - right
    plot_h = height - top - bottom
    scores = list(curve.scores)
    lo, hi = min(scores), max(scores)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo
    n = len(scores)

    def x(i: int) -> float:
        return left + (plot_w * i / max(n - 1, 1))

    def y(v: float) -> float:
        return top + plot_h * (1.0 - (v - lo) / span)

    points = " ".join(f"{x(i):.2f},{y(v):.2f}" for i, v in enumerate(scores))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="black"/>',
        f'<polyline points="{points}" fill="none" stroke="steelblue" stroke-width="2"/>',
    ]
    for i in range(n):
        parts.append(f'<circle cx="{x(i):.2f}" cy="{y(scores[i]):.2f}" r="3" fill="steelblue"/>')
        parts.append(
            f'<text x="{x(i):.2f}" y="{top + plot_h + 18}" font-size="11" text-anchor="middle">{i}</text>'
        )
    for frac in (0.0, 0.5, 1.0):
        v = lo + span * frac
        parts.append(
            f'<text x="{left - 6}" y="{y(v):.2f}" font-size="11" text-anchor="end">{v:.2f}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.0f}" y="{height - 12}" font-size="13" text-anchor="middle">layer</text>'
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.0f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.0f})">ct</text>'
    )
    parts.append(f'<text x="{width / 2:.0f}" y="14" font-size="13" text-anchor="middle">{curve.label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_heatmap(labels, sim: np.ndarray) -> str:
    width, height = 640, 480
    left, top = 120, 90
    n = len(labels)
    cell = min((width - left - 20) / n, (height - top - 20) / n)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(n):
        for j in range(n):
            shade = int(round(255 * (sim[i, j] + 1.0) / 2.0))
            shade = min(max(shade, 0), 255)
            parts.append(
                f'<rect x="{left + j * cell:.2f}" y="{top + i * cell:.2f}" '
                f'width="{cell:.2f}" height="{cell:.2f}" fill="rgb({shade},{shade},{shade})" '
                f'stroke="gray" stroke-width="0.5"/>'
            )
    for i, label in enumerate(labels):
        parts.append(
            f'<text x="{left - 6}" y="{top + (i + 0.65) * cell:.2f}" font-size="10" text-anchor="end">{label}</text>'
        )
        parts.append(
            f'<text x="{left + (i + 0.5) * cell:.2f}" y="{top - 8}" font-size="10" text-anchor="middle" '
            f'transform="rotate(-60 {left + (i + 0.5) * cell:.2f} {top - 8})">{label}</text>'
        )
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="13" text-anchor="middle">pairwise cosine similarity</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# command implementations


def _load_triple(params) -> tuple[tensor_io.EmbeddingSet, tensor_io.EmbeddingSet, tensor_io.EmbeddingSet]:
    fmt = params["format"]
    train = tensor_io.load_embedding_set(_require_file(params["train"], "--train file"), fmt, label="train")
    test = tensor_io.load_embedding_set(_require_file(params["test"], "--test file"), fmt, label="test")
    gen_path = _require_file(params["gen"], "--gen file")
    gen = tensor_io.load_embedding_set(gen_path, fmt, label=Path(gen_path).stem)
    return train, test, gen


def _ct_config(params) -> ct_core.CtConfig:
    return ct_core.CtConfig(
        k=params["k"],
        seed=params["seed"],
        tau_p=params["tau_p"],
        tau_q=params["tau_q"],
        max_iters=params["max_iters"],
        tol=params["tol"],
        tie_correction=not params["no_tie_correction"],
    )


def _cmd_ct_score(params) -> None:
    train, test, gen = _load_triple(params)
    cfg = _ct_config(params)
    layer = params["layer"]
    triple = tensor_io.validate_triple(train, test, gen)
    if layer >= triple.layer_count:
        raise UsageError(f"--layer {layer} out of range: sets have {triple.layer_count} layers")
    part = fit_kmeans(train.layers[layer], cfg.k, seed=cfg.seed, max_iters=cfg.max_iters,
                      tol=cfg.tol, n_init=cfg.n_init)
    cells = ct_core.cell_ct_stats(part, train.layers[layer], test.layers[layer], gen.layers[layer],
                                  tau_p=cfg.tau_p, tau_q=cfg.tau_q, tie_correction=cfg.tie_correction)
    score = ct_core.ct_score(cells)
    label = params["label"] if params["label"] is not None else gen.label
    if params["out"]:
        obj = {
            "label": label,
            "config": {"k": cfg.k, "seed": cfg.seed, "tau_p": cfg.tau_p, "tau_q": cfg.tau_q,
                       "max_iters": cfg.max_iters, "tol": cfg.tol,
                       "tie_correction": cfg.tie_correction, "n_init": cfg.n_init},
            "per_layer": [{
                "layer": layer,
                "ct": score,
                "cells": [{"cell_index": c.cell_index, "n_test": c.n_test, "n_gen": c.n_gen,
                           "weight": c.weight, "z_u": c.z_u, "included": c.included} for c in cells],
            }],
        }
        _write_atomic_text(params["out"], _json_text(obj))
    print(repr(score))


def _cmd_ct_curve(params) -> None:
    train, test, gen = _load_triple(params)
    cfg = _ct_config(params)
    curve, diagnostics = ct_core.ct_curve(train, test, gen, cfg, label=params["label"])
    _write_atomic_text(params["out"], ct_core.curve_to_csv(curve))
    if params["json"]:
        _write_atomic_text(params["json"], _json_text(ct_core.curve_to_json_obj(curve)))
    if params["diagnostics"]:
        _write_atomic_text(params["diagnostics"], _json_text(ct_core.diagnostics_to_json_obj(curve, diagnostics)))
    if params["svg"]:
        _write_atomic_text(params["svg"], svg_curve(curve))
    print(f"wrote {len(curve.scores)} layer scores to {params['out']}")


def _read_manifest(path, what: str, min_cols: int = 3) -> list[list[str]]:
    rows = []
    with open(_require_file(path, what), newline="", encoding="utf-8") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not field.strip() for field in row):
                continue
            if len(row) < min_cols:
                raise UsageError(f"{what} line {lineno}: expected at least {min_cols} columns")
            rows.append([field.strip() for field in row])
    if not rows:
        raise UsageError(f"{what} is empty")
    return rows


def _load_curve_json(path, what: str) -> ct_core.CtCurve:
    with open(_require_file(path, what), encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise CtlayerError(f"{what} is not valid JSON: {exc}") from exc
    try:
        return ct_core.CtCurve(label=str(obj["label"]), scores=tuple(obj["scores"]))
    except (KeyError, TypeError) as exc:
        raise CtlayerError(f"{what} missing curve fields: {exc}") from exc


def _load_features_json(path, what: str) -> tuple[str, list[float]]:
    with open(_require_file(path, what), encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise CtlayerError(f"{what} is not valid JSON: {exc}") from exc
    try:
        return str(obj.get("label", "")), [float(v) for v in obj["features"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CtlayerError(f"{what} missing feature fields: {exc}") from exc


def _cmd_fp_build(params) -> None:
    rows = _read_manifest(params["manifest"], "--manifest file")
    curves = []
    architectures = []
    features = []
    for row in rows:
        label, arch, curve_path = row[0], row[1], row[2]
        curve = _load_curve_json(curve_path, f"curve file for {label!r}")
        curves.append(ct_core.CtCurve(label=label, scores=curve.scores))
        architectures.append(arch)
        if len(row) > 3 and row[3]:
            features.append(_load_features_json(row[3], f"features file for {label!r}")[1])
        else:
            features.append(None)
    db = fingerprint.build_db(curves, architectures, features)
    _write_atomic_text(params["out"], _json_text(fingerprint.db_to_json_obj(db)))
    print(f"wrote db with {len(db.entries)} entries to {params['out']}")


def _match_result_obj(result: fingerprint.MatchResult) -> dict:
    return {
        "predicted_label": result.predicted_label,
        "metric": result.metric,
        "candidates": [
            {
                "label": c.label,
                "l2_distance": c.l2_distance,
                "cosine_similarity": c.cosine_similarity,
                "combined_rank": c.combined_rank,
            }
            for c in result.candidates
        ],
    }


def _cmd_fp_match(params) -> None:
    db = fingerprint.load_db(_require_file(params["db"], "--db file"))
    if params["query"]:
        query = _load_curve_json(params["query"], "--query file")
        result = fingerprint.match_curve(db, query, params["metric"])
    else:
        _, feats = _load_features_json(params["query_features"], "--query-features file")
        result = fingerprint.match_features(db, feats, params["metric"])
    if params["out"]:
        _write_atomic_text(params["out"], _json_text(_match_result_obj(result)))
    print(result.predicted_label)


def _cmd_fp_eval(params) -> None:
    db = fingerprint.load_db(_require_file(params["db"], "--db file"))
    rows = _read_manifest(params["queries"], "--queries file")
    labels = [row[0] for row in rows]
    architectures = [row[1] for row in rows]
    if params["features"]:
        feats = [_load_features_json(row[2], f"features file for {row[0]!r}")[1] for row in rows]
        accuracy, results = fingerprint.eval_accuracy_features(db, feats, params["metric"], architectures)
    else:
        queries = [
            ct_core.CtCurve(label=row[0], scores=_load_curve_json(row[2], f"curve file for {row[0]!r}").scores)
            for row in rows
        ]
        accuracy, results = fingerprint.eval_accuracy(db, queries, params["metric"], architectures)
    if params["out"]:
        obj = {
            "accuracy": accuracy,
            "metric": params["metric"],
            "queries": [
                {"label": label, "architecture": arch, **_match_result_obj(result)}
                for label, arch, result in zip(labels, architectures, results)
            ],
        }
        _write_atomic_text(params["out"], _json_text(obj))
    print(f"accuracy {accuracy:.3f}")


def _cmd_fp_baseline(params) -> None:
    image_dir = _require_dir(params["images"], "--images directory")
    paths = sorted(image_dir.glob("*.png"))
    if not paths:
        raise UsageError(f"--images directory holds no .png files: {image_dir}")
    images = [imageops.load_image(p) for p in paths]
    pixel_stack = np.stack([img.pixels for img in images])
    embeds = tensor_io.load_embedding_set(_require_file(params["embeds"], "--embeds file"), params["format"])
    ref = tensor_io.load_embedding_set(_require_file(params["ref"], "--ref file"), params["format"])
    features = fingerprint.baseline_features(pixel_stack, embeds.layers[-1], ref.layers[-1])
    label = params["label"] if params["label"] is not None else image_dir.name
    _write_atomic_text(params["out"], _json_text({"label": label, "features": features.tolist()}))
    print(f"wrote {features.size} features to {params['out']}")


def _cmd_sim_heatmap(params) -> None:
    rows = _read_manifest(params["curves"], "--curves file")
    curves = []
    family_of = {}
    for row in rows:
        label, family, curve_path = row[0], row[1], row[2]
        loaded = _load_curve_json(curve_path, f"curve file for {label!r}")
        curves.append(ct_core.CtCurve(label=label, scores=loaded.scores))
        family_of[label] = family
    sim, stats = fingerprint.cosine_heatmap(curves, family_of)
    labels = [c.label for c in curves]
    _write_atomic_text(params["out"], fingerprint.heatmap_to_csv(labels, sim))
    if params["json"]:
        _write_atomic_text(params["json"], _json_text(stats))
    if params["svg"]:
        _write_atomic_text(params["svg"], svg_heatmap(labels, sim))
    intra = "n/a" if stats["intra_mean"] is None else f"{stats['intra_mean']:.6f}"
    inter = "n/a" if stats["inter_mean"] is None else f"{stats['inter_mean']:.6f}"
    print(f"intra_mean {intra} inter_mean {inter}")


# ---------------------------------------------------------------------------
# augmentation commands


def _aug_inputs(params) -> list[Path]:
    source = Path(params["input"])
    if source.is_dir():
        paths = sorted(source.glob("*.png"))
        if not paths:
            raise UsageError(f"--input directory holds no .png files: {source}")
        return paths
    return [_require_file(source, "--input file")]


def _aug_out_path(params, src: Path, many: bool) -> Path:
    out = Path(params["out"])
    if many:
        if out.exists() and not out.is_dir():
            raise UsageError(f"--out must be a directory for directory input: {out}")
        out.mkdir(parents=True, exist_ok=True)
        return out / src.name
    if out.is_dir():
        return out / src.name
    return out


def _mask_for(params, src: Path, many: bool) -> imageops.Mask:
    mask_param = Path(params["mask"])
    if many or mask_param.is_dir():
        mask_path = _require_dir(mask_param, "--mask directory") / src.name
        if not mask_path.is_file():
            raise UsageError(f"mask for {src.name} not found: {mask_path}")
        return imageops.load_mask(mask_path)
    return imageops.load_mask(_require_file(mask_param, "--mask file"))


def _run_aug(params, command: str) -> None:
    sources = _aug_inputs(params)
    many = len(sources) > 1 or Path(params["input"]).is_dir()
    seed = params["seed"]
    manifest_rows = []
    bg_paths = None
    if command == "bg-image":
        bg_param = Path(params["bg"])
        if bg_param.is_dir():
            bg_paths = sorted(bg_param.glob("*.png"))
            if not bg_paths:
                raise UsageError(f"--bg directory holds no .png files: {bg_param}")
        else:
            bg_paths = [_require_file(bg_param, "--bg file")]

    for index, src in enumerate(sources):
        per_seed = seed ^ index
        img = imageops.load_image(src)
        if command == "rotate":
            if params["angle"] is None:
                angle = (90, 180, 270)[np.random.default_rng(per_seed).integers(3)]
            else:
                angle = params["angle"]
                if params["mode"] == "right-angle":
                    if angle not in (0.0, 90.0, 180.0, 270.0):
                        raise UsageError("right-angle mode requires --angle in {0, 90, 180, 270}")
                    angle = int(angle)
            result = imageops.rotate(img, angle, mode=params["mode"])
            detail = f"angle={angle};mode={params['mode']}"
        elif command == "downup":
            result = imageops.down_up(img, params["factor"])
            detail = f"factor={params['factor']}"
        elif command == "shuffle":
            if params["perm"] is not None:
                try:
                    perm = [int(v) for v in params["perm"].split(",")]
                except ValueError:
                    raise UsageError("--perm must be a comma-separated list of integers")
                result = imageops.shuffle_patches(img, grid=params["grid"], perm=perm)
                detail = f"grid={params['grid']};perm={params['perm'].replace(',', ' ')}"
            else:
                result = imageops.shuffle_patches(img, grid=params["grid"], seed=per_seed)
                detail = f"grid={params['grid']}"
        elif command == "bg-gauss":
            mask = _mask_for(params, src, many)
            noise = imageops.gaussian_background(img.width, img.height, params["mean"], params["std"], per_seed)
            result = imageops.composite_background(img, mask, noise)
            detail = f"mean={params['mean']};std={params['std']}"
        elif command == "bg-image":
            mask = _mask_for(params, src, many)
            pick = bg_paths[int(np.random.default_rng(per_seed).integers(len(bg_paths)))]
            bg = imageops.load_image(pick)
            if (bg.width, bg.height) != (img.width, img.height):
                # scale so the background covers the target, then center crop
                scale = max(img.width / bg.width, img.height / bg.height)
                new_w = max(img.width, math.ceil(bg.width * scale))
                new_h = max(img.height, math.ceil(bg.height * scale))
                bg = imageops.bilinear_resize(bg, new_w, new_h)
                bg = imageops.center_crop(bg, img.width, img.height)
            result = imageops.composite_background(img, mask, bg)
            detail = f"bg={pick.name}"
        else:  # pragma: no cover
            raise UsageError(f"unknown aug command {command!r}")

        out_path = _aug_out_path(params, src, many)
        _write_atomic_bytes(out_path, imageops.encode_png(result))
        manifest_rows.append([str(src), command, detail, str(per_seed), str(out_path)])

    if params["manifest"]:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["source", "transform", "params", "seed", "output_path"])
        writer.writerows(manifest_rows)
        _write_atomic_text(params["manifest"], buf.getvalue())
    print(f"wrote {len(manifest_rows)} image(s)")


_HANDLERS = {
    "ct score": _cmd_ct_score,
    "ct curve": _cmd_ct_curve,
    "fp build": _cmd_fp_build,
    "fp match": _cmd_fp_match,
    "fp eval": _cmd_fp_eval,
    "fp baseline": _cmd_fp_baseline,
    "sim heatmap": _cmd_sim_heatmap,
}


def execute(config: RunConfig) -> int:
    """Run a parsed invocation; returns the exit status (0/1/2)."""
    try:
        if config.command.startswith("aug "):
            _run_aug(config.params, config.command.split(" ", 1)[1])
        else:
            handler = _HANDLERS.get(config.command)
            if handler is None:
                raise UsageError(f"unknown command {config.command!r}")
            handler(config.params)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CtlayerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_args(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return execute(config)


if __name__ == "__main__":
    sys.exit(main())
