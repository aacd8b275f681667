"""Command-line pipeline driver.

Commands: simulate, chart, evaluate, optimize, all. Every command is a pure
function of (scene file, flags, seed): re-running writes byte-identical
artifacts. Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codebook as cb
from . import features
from .channel import EmsConfiguration, write_channel_dump
from .embedding import TsneParams
from .metrics import evaluate_embedding, write_cdf_csv, write_metric_csv, write_quantiles_json
from .pipeline import (
    PipelineParams,
    build_link_bundle,
    channel_matrix,
    chart_embedding,
    covariance_features,
    ground_truth_2d,
    select_anchors,
)
from .scene import Scene, SceneError, load_scene


class UsageError(ValueError):
    pass


CHANNEL_FILE = "channels.cch1"
DISSIMILARITY_FILE = "dissimilarity.ccd1"
EMBEDDING_FILE = "embedding.csv"
TRACE_FILE = "kl_trace.csv"
METRICS_FILE = "metrics.csv"
QUANTILES_FILE = "quantiles.json"
SEARCH_CSV = "search.csv"
SEARCH_JSON = "search_best.json"


def _parse_alphas(text):
    try:
        alphas = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --alpha list {text!r}: {exc}") from exc
    if not alphas:
        raise UsageError("--alpha list must not be empty")
    return alphas


def parse_config_spec(text: str, scene: Scene) -> EmsConfiguration:
    """Parse --config: 'baseline', 'specular', or 'codeword a1,a2,...'."""
    spec = text.strip()
    if spec == "baseline":
        return EmsConfiguration.baseline(scene.n_panels)
    if spec == "specular":
        return EmsConfiguration.specular(scene)
    for sep in (" ", ":", "="):
        if spec.startswith("codeword" + sep):
            body = spec[len("codeword") + 1 :]
            break
    else:
        raise UsageError(f"--config must be baseline, specular, or 'codeword LIST'; got {text!r}")
    try:
        slopes = [int(x) for x in body.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad codeword list {body!r}: {exc}") from exc
    if len(slopes) != scene.n_panels:
        raise UsageError(f"codeword list has {len(slopes)} entries, scene has {scene.n_panels} panels")
    phases = tuple(
        cb.ramp_codeword(panel.cols, slope).phases_for(panel)
        for panel, slope in zip(scene.panels, slopes)
    )
    return EmsConfiguration(phases=phases)


@dataclass
class RunConfig:
    scene: Scene
    out: Path
    seed: int
    config_spec: str
    params: PipelineParams
    metric: str
    objective_alpha: float
    codebook_size: int
    search: str
    budget: int
    jobs: int


def _build_run_config(args) -> RunConfig:
    try:
        scene = load_scene(args.scene)
    except SceneError as exc:
        raise UsageError(str(exc)) from exc
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must fit in an unsigned 64-bit integer")
    tsne = TsneParams(perplexity=args.perplexity, iterations=args.iters)
    try:
        params = PipelineParams(
            tsne=tsne,
            snapshots=args.snapshots,
            supervision=args.supervision,
            kappa=args.kappa,
            alphas=_parse_alphas(args.alpha),
            neighbor_source=args.neighbor_source,
            tw_variant=args.tw_variant,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.metric not in ("le", "tw", "ct"):
        raise UsageError(f"--metric must be le, tw, or ct; got {args.metric!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return RunConfig(
        scene=scene,
        out=out,
        seed=args.seed,
        config_spec=args.config,
        params=params,
        metric=args.metric,
        objective_alpha=args.objective_alpha,
        codebook_size=args.codebook_size,
        search=args.search,
        budget=args.budget,
        jobs=args.jobs,
    )


def cmd_simulate(rc: RunConfig) -> int:
    scene = rc.scene
    config = parse_config_spec(rc.config_spec, scene)
    bundle = build_link_bundle(scene)
    channels = channel_matrix(bundle, config)
    write_channel_dump(rc.out / CHANNEL_FILE, channels)
    feats = covariance_features(channels, scene, rc.params.snapshots, rc.seed, config)
    d = features.dissimilarity_matrix(feats)
    features.write_dissimilarity_cache(rc.out / DISSIMILARITY_FILE, d)
    print(f"simulate: wrote {CHANNEL_FILE} and {DISSIMILARITY_FILE} for {scene.n_points} points")
    return 0


def cmd_chart(rc: RunConfig) -> int:
    cache = rc.out / DISSIMILARITY_FILE
    if not cache.exists():
        raise FileNotFoundError(f"missing dissimilarity cache {cache}; run `simulate` into this directory first")
    d = features.read_dissimilarity_cache(cache)
    scene = rc.scene
    if d.shape[0] != scene.n_points:
        raise ValueError(f"cache covers {d.shape[0]} points but the scene has {scene.n_points}")
    truth = ground_truth_2d(scene)
    anchors = select_anchors(scene.n_points, rc.params.supervision, rc.seed)
    embedding = chart_embedding(d, truth, anchors, rc.params, rc.seed)

    with open(rc.out / EMBEDDING_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "x_true", "y_true", "x_hat", "y_hat", "is_anchor"])
        for u in range(scene.n_points):
            writer.writerow(
                [
                    u,
                    f"{truth[u, 0]:.17g}",
                    f"{truth[u, 1]:.17g}",
                    f"{embedding.coords[u, 0]:.17g}",
                    f"{embedding.coords[u, 1]:.17g}",
                    int(embedding.is_anchor[u]),
                ]
            )
    with open(rc.out / TRACE_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "kl"])
        for it, kl in enumerate(embedding.kl_trace):
            writer.writerow([it, f"{kl:.17g}"])
    print(f"chart: embedded {scene.n_points} points ({anchors.size} anchors) -> {EMBEDDING_FILE}")
    return 0


def _read_embedding_csv(path):
    truth, coords, flags = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            truth.append([float(row["x_true"]), float(row["y_true"])])
            coords.append([float(row["x_hat"]), float(row["y_hat"])])
            flags.append(bool(int(row["is_anchor"])))
    return np.array(truth), np.array(coords), np.array(flags, dtype=bool)


def cmd_evaluate(rc: RunConfig) -> int:
    emb_path = rc.out / EMBEDDING_FILE
    if not emb_path.exists():
        raise FileNotFoundError(f"missing embedding {emb_path}; run `chart` into this directory first")
    cache = rc.out / DISSIMILARITY_FILE
    if not cache.exists():
        raise FileNotFoundError(f"missing dissimilarity cache {cache}; run `simulate` into this directory first")
    truth, coords, is_anchor = _read_embedding_csv(emb_path)
    d = features.read_dissimilarity_cache(cache)
    report = evaluate_embedding(
        d,
        coords,
        is_anchor,
        truth,
        kappa=rc.params.kappa,
        alphas=rc.params.alphas,
        neighbor_source=rc.params.neighbor_source,
        tw_variant=rc.params.tw_variant,
    )
    write_metric_csv(rc.out / METRICS_FILE, report)
    write_cdf_csv(rc.out / "cdf_le.csv", report.le)
    write_cdf_csv(rc.out / "cdf_tw.csv", report.tw)
    write_cdf_csv(rc.out / "cdf_ct.csv", report.ct)
    write_quantiles_json(rc.out / QUANTILES_FILE, report)
    print(f"evaluate: {report.indices.size} unlabeled points -> {METRICS_FILE}, {QUANTILES_FILE}")
    return 0


def cmd_optimize(rc: RunConfig) -> int:
    scene = rc.scene
    if scene.n_panels < 1:
        raise UsageError("optimize needs a scene with at least one panel")
    objective = (rc.metric, rc.objective_alpha)
    seeds = [rc.seed]
    books = [cb.dft_gradient_codebook(panel.cols, rc.codebook_size) for panel in scene.panels]
    mode = rc.search
    if mode == "exhaustive":
        report = cb.exhaustive_search(
            scene, books, objective, seeds, rc.params, budget=rc.budget, jobs=rc.jobs
        )
    elif mode == "greedy":
        report = cb.greedy_search(
            scene, books, objective, seeds, rc.params, budget=rc.budget, jobs=rc.jobs
        )
    elif mode.startswith("single:"):
        try:
            index = int(mode.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad --search value {mode!r}") from exc
        if not 0 <= index < scene.n_panels:
            raise UsageError(f"--search single:{index}: panel index out of range")
        report = cb.single_panel_sweep(
            scene, index, books[index], objective, seeds, rc.params, budget=rc.budget, jobs=rc.jobs
        )
    else:
        raise UsageError(f"--search must be exhaustive, greedy, or single:J; got {mode!r}")

    cb.write_search_csv(rc.out / SEARCH_CSV, report, scene.n_panels)
    cb.write_search_json(rc.out / SEARCH_JSON, report, scene, books)
    best = report.best
    slopes = ",".join("off" if s is None else str(s) for s in best.slopes)
    print(
        f"optimize: {report.evaluation_count} evaluations; best slopes [{slopes}] "
        f"Q_{rc.metric}({rc.objective_alpha:g}) = {best.objective:.6g}"
    )
    return 0


def cmd_all(rc: RunConfig) -> int:
    for step in (cmd_simulate, cmd_chart, cmd_evaluate):
        code = step(rc)
        if code != 0:
            return code
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emschart",
        description="Channel charting with passive phase-shifting panels: "
        "simulate channels, chart them, score the chart, and search phase codebooks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": ("synthesize channels and the dissimilarity cache", cmd_simulate),
        "chart": ("run anchored t-SNE on the cached dissimilarities", cmd_chart),
        "evaluate": ("score an embedding (LE/TW/CT, CDFs, quantiles)", cmd_evaluate),
        "optimize": ("search codeword combinations for the best quantile objective", cmd_optimize),
        "all": ("simulate, chart, and evaluate in sequence", cmd_all),
    }
    for name, (help_text, func) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scene", required=True, help="scene JSON path or bundled scene name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="root seed (u64); all randomness derives from it")
        p.add_argument("--config", default="specular", help="baseline | specular | 'codeword a1,a2,...'")
        p.add_argument("--perplexity", type=float, default=30.0)
        p.add_argument("--iters", type=int, default=1000)
        p.add_argument("--kappa", type=int, default=51)
        p.add_argument("--alpha", default="0.5,0.9,0.95", help="comma-separated quantile levels")
        p.add_argument("--metric", default="le", help="search objective metric: le | tw | ct")
        p.add_argument("--objective-alpha", type=float, default=0.9, help="quantile level the search minimizes")
        p.add_argument("--search", default="exhaustive", help="exhaustive | greedy | single:J")
        p.add_argument("--codebook-size", type=int, default=11, help="codewords per panel (odd)")
        p.add_argument("--budget", type=int, default=cb.DEFAULT_SEARCH_BUDGET, help="max combinations a search may evaluate")
        p.add_argument("--supervision", type=float, default=0.15, help="anchor fraction in (0, 1)")
        p.add_argument("--snapshots", type=int, default=64, help="covariance snapshots per point")
        p.add_argument(
            "--neighbor-source",
            default="dissimilarity",
            choices=["dissimilarity", "position"],
            help="primary space for TW/CT neighborhoods",
        )
        p.add_argument(
            "--tw-variant",
            default="classical",
            choices=["classical", "literal"],
            help="rank used to charge TW/CT violations",
        )
        p.add_argument("--jobs", type=int, default=None, help="parallel workers for searches (default: cores)")
        p.set_defaults(func=func)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs is None:
        import os

        args.jobs = os.cpu_count() or 1
    try:
        rc = _build_run_config(args)
        return args.func(rc)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
