"""Command-line interface for drsplat."""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np
import typer

from .bench import bench_lut
from .errors import DrSplatError, InvalidArgumentError
from .evaluate import (
    ablation_miou,
    iou_accuracy,
    mean_weighted_iou,
    pseudo_label_gaussians,
    significant_scores,
    voxel_mean_iou,
    voxelize_scene,
)
from .io_utils import (
    MODE_PQ,
    list_views,
    load_json,
    load_query,
    load_rig,
    load_scene_spec,
    read_codebook,
    read_features,
    read_mask_dataset,
    read_matrix,
    read_point_cloud,
    read_scene,
    register_output_paths,
    write_codebook,
    write_features,
    write_mask_dataset,
    write_matrix,
    write_point_cloud,
    write_scene,
)
from .plots import (
    plot_correlation,
    plot_correlation_interactive,
    plot_threshold_sweep,
    plot_threshold_sweep_interactive,
    plot_topk_ablation,
)
from .pq import PQCodebook, compression_ratio, quantization_error, train_codebook
from .query import (
    best_threshold,
    label_counts,
    relevancy_scores,
    score_scene,
    segment_argmax,
    select_threshold,
    threshold_sweep,
    top_matches,
)
from .registration import RegisteredScene, register_scene
from .synthetic import (
    correlation_experiment,
    gen_scene as generate_scene,
    render_masks as render_mask_dataset,
    run_pipeline,
    training_database,
)
from .writers import (
    log_dir_for,
    setup_logging,
    write_json_report,
    write_label_table,
    write_score_dump,
    write_table,
)

app = typer.Typer(help="Register, compress, query and evaluate language features on 3D Gaussian scenes")
logger = logging.getLogger(__name__)

PSEUDO_LABEL_MODES = {"affinity": "affinity", "paper-verbatim": "paper_verbatim"}
THREADS_HELP = "Worker threads, capped by DRSPLAT_THREADS (default: DRSPLAT_THREADS or 1)"


@contextmanager
def _exit_on_error() -> Iterator[None]:
    """Log drsplat errors and exit with status 1."""
    try:
        yield
    except DrSplatError as e:
        logger.error(str(e))
        raise typer.Exit(code=1)


def _load_registered(
    scene_path: Path, features_path: Path, codebook_path: Optional[Path]
) -> Tuple[RegisteredScene, Optional[PQCodebook]]:
    scene = read_scene(scene_path)
    cb = read_codebook(codebook_path) if codebook_path else None
    ff = read_features(features_path, cb)
    if len(ff) != len(scene):
        raise InvalidArgumentError(
            f"Scene has {len(scene)} Gaussians but {features_path} holds {len(ff)} features"
        )
    if ff.mode == MODE_PQ and cb is None:
        raise InvalidArgumentError(f"{features_path} holds PQ codes; pass --codebook")
    rs = RegisteredScene(
        scene=scene,
        kept_indices=np.arange(len(scene)),
        features=ff.features,
        codes=ff.codes,
    )
    return rs, cb


@app.command("gen-scene")
def gen_scene(
    spec: Path = typer.Option(..., "--spec", help="Scene spec JSON"),
    out_scene: Path = typer.Option(..., "--out-scene", help="Output scene (DRSG)"),
    out_points: Path = typer.Option(..., "--out-points", help="Output labeled point cloud (DRPC)"),
    out_labels: Path = typer.Option(..., "--out-labels", help="Output label embeddings (DRSF)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the spec's seed"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Generate a synthetic labeled scene, its label embeddings and a point cloud.
    """
    setup_logging(log_dir_for(out_scene), verbose, quiet)

    with _exit_on_error():
        scene_spec = load_scene_spec(spec)
        if seed is not None:
            scene_spec.seed = seed
        logger.info(
            f"Parameters: gaussians={scene_spec.gaussian_count}, labels={scene_spec.label_count}, "
            f"dim={scene_spec.dim}, seed={scene_spec.seed}"
        )

        scene, embeddings, pc = generate_scene(scene_spec)
        write_scene(out_scene, scene)
        write_point_cloud(out_points, pc)
        write_matrix(out_labels, embeddings)


@app.command("render-masks")
def render_masks(
    scene: Path = typer.Option(..., "--scene", help="Labeled scene (DRSG)"),
    labels: Path = typer.Option(..., "--labels", help="Label embeddings (DRSF)"),
    rig: Path = typer.Option(..., "--rig", help="Camera rig JSON (or a scene spec with a 'rig' key)"),
    sigma: float = typer.Option(0.05, "--sigma", help="Embedding noise per mask"),
    out: Path = typer.Option(..., "--out", help="Output mask dataset (DRMD)"),
    seed: int = typer.Option(0, "--seed", help="Seed for embedding noise"),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Render per-(view, label) masks with noisy label embeddings.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        ds = render_mask_dataset(
            read_scene(scene),
            read_matrix(labels),
            load_rig(rig),
            sigma,
            seed=seed,
            threads=threads,
            show_progress=not quiet,
        )
        for row in list_views(ds):
            logger.debug(
                f"View {row['view']}: {row['masks']} masks, {row['masked_pixels']} masked pixels"
            )
        write_mask_dataset(out, ds)


@app.command("gen-db")
def gen_db(
    labels: Path = typer.Option(..., "--labels", help="Label embeddings (DRSF)"),
    n: int = typer.Option(4096, "--n", help="Number of training vectors"),
    sigma: float = typer.Option(0.05, "--sigma", help="Noise around label embeddings"),
    random_fraction: float = typer.Option(0.25, "--random-fraction", help="Share of random unit vectors"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
    out: Path = typer.Option(..., "--out", help="Output training matrix (DRSF)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Build a synthetic codebook training database around the label embeddings.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        db = training_database(
            read_matrix(labels), n, sigma, np.random.default_rng(seed), random_fraction
        )
        write_matrix(out, db)


@app.command("train-pq")
def train_pq(
    db: Path = typer.Option(..., "--db", help="Training vectors (full-precision DRSF)"),
    subvectors: int = typer.Option(128, "--subvectors", help="Number of sub-vectors L"),
    centroids: int = typer.Option(256, "--centroids", help="Centroids per sub-space K (<= 256)"),
    seed: int = typer.Option(0, "--seed", help="Seed for k-means++"),
    out: Path = typer.Option(..., "--out", help="Output codebook (DRPQ)"),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Train a product-quantization codebook.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        data = read_matrix(db)
        cb = train_codebook(data, subvectors, centroids, seed=seed, threads=threads, show_progress=not quiet)
        write_codebook(out, cb)

        logger.info(f"Compression ratio: {compression_ratio(cb.D, cb.L, cb.K):.6g}")
        logger.info(f"Training reconstruction MSE: {quantization_error(data, cb):.6g}")


@app.command()
def register(
    scene: Path = typer.Option(..., "--scene", help="Scene (DRSG)"),
    masks: Path = typer.Option(..., "--masks", help="Mask dataset (DRMD)"),
    topk: int = typer.Option(20, "--topk", help="Gaussians per ray that receive weight"),
    codebook: Optional[Path] = typer.Option(None, "--codebook", help="Store features as PQ codes"),
    out: Path = typer.Option(..., "--out", help="Output stem for <stem>.drsg, <stem>.drsf, <stem>.survivors.json"),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Register mask embeddings onto Gaussians with Top-k compositing weights.
    """
    paths = register_output_paths(out)
    setup_logging(log_dir_for(paths["scene"]), verbose, quiet)

    with _exit_on_error():
        cb = read_codebook(codebook) if codebook else None
        source = read_scene(scene)
        ds = read_mask_dataset(masks)
        logger.info(f"Registering {ds.mask_count} masks from {len(ds.views)} views onto {len(source)} Gaussians (k={topk})")

        rs = register_scene(source, ds, topk, codebook=cb, threads=threads, show_progress=not quiet)

        write_scene(paths["scene"], rs.scene)
        if rs.codes is not None:
            write_features(paths["features"], codes=rs.codes, dim=cb.D)
        else:
            write_features(paths["features"], features=rs.features)
        write_json_report(
            {
                "source_scene": str(scene),
                "source_count": len(source),
                "survivors": len(rs),
                "topk": topk,
                "mode": rs.mode,
                "feature_bytes": rs.compression_bytes(),
                "kept_indices": rs.kept_indices,
            },
            paths["survivors"],
        )


@app.command()
def query(
    scene: Path = typer.Option(..., "--scene", help="Registered scene (DRSG)"),
    features: Path = typer.Option(..., "--features", help="Registered features (DRSF)"),
    codebook: Optional[Path] = typer.Option(None, "--codebook", help="Codebook for PQ features"),
    query_file: Path = typer.Option(..., "--query", help="Query JSON"),
    mode: str = typer.Option("cosine", "--mode", help="Scoring mode (cosine or relevancy)"),
    normalization: str = typer.Option("paper", "--normalization", help="ADC normalization (paper or exact)"),
    top: int = typer.Option(10, "--top", help="Number of best matches to report"),
    scores_out: Optional[Path] = typer.Option(None, "--scores-out", help="Dump per-Gaussian scores as f32"),
    sweep: bool = typer.Option(False, "--sweep", help="Emit a score-vs-IoU threshold sweep against the scene's labels"),
    sweep_steps: int = typer.Option(101, "--sweep-steps", help="Thresholds in the sweep"),
    plots: bool = typer.Option(False, "--plots", help="Plot the threshold sweep"),
    out: Path = typer.Option(..., "--out", help="Output report (JSON)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Score every Gaussian against a query and select by threshold.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        if mode not in ("cosine", "relevancy"):
            raise InvalidArgumentError(f"Unknown mode {mode!r}; use cosine or relevancy")

        rs, cb = _load_registered(scene, features, codebook)
        spec = load_query(query_file)

        if mode == "relevancy":
            scores = relevancy_scores(rs, cb, spec.embedding, spec.canonicals, normalization)
        else:
            scores = score_scene(rs, cb, spec.embedding, normalization)

        selected = select_threshold(scores, spec.threshold)
        report = {
            "scene": str(scene),
            "mode": mode,
            "threshold": spec.threshold,
            "count": len(rs),
            "selected": selected,
            "top": top_matches(scores, top),
        }
        if rs.scene.has_labels:
            report["label_counts"] = label_counts(rs.scene.labels[selected], int(rs.scene.labels.max()) + 1)
        logger.info(f"Selected {len(selected)} of {len(rs)} Gaussians at threshold {spec.threshold}")

        if sweep:
            if spec.label is None or not rs.scene.has_labels:
                raise InvalidArgumentError("--sweep needs a query 'label' and a labeled scene")
            thresholds = np.linspace(float(scores.min()), float(scores.max()), sweep_steps)
            rows = threshold_sweep(scores, rs.scene.labels == spec.label, significant_scores(rs.scene), thresholds)
            best = best_threshold(rows)
            report["sweep"] = rows
            report["best_threshold"] = best
            write_table(rows, out.with_name(f"{out.stem}_sweep.csv"))
            if best is not None:
                logger.info(f"Best threshold {best['threshold']:.4f}: weighted IoU {best['weighted_iou']:.4f}")

            if plots:
                plots_dir = out.parent / "plots"
                plot_threshold_sweep(rows, plots_dir / f"{out.stem}_sweep.png", best)
                plot_threshold_sweep_interactive(rows, plots_dir / f"{out.stem}_sweep_interactive.html")
                logger.info(f"Generated plots in: {plots_dir}")

        if scores_out is not None:
            write_score_dump(scores, scores_out)
            report["scores_file"] = str(scores_out)

        write_json_report(report, out)


@app.command()
def segment(
    scene: Path = typer.Option(..., "--scene", help="Registered scene (DRSG)"),
    features: Path = typer.Option(..., "--features", help="Registered features (DRSF)"),
    codebook: Optional[Path] = typer.Option(None, "--codebook", help="Codebook for PQ features"),
    labels: Path = typer.Option(..., "--labels", help="Label embeddings (DRSF), one row per label"),
    normalization: str = typer.Option("paper", "--normalization", help="ADC normalization (paper or exact)"),
    out: Path = typer.Option(..., "--out", help="Output segmentation (JSON)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Label every Gaussian with its highest-scoring label query.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        rs, cb = _load_registered(scene, features, codebook)
        label_embeddings = read_matrix(labels)
        pred = segment_argmax(rs, cb, list(label_embeddings), normalization)
        counts = label_counts(pred, len(label_embeddings))
        logger.info(f"Segmented {len(pred)} Gaussians: {counts}")

        write_json_report(
            {
                "scene": str(scene),
                "label_count": len(label_embeddings),
                "label_counts": counts,
                "labels": pred,
            },
            out,
        )


@app.command("eval-iou")
def eval_iou(
    pred: Path = typer.Option(..., "--pred", help="Segmentation JSON from 'segment'"),
    gt_points: Path = typer.Option(..., "--gt-points", help="Labeled point cloud (DRPC)"),
    mode: str = typer.Option("affinity", "--mode", help="Pseudo-labeling (affinity or paper-verbatim)"),
    scene: Optional[Path] = typer.Option(None, "--scene", help="Scene (defaults to the one recorded in --pred)"),
    ablate_fraction: Optional[float] = typer.Option(
        None, "--ablate-fraction", help="Also score with the top/bottom fraction of Gaussians removed"
    ),
    out: Path = typer.Option(..., "--out", help="Output report (JSON)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Significance-weighted IoU of a segmentation against point-cloud pseudo-labels.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        if mode not in PSEUDO_LABEL_MODES:
            raise InvalidArgumentError(f"Unknown mode {mode!r}; use affinity or paper-verbatim")

        prediction = load_json(pred)
        gaussians = read_scene(scene or Path(prediction["scene"]))
        pc = read_point_cloud(gt_points)
        labels = np.asarray(prediction["labels"], dtype=np.int64)
        if len(labels) != len(gaussians):
            raise InvalidArgumentError(f"{pred} labels {len(labels)} Gaussians, scene has {len(gaussians)}")

        gt = pseudo_label_gaussians(pc, gaussians, PSEUDO_LABEL_MODES[mode])
        d = significant_scores(gaussians)
        weighted = mean_weighted_iou(labels, gt, d, pc.label_count)
        unweighted = mean_weighted_iou(labels, gt, np.ones_like(d), pc.label_count)

        report = {
            "scene": str(scene or prediction["scene"]),
            "mode": mode,
            "gaussians": len(gaussians),
            "points": len(pc),
            "per_label_iou": weighted["per_label"],
            "miou": weighted["miou"],
            "undefined_labels": weighted["undefined_labels"],
            "accuracy": iou_accuracy(list(weighted["per_label"].values())),
            "unweighted_per_label_iou": unweighted["per_label"],
            "unweighted_miou": unweighted["miou"],
        }
        logger.info(f"Weighted mIoU {weighted['miou']}, unweighted mIoU {unweighted['miou']}")
        if ablate_fraction is not None:
            study = ablation_miou(labels, gt, gaussians, ablate_fraction, pc.label_count)
            report["ablation"] = {"fraction": ablate_fraction, **study}
            logger.info(
                f"Removing top {ablate_fraction:.0%}: weighted mIoU {study['top']['miou']}; "
                f"bottom: {study['bottom']['miou']}"
            )
        write_json_report(report, out)
        write_label_table(weighted["per_label"], out)


@app.command("eval-voxel")
def eval_voxel(
    scene: Path = typer.Option(..., "--scene", help="Scene (DRSG) with ground-truth labels"),
    spacing: Optional[float] = typer.Option(None, "--spacing", help="Voxel edge (default: bbox diagonal / 128)"),
    threshold: Optional[float] = typer.Option(None, "--threshold", help="Absolute empty-voxel density threshold"),
    pred: Optional[Path] = typer.Option(None, "--pred", help="Segmentation JSON to compare against"),
    gt_points: Optional[Path] = typer.Option(None, "--gt-points", help="Pseudo-label the scene from a point cloud"),
    out: Path = typer.Option(..., "--out", help="Output report (JSON)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Voxel-oracle labeling of a scene, and voxel mIoU against a segmentation.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        gaussians = read_scene(scene)
        if gt_points is not None:
            pc = read_point_cloud(gt_points)
            gaussians = gaussians.with_labels(pseudo_label_gaussians(pc, gaussians))
            label_count = pc.label_count
        elif gaussians.has_labels:
            label_count = int(gaussians.labels.max()) + 1
        else:
            raise InvalidArgumentError("Scene has no labels; pass --gt-points")

        prediction = load_json(pred) if pred is not None else None
        if prediction is not None:
            label_count = max(label_count, int(prediction.get("label_count", 0)))

        grid_gt = voxelize_scene(gaussians, label_count, spacing=spacing, density_threshold=threshold)
        report = {
            "scene": str(scene),
            "dims": grid_gt.dims,
            "spacing": grid_gt.spacing,
            "origin": grid_gt.origin,
            "density_threshold": grid_gt.threshold,
            "nonempty_voxels": int(grid_gt.nonempty.sum()),
            "voxels_per_label": label_counts(grid_gt.labels[grid_gt.nonempty], label_count),
        }

        if prediction is not None:
            labels = np.asarray(prediction["labels"], dtype=np.int64)
            grid_pred = voxelize_scene(
                gaussians.with_labels(labels),
                label_count,
                bounds=gaussians.bounds(),
                spacing=grid_gt.spacing,
                density_threshold=grid_gt.threshold,
            )
            result = voxel_mean_iou(grid_gt, grid_pred, label_count)
            report["per_label_iou"] = result["per_label"]
            report["voxel_miou"] = result["miou"]
            report["undefined_labels"] = result["undefined_labels"]
            write_label_table(result["per_label"], out)
            logger.info(f"Voxel mIoU {result['miou']}")

        write_json_report(report, out)


@app.command("bench-lut")
def bench_lut_command(
    n: int = typer.Option(1_000_000, "--n", help="Number of stored vectors"),
    d: int = typer.Option(512, "--d", help="Embedding dimension"),
    l: int = typer.Option(128, "--l", help="PQ sub-vectors"),
    reps: int = typer.Option(10, "--reps", help="Timed repetitions (>= 10)"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output report (JSON)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Time full-precision cosine scoring against ADC lookup-table scoring.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        report = bench_lut(n, d, l, reps, seed)
        typer.echo(
            f"full {report['full']['median_s'] * 1e3:.3f} ms (p95 {report['full']['p95_s'] * 1e3:.3f}), "
            f"adc {report['adc']['median_s'] * 1e3:.3f} ms (p95 {report['adc']['p95_s'] * 1e3:.3f}), "
            f"speedup {report['speedup']:.2f}x, top-1 agree {report['top1_agree']}"
        )
        if out is not None:
            write_json_report(report, out)


@app.command("ablate-topk")
def ablate_topk(
    spec: Path = typer.Option(..., "--spec", help="Scene spec JSON"),
    topk: List[int] = typer.Option([1, 5, 10, 20, 40], "--topk", help="Top-k values (repeatable)"),
    subvectors: Optional[int] = typer.Option(None, "--subvectors", help="Register PQ codes with L sub-vectors"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the spec's seed"),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    plots: bool = typer.Option(False, "--plots", help="Plot mIoU against k"),
    out: Path = typer.Option(..., "--out", help="Output report (JSON)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Run the synthetic pipeline for several Top-k values.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        scene_spec = load_scene_spec(spec)
        if seed is not None:
            scene_spec.seed = seed

        rows = []
        for k in topk:
            result = run_pipeline(scene_spec, k=k, subvectors=subvectors, threads=threads)
            rows.append({
                key: result[key]
                for key in ("k", "mode", "survivors", "pruned", "recovery", "weighted_recovery", "weighted_miou")
            })
            logger.info(
                f"k={k}: recovery {result['recovery']:.4f}, weighted mIoU {result['weighted_miou']}"
            )

        write_json_report({"spec": scene_spec.to_dict(), "rows": rows}, out)
        write_table(rows, out.with_suffix(".csv"))

        if plots:
            plot_topk_ablation(rows, out.parent / "plots" / f"{out.stem}_topk.png")


@app.command("eval-correlation")
def eval_correlation(
    scenes: int = typer.Option(20, "--scenes", help="Number of random scenes"),
    seed: int = typer.Option(0, "--seed", help="Experiment seed"),
    plots: bool = typer.Option(False, "--plots", help="Scatter plots of both metrics against the voxel oracle"),
    out: Path = typer.Option(..., "--out", help="Output report (JSON)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Verbose logging"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress console output"),
):
    """
    Correlate weighted and unweighted Gaussian mIoU with the voxel oracle.
    """
    setup_logging(log_dir_for(out), verbose, quiet)

    with _exit_on_error():
        result = correlation_experiment(scenes, seed, show_progress=not quiet)
        write_json_report(result, out)

        rows = [
            {**setting, "weighted_miou": w, "unweighted_miou": u, "voxel_miou": v}
            for setting, w, u, v in zip(
                [result["settings"][i] for i in result["included"]],
                result["weighted_miou"], result["unweighted_miou"], result["voxel_miou"]
            )
        ]
        write_table(rows, out.with_suffix(".csv"))

        if plots:
            plots_dir = out.parent / "plots"
            plot_correlation(result, plots_dir / f"{out.stem}_correlation.png")
            plot_correlation_interactive(result, plots_dir / f"{out.stem}_correlation_interactive.html")
            logger.info(f"Generated plots in: {plots_dir}")


if __name__ == "__main__":
    app()
