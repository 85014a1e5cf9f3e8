#!/usr/bin/env python3
"""
Example usage of drsplat programmatically.

This demonstrates how to use the library modules directly in Python code,
rather than through the CLI.
"""

import numpy as np

from drsplat.evaluate import mean_weighted_iou, pseudo_label_gaussians, significant_scores
from drsplat.pq import compression_ratio
from drsplat.query import score_scene, segment_argmax, select_threshold
from drsplat.registration import register_scene
from drsplat.synthetic import SceneSpec, gen_scene, pipeline_codebook, render_masks, run_pipeline


def example_register_and_query():
    """Example: Register masks onto a scene and run an open-vocabulary query."""

    print("=" * 60)
    print("Example 1: Registration and querying")
    print("=" * 60)

    spec = SceneSpec(seed=0, gaussian_count=120, dim=64)
    scene, label_embeddings, pc = gen_scene(spec)
    masks = render_masks(scene, label_embeddings, spec.rig, spec.sigma, seed=spec.seed)
    print(f"Scene: {len(scene)} Gaussians, {masks.mask_count} masks over {len(masks.views)} views")

    registered = register_scene(scene, masks, k=20)
    print(f"Registered: {len(registered)} survivors, {registered.compression_bytes()} feature bytes")

    # Query the first label
    scores = score_scene(registered, None, label_embeddings[0])
    selected = select_threshold(scores, 0.5)
    truth = registered.scene.labels[selected]
    print(f"Query label 0: {len(selected)} Gaussians selected, {np.mean(truth == 0):.2%} correct")

    # Evaluate segmentation against pseudo-labels from the point cloud
    pred = segment_argmax(registered, None, list(label_embeddings))
    gt = pseudo_label_gaussians(pc, registered.scene)
    miou = mean_weighted_iou(pred, gt, significant_scores(registered.scene), spec.label_count)
    print(f"Weighted mIoU: {miou['miou']:.4f}")
    print()


def example_product_quantization():
    """Example: Store features as PQ codes and segment from the codes."""

    print("=" * 60)
    print("Example 2: Product quantization")
    print("=" * 60)

    spec = SceneSpec(seed=1, gaussian_count=120, dim=64)
    scene, label_embeddings, _ = gen_scene(spec)
    masks = render_masks(scene, label_embeddings, spec.rig, spec.sigma, seed=spec.seed)

    codebook = pipeline_codebook(spec, label_embeddings, subvectors=16, centroids=64)
    registered = register_scene(scene, masks, k=20, codebook=codebook)
    print(f"Mode: {registered.mode}, codes {registered.codes.shape}")
    print(f"Compression ratio vs float32: {compression_ratio(codebook.D, codebook.L, codebook.K):.4f}")

    pred = segment_argmax(registered, codebook, list(label_embeddings))
    print(f"Label recovery from codes: {np.mean(pred == registered.scene.labels):.2%}")
    print()


def example_topk_sweep():
    """Example: Compare Top-k values on the same scene."""

    print("=" * 60)
    print("Example 3: Top-k sweep")
    print("=" * 60)

    spec = SceneSpec(seed=2, gaussian_count=120, dim=64)
    for k in (1, 5, 20):
        result = run_pipeline(spec, k=k)
        print(
            f"k={k:>2}: survivors {result['survivors']}, recovery {result['recovery']:.3f}, "
            f"weighted recovery {result['weighted_recovery']:.3f}"
        )


if __name__ == "__main__":
    # Run examples
    example_register_and_query()
    print("\n")
    example_product_quantization()
    print("\n")
    example_topk_sweep()

    print("\n" + "=" * 60)
    print("Examples complete!")
    print("=" * 60)
