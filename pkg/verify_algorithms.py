#!/usr/bin/env python3
"""Verification script checking the core formulas against hand-worked examples."""

import math

from drsplat.evaluate import mahalanobis_distance, voxel_label_scores, weighted_iou
from drsplat.gaussians import Gaussian3D, Scene
from drsplat.pq import compression_ratio
from drsplat.query import relevancy_score


def check(label, expected, got, tol=1e-4):
    print(f"\n{label}")
    print(f"   Expected: {expected}")
    print(f"   Got:      {got}")
    print(f"   ✓ PASS" if abs(got - expected) <= tol else f"   ✗ FAIL")


def verify_worked_examples():
    """Check worked examples for each module."""

    print("=" * 60)
    print("VERIFICATION: Worked examples")
    print("=" * 60)

    # Relevancy against a single canonical phrase
    check("1. Relevancy: f.q=1, one canonical at 0", 0.7311, float(relevancy_score(1.0, [0.0])))

    # Two canonicals: the closer one dominates
    check("2. Relevancy: f.q=1, canonicals (0, 0.9)", 0.5250, float(relevancy_score(1.0, [0.0, 0.9])))

    # Weighted IoU, d=(1,2,4), gt=(A,A,B), pred=(A,B,B)
    check("3. Weighted IoU of label A", 1 / 3, weighted_iou([0, 1, 1], [0, 0, 1], [1, 2, 4], 0))

    # Mahalanobis distance along a stretched axis
    g = Gaussian3D([0, 0, 0], [2, 1, 1], [1, 0, 0, 0], 1.0, [0, 0, 0])
    check("4. Mahalanobis: scale (2,1,1), p=(2,0,0)", 1.0, mahalanobis_distance([2, 0, 0], g))

    # Voxel density at the center of a unit Gaussian
    scene = Scene([[0, 0, 0]], [[1, 1, 1]], [[1, 0, 0, 0]], [1.0], labels=[0])
    check(
        "5. Voxel score at a unit Gaussian's center",
        (2 * math.pi) ** -1.5,
        float(voxel_label_scores([0, 0, 0], scene, 1)[0]),
        tol=1e-7,
    )

    # Stored bits of 128 byte codes vs 512 float32
    check("6. Compression ratio: D=512, L=128", 0.0625, compression_ratio(512, 128), tol=0.0)

    print("\n" + "=" * 60)
    print("All worked examples verified!")
    print("=" * 60)


if __name__ == "__main__":
    verify_worked_examples()
