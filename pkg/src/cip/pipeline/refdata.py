"""Published reference accuracies, shipped as read-only data.

These are the source experiments' reported numbers (full-scale diffusion
generation plus ImageNet-class training). They annotate reports for
context and are never asserted against local runs, which operate at desk
scale. Guidance-scale sweeps cover [1, 1.5, 2, 2.5, 3, 4, 5, 6, 7.5].
"""

from __future__ import annotations

_GS = (1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.5)


def _sweep(values) -> dict[float, float]:
    return dict(zip(_GS, values))


# top-1 accuracy (%), ResNet-50 trained on synthetic data
_TABLES: dict[str, dict[str, dict[float, float]]] = {
    "imagenette": {
        "basic": _sweep((65.2, 68.4, 64.8, 66.6, 62.2, 57.2, 55.2, 50.8, 45.8)),
        "cip-zero-shot": _sweep((65.8, 67.8, 65.6, 66.4, 62.0, 61.6, 56.0, 55.8, 49.2)),
        "cip-vit-gpt2": _sweep((71.0, 77.0, 72.0, 73.2, 71.8, 69.4, 66.4, 59.4, 57.2)),
        "cip-blip2": _sweep((77.4, 79.0, 79.4, 75.4, 75.0, 68.8, 72.0, 64.4, 57.6)),
        "cip-zero-shot-llm": _sweep((56.0, 57.0, 58.6, 55.8, 59.6, 52.8, 45.8, 48.4, 42.2)),
        "cip-blip2-llm": _sweep((67.8, 66.8, 67.6, 64.6, 60.8, 63.2, 57.0, 55.0, 45.4)),
    },
    "imagenet-100": {
        "basic": _sweep((52.52, 54.36, 53.70, 50.54, 47.44, 43.10, 36.38, 33.20, 28.06)),
        "cip-zero-shot": _sweep((51.88, 53.36, 52.64, 51.68, 49.18, 44.24, 41.56, 39.00, 34.00)),
        "cip-vit-gpt2": _sweep((52.66, 56.38, 57.04, 56.66, 55.18, 52.00, 48.18, 46.58, 42.08)),
        "cip-blip2": _sweep((59.28, 61.56, 62.38, 61.64, 60.16, 55.68, 53.34, 47.36, 44.92)),
    },
}

# ImageNet-1K runs were generated at guidance scale 1.5 only.
_IMAGENET_1K = {
    # dataset suffix: {strategy: value}
    "val-top1": {"real": 79.56, "biggan": 42.65, "imagenet-sd": 42.89,
                 "basic": 45.23, "cip": 54.06},
    "val-top5": {"real": 94.61, "biggan": 65.92, "imagenet-sd": 70.26,
                 "basic": 69.88, "cip": 80.51},
    "v2-top1": {"real": 74.71, "imagenet-sd": 42.98, "basic": 45.64, "cip": 53.78},
    "v2-top5": {"real": 92.20, "imagenet-sd": 70.32, "basic": 70.96, "cip": 80.47},
    "sketch-top1": {"real": 28.10, "imagenet-sd": 16.59, "basic": 17.68, "cip": 18.47},
    "sketch-top5": {"real": 45.77, "imagenet-sd": 35.18, "basic": 34.08, "cip": 35.47},
    "r-top1": {"real": 39.38, "imagenet-sd": 26.29, "basic": 30.12, "cip": 33.57},
    "r-top5": {"real": 54.10, "imagenet-sd": 45.31, "basic": 46.81, "cip": 51.06},
    "a-top1": {"real": 8.05, "imagenet-sd": 3.55, "basic": 4.17, "cip": 5.19},
    "a-top5": {"real": 34.65, "imagenet-sd": 15.08, "basic": 14.71, "cip": 21.68},
}

_IMAGENET_1K_VIT = {
    "val-top1": {"real": 78.24, "basic": 44.00, "cip": 53.04},
    "val-top5": {"real": 93.36, "basic": 70.30, "cip": 79.31},
    "v2-top1": {"real": 72.93, "basic": 44.76, "cip": 52.61},
    "v2-top5": {"real": 90.37, "basic": 70.64, "cip": 79.49},
    "sketch-top1": {"real": 26.01, "basic": 17.92, "cip": 18.10},
    "sketch-top5": {"real": 42.98, "basic": 35.00, "cip": 35.39},
    "r-top1": {"real": 36.84, "basic": 31.45, "cip": 34.20},
    "r-top5": {"real": 51.77, "basic": 50.23, "cip": 51.86},
    "a-top1": {"real": 15.12, "basic": 4.77, "cip": 6.92},
    "a-top5": {"real": 43.01, "basic": 16.72, "cip": 25.51},
}

REAL_DATA_ACCURACY = {"imagenette": 91.4, "imagenet-100": 83.34}


def reference_lookup(dataset: str, strategy: str, guidance: float) -> float | None:
    """Published accuracy for (dataset, strategy, guidance), or None.

    Datasets: "imagenette", "imagenet-100", "imagenet-1k-<variant>-<topk>"
    (variants val/v2/sketch/r/a; optionally prefixed "vit-" for the ViT
    rows). ImageNet-1K rows exist only at guidance 1.5.
    """
    dataset = dataset.lower()
    if dataset in _TABLES:
        if strategy == "real":
            return REAL_DATA_ACCURACY.get(dataset)
        return _TABLES[dataset].get(strategy, {}).get(float(guidance))
    if dataset.startswith("imagenet-1k-"):
        suffix = dataset[len("imagenet-1k-"):]
        table = _IMAGENET_1K
        if suffix.startswith("vit-"):
            suffix = suffix[len("vit-"):]
            table = _IMAGENET_1K_VIT
        row = table.get(suffix)
        if row is None or strategy not in row:
            return None
        if strategy != "real" and float(guidance) != 1.5:
            return None
        return row[strategy]
    return None
