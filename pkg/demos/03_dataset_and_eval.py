"""Dataset construction and COCO-protocol evaluation.

Tiles a synthetic mosaic plus crown polygons into a COCO training dataset,
then scores a set of predictions with the mAP evaluator, including the exact
hand-checkable case of one ground truth and two predictions.

Run: python3 demos/03_dataset_and_eval.py
"""

import tempfile
from pathlib import Path

import numpy as np

from crownstitch import (
    CrownAnnotationSet,
    EvalItem,
    build_coco_dataset,
    evaluate_coco,
    make_synthetic_forest,
    rle_encode,
    write_coco,
)

# ---------------------------------------------------------------------------
# 1. COCO dataset from a mosaic + crown polygons. Crowns straddling tile
#    borders are clipped per tile, so one crown in an overlap zone becomes
#    an annotation in every tile that sees it.

ortho, _, crowns = make_synthetic_forest(n_crowns=9, gsd=0.05, seed=7)
annotations = CrownAnnotationSet(crowns=[c.polygon() for c in crowns], crs=ortho.crs)
dataset, tiles = build_coco_dataset(ortho, annotations, tile_size=512, overlap=0.5)
print(f"{len(dataset.images)} tiles, {len(dataset.annotations)} annotations "
      f"from {len(crowns)} crowns (overlap duplicates them)")

with tempfile.TemporaryDirectory() as tmp:
    write_coco(dataset, tiles, Path(tmp) / "dataset")
    names = sorted(p.name for p in (Path(tmp) / "dataset" / "images").iterdir())
    print(f"wrote annotations.json plus {len(names)} PNGs: {names[:3]} ...")

# ---------------------------------------------------------------------------
# 2. Evaluation. Perfect predictions score a round 100.

rng = np.random.default_rng(0)
gt_masks = [rle_encode(rng.random((32, 32)) < 0.3) for _ in range(4)]
perfect = EvalItem(image_id=1, pred_scores=[1.0] * 4, pred_masks=list(gt_masks), gt_masks=gt_masks)
result = evaluate_coco([perfect])
print(f"\nGT as predictions: map {result.map:.1f}, map50 {result.map50:.1f}, "
      f"map75 {result.map75:.1f}")

# ---------------------------------------------------------------------------
# 3. A case small enough to check by hand: one 10 px ground truth, one
#    9 px subset prediction (IoU exactly 0.9) at score 0.9, and one disjoint
#    prediction at the higher score 0.95. The false positive outranks the
#    true positive, pinning precision at 1/2, so AP is 50 at thresholds up
#    to 0.90 and 0 at 0.95: map 45.0.

gt = np.zeros((4, 8), dtype=bool)
gt[0, :] = True
gt[1, :2] = True
subset = gt.copy()
subset[1, 1] = False
stray = np.zeros_like(gt)
stray[3, :] = True
item = EvalItem(
    image_id=1,
    pred_scores=[0.9, 0.95],
    pred_masks=[rle_encode(subset), rle_encode(stray)],
    gt_masks=[rle_encode(gt)],
)
result = evaluate_coco([item])
print(f"hand case: map {result.map:.1f}, map50 {result.map50:.1f}, map75 {result.map75:.1f}")
print(f"per-threshold APs: {[round(ap, 1) for ap in result.per_threshold_ap]}")
print(f"counts at IoU 0.5: {result.counts}")
