"""crownstitch command line: dataset building, CHM, inference, evaluation.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
Progress is logged to stderr as one JSON object per line.
"""

from __future__ import annotations

import json
import sys
import time
from importlib import metadata
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import dataset as dataset_mod
from . import eval_io, geojson_io, raster_io
from .backends import (
    BUILTIN_BACKENDS,
    ExternalBackend,
    FixtureBackend,
    WatershedBackend,
)
from .errors import CrownstitchError, ValidationError
from .evaluation import evaluate_coco, evaluate_polygons
from .pipeline import InferenceConfig, run_inference
from .raster import AffineTransform, compute_chm


def log_event(**fields) -> None:
    fields.setdefault("ts", round(time.time(), 3))
    print(json.dumps(fields, sort_keys=True), file=sys.stderr)


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _effective(ctx, section: str, key: str, flag_value, default):
    """Flag > config file > built-in default."""
    if flag_value is not None:
        return flag_value
    return ctx.obj.get("config", {}).get(section, {}).get(key, default)


def _parse_transform(text: str | None) -> AffineTransform | None:
    if text is None:
        return None
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValidationError(
            "--assume-transform expects origin_x,origin_y,scale_x,scale_y"
        )
    return AffineTransform(*parts)


def _make_backend(spec: str, workers_hint: int = 1):
    if spec == "watershed":
        return WatershedBackend()
    if spec.startswith("fixture:"):
        return FixtureBackend(spec.split(":", 1)[1])
    if spec.startswith("external:"):
        return ExternalBackend(spec.split(":", 1)[1])
    raise ValidationError(
        f"unknown backend {spec!r}; expected watershed, fixture:<dir>, or external:\"<cmd>\""
    )


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML config file; command-line flags take precedence.")
@click.version_option(version=metadata.version("crownstitch"), prog_name="crownstitch")
@click.pass_context
def cli(ctx, config_path):
    """Tree-crown segmentation pipeline: datasets, CHM, tiled inference, evaluation."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config(config_path)


@cli.command("build-dataset")
@click.option("--ortho", required=True, type=click.Path(exists=True))
@click.option("--crowns", required=True, type=click.Path(exists=True))
@click.option("--tile-size", type=int, default=None)
@click.option("--overlap", type=float, default=None)
@click.option("--min-fragment-area", type=float, default=None)
@click.option("--role", type=click.Choice(dataset_mod.SPLIT_ROLES), default=None)
@click.option("--crs", default=None, help="CRS override, e.g. EPSG:32654.")
@click.option("--assume-transform", default=None,
              help="origin_x,origin_y,scale_x,scale_y for non-georeferenced TIFFs.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def build_dataset_cmd(ctx, ortho, crowns, tile_size, overlap, min_fragment_area, role,
                      crs, assume_transform, out_dir):
    """Tile an orthomosaic plus crown GeoJSON into a COCO training dataset."""
    tile_size = _effective(ctx, "build-dataset", "tile_size", tile_size, 1024)
    overlap = _effective(ctx, "build-dataset", "overlap", overlap, 0.5)
    min_fragment_area = _effective(
        ctx, "build-dataset", "min_fragment_area", min_fragment_area,
        dataset_mod.DEFAULT_MIN_FRAGMENT_AREA,
    )
    raster = raster_io.read_geotiff(ortho, transform=_parse_transform(assume_transform), crs=crs)
    crown_set = dataset_mod.load_crown_annotations(crowns, crs=crs)
    log_event(stage="build-dataset", ortho=str(ortho), crowns=len(crown_set.crowns))
    coco, tiles = dataset_mod.build_coco_dataset(
        raster, crown_set, tile_size=tile_size, overlap=overlap,
        min_fragment_area=min_fragment_area,
    )
    dataset_mod.write_coco(coco, tiles, out_dir)
    manifest = {
        "role": role,
        "site": crown_set.source_site,
        "tiles": len(coco.images),
        "annotations": len(coco.annotations),
        "config": {
            "tile_size": tile_size,
            "overlap": overlap,
            "min_fragment_area": min_fragment_area,
        },
    }
    (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log_event(stage="build-dataset", tiles=len(coco.images), annotations=len(coco.annotations))
    click.echo(f"wrote {len(coco.images)} tiles, {len(coco.annotations)} annotations to {out_dir}")


@cli.command("chm")
@click.option("--dsm", required=True, type=click.Path(exists=True))
@click.option("--dem", required=True, type=click.Path(exists=True))
@click.option("--crs", default=None)
@click.option("--out", required=True, type=click.Path())
def chm_cmd(dsm, dem, crs, out):
    """Compute a canopy height model (DSM minus bilinearly resampled DEM)."""
    dsm_raster = raster_io.read_geotiff(dsm, crs=crs)
    dem_raster = raster_io.read_geotiff(dem, crs=crs)
    chm = compute_chm(dsm_raster, dem_raster)
    raster_io.write_geotiff(out, chm)
    log_event(stage="chm", out=str(out), width=chm.width, height=chm.height)
    click.echo(f"wrote CHM {chm.width}x{chm.height} to {out}")


@cli.command("infer")
@click.option("--ortho", required=True, type=click.Path(exists=True))
@click.option("--chm", "chm_path", type=click.Path(exists=True), default=None)
@click.option("--backend", "backend_spec", default=None)
@click.option("--tile-size", type=int, default=None)
@click.option("--overlap", type=float, default=None)
@click.option("--score-threshold", type=float, default=None)
@click.option("--merge-iou", type=float, default=None)
@click.option("--min-crown-area", type=float, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--crs", default=None)
@click.option("--assume-transform", default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Defaults to report.json next to --out.")
@click.pass_context
def infer_cmd(ctx, ortho, chm_path, backend_spec, tile_size, overlap, score_threshold,
              merge_iou, min_crown_area, workers, crs, assume_transform, out, report_path):
    """Run tiled inference and write fused crowns as GeoJSON."""
    backend_spec = _effective(ctx, "infer", "backend", backend_spec, "watershed")
    config = InferenceConfig(
        tile_size=_effective(ctx, "infer", "tile_size", tile_size, 1024),
        overlap=_effective(ctx, "infer", "overlap", overlap, 0.8),
        score_threshold=_effective(ctx, "infer", "score_threshold", score_threshold, 0.3),
        merge_iou=_effective(ctx, "infer", "merge_iou", merge_iou, 0.1),
        min_crown_area=_effective(ctx, "infer", "min_crown_area", min_crown_area, 1.0),
    )
    workers = _effective(ctx, "infer", "workers", workers, 1)
    transform = _parse_transform(assume_transform)
    raster = raster_io.read_geotiff(ortho, transform=transform, crs=crs)
    chm_raster = (
        raster_io.read_geotiff(chm_path, transform=transform, crs=crs)
        if chm_path is not None
        else None
    )
    backend = _make_backend(backend_spec)
    log_event(stage="infer", backend=backend.name, tiles="pending")
    try:
        features, report = run_inference(
            raster, backend, config=config, chm=chm_raster, workers=workers
        )
    finally:
        backend.close()
    geojson_io.write_feature_collection([f.polygon for f in features], out, crs=raster.crs)
    report_path = report_path or str(Path(out).parent / "report.json")
    Path(report_path).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    log_event(stage="infer", features=len(features), failed_tiles=len(report.failed_tiles))
    click.echo(f"wrote {len(features)} crowns to {out} (report: {report_path})")


@cli.command("eval")
@click.option("--gt", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--max-dets", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default="eval.json")
@click.pass_context
def eval_cmd(ctx, gt, pred, max_dets, out_path):
    """COCO-protocol evaluation; accepts COCO JSON or GeoJSON inputs."""
    max_dets = _effective(ctx, "eval", "max_dets", max_dets, 100)
    if eval_io.is_geojson(gt) and eval_io.is_geojson(pred):
        gt_polys, _ = geojson_io.read_feature_collection(gt, crs="EPSG:0")
        pred_polys, _ = geojson_io.read_feature_collection(pred, crs="EPSG:0")
        result = evaluate_polygons(pred_polys, gt_polys, max_dets=max_dets)
        mode = "polygon-iou (GeoJSON convenience mode, not COCO mask protocol)"
    else:
        items = eval_io.load_coco_eval_items(gt, pred)
        result = evaluate_coco(items, max_dets=max_dets)
        mode = "mask-iou (COCO protocol)"
    payload = result.as_dict()
    payload["mode"] = mode
    Path(out_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    click.echo(f"mode: {mode}")
    click.echo(f"{'metric':<10}{'value':>8}")
    for name in ("map", "map50", "map75"):
        click.echo(f"{name:<10}{payload[name]:>8.1f}")
    click.echo(f"counts@0.5 tp={result.counts['tp']} fp={result.counts['fp']} fn={result.counts['fn']}")
    log_event(stage="eval", out=str(out_path), map=result.map)


@cli.group("backends")
def backends_group():
    """Backend utilities."""


@backends_group.command("list")
def backends_list_cmd():
    """List available segmentation backends."""
    for name, desc in BUILTIN_BACKENDS.items():
        click.echo(f"{name:<22} {desc}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CrownstitchError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
