"""GeoJSON reading and writing for crown polygons."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ValidationError
from .polygons import PolygonGeo


def _crs_member(crs: str) -> dict:
    auth, _, code = crs.partition(":")
    return {"type": "name", "properties": {"name": f"urn:ogc:def:crs:{auth}::{code}"}}


def _parse_crs_member(obj: dict) -> str | None:
    crs = obj.get("crs")
    if not isinstance(crs, dict):
        return None
    name = crs.get("properties", {}).get("name", "")
    if "::" in name:
        auth = name.split(":")[-3]
        code = name.split("::")[-1]
        return f"{auth}:{code}"
    return name or None


def write_feature_collection(features: list[PolygonGeo], path, crs: str) -> None:
    """Write crown polygons as a GeoJSON FeatureCollection (exterior rings only)."""
    out = {
        "type": "FeatureCollection",
        "crs": _crs_member(crs),
        "features": [
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(pt) for pt in f.exterior]],
                },
                "properties": {
                    "id": f.feature_id or f"crown_{i:05d}",
                    "score": f.score,
                    "area_m2": f.area,
                },
            }
            for i, f in enumerate(features)
        ],
    }
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def read_feature_collection(path, crs: str | None = None) -> tuple[list[PolygonGeo], str]:
    """Parse a FeatureCollection of Polygon features; returns (polygons, crs).

    Non-polygon geometries and invalid rings are reported with their feature
    index. A missing CRS member is an error unless `crs` is supplied.
    """
    obj = json.loads(Path(path).read_text())
    if obj.get("type") != "FeatureCollection":
        raise ValidationError(f"{path}: not a GeoJSON FeatureCollection")
    file_crs = _parse_crs_member(obj)
    crs = crs or file_crs
    if crs is None:
        raise ValidationError(f"{path}: no CRS member; supply one explicitly")

    polys = []
    bad = []
    for idx, feat in enumerate(obj.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            bad.append(f"feature {idx}: geometry type {geom.get('type')!r}")
            continue
        rings = geom.get("coordinates") or []
        if not rings:
            bad.append(f"feature {idx}: no rings")
            continue
        props = feat.get("properties") or {}
        try:
            polys.append(
                PolygonGeo(
                    exterior=tuple((float(x), float(y)) for x, y in rings[0]),
                    score=props.get("score"),
                    feature_id=str(props["id"]) if "id" in props else None,
                )
            )
        except ValidationError as exc:
            bad.append(f"feature {idx}: {exc}")
    if bad:
        raise ValidationError(f"{path}: invalid features:\n  " + "\n  ".join(bad))
    return polys, crs
