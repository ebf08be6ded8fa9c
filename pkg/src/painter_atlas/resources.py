"""Bundled reference data: dynasty ranges, province capitals, geography math."""

from __future__ import annotations

import json
import math
from functools import lru_cache
from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"

EARTH_RADIUS_KM = 6371.0


class GeographyError(Exception):
    """Unknown province code or unreadable geography file."""


@lru_cache(maxsize=None)
def dynasty_table() -> dict:
    """Dynasty code -> {name, start, end} from the bundled table."""
    rows = json.loads((DATA_DIR / "dynasties.json").read_text(encoding="utf-8"))
    return {row["code"]: row for row in rows}


@lru_cache(maxsize=None)
def _builtin_provinces() -> dict:
    return json.loads((DATA_DIR / "provinces.json").read_text(encoding="utf-8"))


def province_table(path=None) -> dict:
    """Province code -> {name, capital, lat, lon}.

    ``path`` may be a geography JSON file in the same shape; None or
    ``builtin:provinces`` selects the bundled table.
    """
    if path is None or path == "builtin:provinces":
        return _builtin_provinces()
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GeographyError(f"cannot read geography file {path}: {exc}") from exc


def great_circle_km(a: str, b: str, provinces=None) -> float:
    """Great-circle distance in km between two province capitals (haversine)."""
    table = provinces or province_table()
    try:
        pa, pb = table[a], table[b]
    except KeyError as exc:
        raise GeographyError(f"unknown province code: {exc.args[0]!r}") from None
    lat1, lon1 = math.radians(pa["lat"]), math.radians(pa["lon"])
    lat2, lon2 = math.radians(pb["lat"]), math.radians(pb["lon"])
    dlat, dlon = lat2 - lat1, lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))
