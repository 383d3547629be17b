"""Readers and writers for the five raw input files.

All CSVs are UTF-8, comma separated, ISO dates, header on the first line.
Column order is free; unknown columns are ignored with a warning.

    cholera.csv       governorate,date,cumulative_cases,cumulative_deaths
    rainfall.csv      lat,lon,date,mm
    conflict.csv      governorate,date,fatalities
    gridmap.csv       lat,lon,governorate      (governorate may be "outside")
    governorates.json [{"id": ..., "population": ..., "neighbors": [...]}, ...]
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (AsymmetricAdjacency, DuplicateGovernorate, DuplicateReport, MalformedRow,
                     MissingData, NonPositivePopulation, UnknownGovernorate, UnmappedCell)

log = logging.getLogger(__name__)

OUTSIDE = "outside"
LATTICE = 0.25

CHOLERA_COLUMNS = ("governorate", "date", "cumulative_cases", "cumulative_deaths")
RAINFALL_COLUMNS = ("lat", "lon", "date", "mm")
CONFLICT_COLUMNS = ("governorate", "date", "fatalities")
GRIDMAP_COLUMNS = ("lat", "lon", "governorate")


@dataclass(frozen=True)
class RawCumulativeReport:
    governorate_id: str
    report_date: dt.date
    cumulative_cases: float
    cumulative_deaths: float


@dataclass(frozen=True)
class RainGridObservation:
    lat: float
    lon: float
    date: dt.date
    rainfall: float


@dataclass(frozen=True)
class ConflictEvent:
    governorate_id: str
    date: dt.date
    fatalities: int


@dataclass(frozen=True)
class GovernorateMeta:
    governorate_id: str
    population: int
    neighbors: frozenset


def cell_key(lat: float, lon: float) -> tuple[int, int]:
    """Integer lattice coordinates of a 0.25-degree cell."""
    return int(round(lat / LATTICE)), int(round(lon / LATTICE))


# ---------------------------------------------------------------- parsing helpers


def _rows(path, required):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise MalformedRow(path, 1, "missing header") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise MalformedRow(path, 1, f"header lacks column(s) {missing}")
        extra = [c for c in header if c not in required]
        if extra:
            log.warning("%s: ignoring unknown column(s) %s", path, extra)
        idx = {c: header.index(c) for c in required}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, {c: row[i].strip() for c, i in idx.items()}


def _date(path, line, s):
    try:
        return dt.date.fromisoformat(s)
    except ValueError:
        raise MalformedRow(path, line, f"bad date {s!r}") from None


def _nonneg(path, line, name, s):
    try:
        v = float(s)
    except ValueError:
        raise MalformedRow(path, line, f"{name}={s!r} is not a number") from None
    if not math.isfinite(v) or v < 0:
        raise MalformedRow(path, line, f"{name}={s!r} must be finite and non-negative")
    return v


def _token(path, line, name, s):
    if not s or any(ch.isspace() for ch in s):
        raise MalformedRow(path, line, f"{name}={s!r} is not a valid token")
    return s


def _lattice(path, line, name, s):
    try:
        v = float(s)
    except ValueError:
        raise MalformedRow(path, line, f"{name}={s!r} is not a number") from None
    if not math.isfinite(v) or abs(v / LATTICE - round(v / LATTICE)) > 1e-9:
        raise MalformedRow(path, line, f"{name}={s!r} is not on the {LATTICE} degree lattice")
    return v


# ---------------------------------------------------------------- readers


def parse_cholera_reports(path) -> list[RawCumulativeReport]:
    out = {}
    for line, r in _rows(path, CHOLERA_COLUMNS):
        rep = RawCumulativeReport(
            _token(path, line, "governorate", r["governorate"]),
            _date(path, line, r["date"]),
            _nonneg(path, line, "cumulative_cases", r["cumulative_cases"]),
            _nonneg(path, line, "cumulative_deaths", r["cumulative_deaths"]),
        )
        key = (rep.governorate_id, rep.report_date)
        if key in out:
            raise DuplicateReport(f"{path}:{line}: second report for {key[0]} on {key[1]}")
        out[key] = rep
    return [out[k] for k in sorted(out)]


def parse_rainfall(path) -> list[RainGridObservation]:
    out = []
    for line, r in _rows(path, RAINFALL_COLUMNS):
        out.append(RainGridObservation(
            _lattice(path, line, "lat", r["lat"]),
            _lattice(path, line, "lon", r["lon"]),
            _date(path, line, r["date"]),
            _nonneg(path, line, "mm", r["mm"]),
        ))
    return out


def parse_conflict(path) -> list[ConflictEvent]:
    out = []
    for line, r in _rows(path, CONFLICT_COLUMNS):
        v = _nonneg(path, line, "fatalities", r["fatalities"])
        if v != int(v):
            raise MalformedRow(path, line, f"fatalities={r['fatalities']!r} is not an integer")
        out.append(ConflictEvent(_token(path, line, "governorate", r["governorate"]),
                                 _date(path, line, r["date"]), int(v)))
    return out


def parse_gridmap(path) -> dict[tuple[int, int], str]:
    out = {}
    for line, r in _rows(path, GRIDMAP_COLUMNS):
        key = cell_key(_lattice(path, line, "lat", r["lat"]), _lattice(path, line, "lon", r["lon"]))
        if key in out:
            raise MalformedRow(path, line, f"cell {r['lat']},{r['lon']} mapped twice")
        out[key] = _token(path, line, "governorate", r["governorate"])
    return out


def load_governorate_meta(path) -> dict[str, GovernorateMeta]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise MalformedRow(path, 1, "expected a JSON array of governorate objects")
    raw = {}
    for i, entry in enumerate(doc):
        try:
            gid, pop, nbs = str(entry["id"]), entry["population"], [str(x) for x in entry["neighbors"]]
        except (KeyError, TypeError):
            raise MalformedRow(path, i + 1, "entry needs id, population, neighbors") from None
        if gid in raw:
            raise DuplicateGovernorate(f"governorate {gid} listed twice")
        if isinstance(pop, bool) or not isinstance(pop, (int, float)) or pop != int(pop):
            raise MalformedRow(path, i + 1, f"population of {gid} must be an integer")
        if pop <= 0:
            raise NonPositivePopulation(f"governorate {gid} has population {pop}")
        if gid in nbs:
            raise AsymmetricAdjacency(f"governorate {gid} lists itself as a neighbor")
        raw[gid] = GovernorateMeta(gid, int(pop), frozenset(nbs))
    return validate_registry(raw)


def validate_registry(registry: dict[str, GovernorateMeta]) -> dict[str, GovernorateMeta]:
    for gid, meta in registry.items():
        for nb in meta.neighbors:
            if nb not in registry:
                raise UnknownGovernorate(f"{gid} lists unknown neighbor {nb}")
            if gid not in registry[nb].neighbors:
                raise AsymmetricAdjacency(f"{gid} lists {nb} as neighbor but not vice versa")
    return registry


def check_known_ids(registry, *id_sources):
    """Raise UnknownGovernorate if any id in the given iterables is not registered."""
    for ids in id_sources:
        unknown = sorted(set(ids) - set(registry) - {OUTSIDE})
        if unknown:
            raise UnknownGovernorate(f"governorate id(s) {unknown} missing from registry")


# ---------------------------------------------------------------- aggregation


def aggregate_rainfall(observations, gridmap) -> dict[str, dict[dt.date, float]]:
    """Per (governorate, date) mean rainfall over member lattice cells.

    Uses ``math.fsum`` so the result does not depend on observation order.
    """
    buckets = defaultdict(list)
    for ob in observations:
        key = cell_key(ob.lat, ob.lon)
        if key not in gridmap:
            raise UnmappedCell(ob.lat, ob.lon)
        gov = gridmap[key]
        if gov == OUTSIDE:
            continue
        buckets[gov, ob.date].append(ob.rainfall)
    out = defaultdict(dict)
    for (gov, day), vals in buckets.items():
        out[gov][day] = math.fsum(vals) / len(vals)
    return {g: dict(sorted(d.items())) for g, d in sorted(out.items())}


def aggregate_conflict(events, start: dt.date = None, end: dt.date = None,
                       governorates=None) -> dict[str, np.ndarray]:
    """Daily fatality totals per governorate over [start, end], zero-filled.

    Events outside the range are dropped. Defaults: the event date span and
    the governorates that appear in ``events``.
    """
    events = list(events)
    if start is None or end is None:
        if not events:
            raise MissingData("no conflict events and no explicit date range")
        start = start or min(e.date for e in events)
        end = end or max(e.date for e in events)
    n_days = (end - start).days + 1
    govs = sorted(set(governorates) if governorates is not None else {e.governorate_id for e in events})
    out = {g: np.zeros(n_days) for g in govs}
    for e in events:
        off = (e.date - start).days
        if 0 <= off < n_days and e.governorate_id in out:
            out[e.governorate_id][off] += e.fatalities
    return out


# ---------------------------------------------------------------- writers


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_cholera_reports(path, reports):
    _write_csv(path, CHOLERA_COLUMNS, ((r.governorate_id, r.report_date.isoformat(),
                                         repr(float(r.cumulative_cases)), repr(float(r.cumulative_deaths)))
                                        for r in reports))


def write_rainfall(path, observations):
    _write_csv(path, RAINFALL_COLUMNS, ((repr(float(o.lat)), repr(float(o.lon)), o.date.isoformat(),
                                          repr(float(o.rainfall))) for o in observations))


def write_conflict(path, events):
    _write_csv(path, CONFLICT_COLUMNS, ((e.governorate_id, e.date.isoformat(), str(int(e.fatalities)))
                                        for e in events))


def write_gridmap(path, gridmap):
    _write_csv(path, GRIDMAP_COLUMNS, ((repr(k[0] * LATTICE), repr(k[1] * LATTICE), g)
                                       for k, g in sorted(gridmap.items())))


def write_governorate_meta(path, registry):
    doc = [{"id": m.governorate_id, "population": m.population, "neighbors": sorted(m.neighbors)}
           for _, m in sorted(registry.items())]
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


@dataclass
class InputBundle:
    reports: list
    rainfall: list
    conflict: list
    gridmap: dict
    registry: dict


def load_inputs(cholera, rainfall, conflict, gridmap, governorates) -> InputBundle:
    """Read all five files and check every referenced governorate is registered."""
    bundle = InputBundle(
        reports=parse_cholera_reports(cholera),
        rainfall=parse_rainfall(rainfall),
        conflict=parse_conflict(conflict),
        gridmap=parse_gridmap(gridmap),
        registry=load_governorate_meta(governorates),
    )
    check_known_ids(bundle.registry,
                    (r.governorate_id for r in bundle.reports),
                    (e.governorate_id for e in bundle.conflict),
                    bundle.gridmap.values())
    return bundle
