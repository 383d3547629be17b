"""Turn raw tables into aligned daily per-governorate frames and forecast targets."""
from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyPanel, InsufficientFuture, InsufficientReports, MissingData, NonPositivePopulation
from .ingest import aggregate_conflict, aggregate_rainfall

log = logging.getLogger(__name__)

BASE_SERIES = ("new_cases", "new_deaths", "rainfall", "conflict")
SERIES_NAMES = BASE_SERIES + tuple(f"nb_{s}" for s in BASE_SERIES)
HORIZONS = (1, 2, 3, 4)
HORIZON_DAYS = 14
MAX_WINDOW = 56
PER = 10_000


@dataclass
class DailySeries:
    governorate_id: str
    start: dt.date
    values: np.ndarray

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=len(self.values) - 1)

    def dates(self) -> list[dt.date]:
        return [self.start + dt.timedelta(days=i) for i in range(len(self.values))]


@dataclass(frozen=True)
class Interval:
    """Report-to-report increment; ``start`` is exclusive, ``end`` inclusive."""

    start: dt.date
    end: dt.date
    new_cases: float
    new_deaths: float

    @property
    def days(self) -> int:
        return (self.end - self.start).days


@dataclass
class GovernorateFrame:
    governorate_id: str
    start: dt.date
    series: dict = field(default_factory=dict)

    @property
    def n_days(self) -> int:
        return len(next(iter(self.series.values())))

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=self.n_days - 1)

    def index_of(self, day: dt.date) -> int:
        return (day - self.start).days


def cumulative_to_new(reports) -> list[Interval]:
    """Differences between consecutive cumulative reports of one governorate.

    Negative differences (downward corrections) are clamped to zero.
    """
    reports = sorted(reports, key=lambda r: r.report_date)
    if len(reports) < 2:
        gid = reports[0].governorate_id if reports else "?"
        raise InsufficientReports(f"{gid}: need at least 2 reports, got {len(reports)}")
    out = []
    for a, b in zip(reports, reports[1:]):
        dc = b.cumulative_cases - a.cumulative_cases
        dd = b.cumulative_deaths - a.cumulative_deaths
        if dc < 0 or dd < 0:
            log.warning("%s: cumulative count decreased between %s and %s; clamping to 0",
                        a.governorate_id, a.report_date, b.report_date)
        out.append(Interval(a.report_date, b.report_date, max(dc, 0.0), max(dd, 0.0)))
    return out


def interpolate_daily(intervals, field: str = "new_cases", governorate_id: str = "") -> DailySeries:
    """Spread each interval's increment evenly over the days after its start report."""
    intervals = list(intervals)
    for a, b in zip(intervals, intervals[1:]):
        if a.end != b.start:
            raise ValueError(f"intervals not contiguous at {a.end} / {b.start}")
    chunks = [np.full(iv.days, getattr(iv, field) / iv.days) for iv in intervals]
    start = intervals[0].start + dt.timedelta(days=1)
    return DailySeries(governorate_id, start, np.concatenate(chunks) if chunks else np.zeros(0))


def normalize_per_10k(series: DailySeries, population) -> DailySeries:
    if population <= 0:
        raise NonPositivePopulation(f"population must be positive, got {population}")
    return DailySeries(series.governorate_id, series.start, series.values * PER / population)


def neighbor_mean(frames: dict, registry) -> dict:
    """Add nb_* series: per-day mean of each base series over a governorate's neighbors.

    Isolated governorates get all-zero neighbor series.
    """
    for gid, frame in frames.items():
        nbs = sorted(n for n in registry[gid].neighbors if n in frames)
        for s in BASE_SERIES:
            if nbs:
                frame.series[f"nb_{s}"] = np.mean(np.stack([frames[n].series[s] for n in nbs]), axis=0)
            else:
                frame.series[f"nb_{s}"] = np.zeros(frame.n_days)
    return frames


@dataclass(frozen=True)
class TargetVector:
    y1: float
    y2: float
    y3: float
    y4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y1, self.y2, self.y3, self.y4])


def target_window(anchor_index: int, horizon: int) -> tuple[int, int]:
    """Half-open index range of the label window for ``horizon`` (1-based)."""
    lo = anchor_index + HORIZON_DAYS * (horizon - 1) + 1
    return lo, lo + HORIZON_DAYS


def horizon_target(frame: GovernorateFrame, anchor_index: int, horizon: int) -> float:
    lo, hi = target_window(anchor_index, horizon)
    if anchor_index < 0 or hi > frame.n_days:
        raise InsufficientFuture(f"{frame.governorate_id}: horizon {horizon} window of anchor "
                                 f"{frame.start + dt.timedelta(days=anchor_index)} exceeds data")
    return float(np.sum(frame.series["new_cases"][lo:hi]))


def build_targets(frame: GovernorateFrame, anchor: dt.date) -> TargetVector:
    i = frame.index_of(anchor)
    return TargetVector(*(horizon_target(frame, i, k) for k in HORIZONS))


@dataclass
class Panel:
    """One row per (governorate, anchor); targets are NaN where the label window runs past the data."""

    governorate: np.ndarray
    anchor: np.ndarray          # datetime64[D]
    anchor_index: np.ndarray    # index into the governorate's frame
    targets: np.ndarray         # (n, 4)
    frames: dict
    n_excluded: int = 0

    def __len__(self):
        return len(self.governorate)

    def take(self, idx) -> "Panel":
        return Panel(self.governorate[idx], self.anchor[idx], self.anchor_index[idx],
                     self.targets[idx], self.frames, self.n_excluded)

    def target(self, horizon: int) -> np.ndarray:
        return self.targets[:, horizon - 1]


def assemble_panel(frames: dict, anchors=None, require_horizons=HORIZONS,
                   min_history: int = MAX_WINDOW) -> Panel:
    """Collect eligible (governorate, anchor) samples.

    ``anchors``: iterable of dates applied to every governorate; default every
    frame day. A sample needs ``min_history`` days up to and including the
    anchor and complete label windows for each of ``require_horizons``.
    """
    govs, days, idxs, ys = [], [], [], []
    excluded = 0
    for gid in sorted(frames):
        fr = frames[gid]
        cand = range(fr.n_days) if anchors is None else (fr.index_of(a) for a in anchors)
        for i in cand:
            if i - min_history + 1 < 0 or i >= fr.n_days:
                excluded += 1
                continue
            y = np.full(len(HORIZONS), np.nan)
            ok = True
            for k in HORIZONS:
                if target_window(i, k)[1] <= fr.n_days:
                    y[k - 1] = horizon_target(fr, i, k)
                elif k in require_horizons:
                    ok = False
            if not ok:
                excluded += 1
                continue
            govs.append(gid)
            days.append(np.datetime64(fr.start, "D") + i)
            idxs.append(i)
            ys.append(y)
    if excluded:
        log.info("assemble_panel: excluded %d sample(s) lacking history or future", excluded)
    if not govs:
        raise EmptyPanel("no (governorate, anchor) sample has enough history and future")
    return Panel(np.array(govs), np.array(days, dtype="datetime64[D]"), np.array(idxs, dtype=np.int64),
                 np.array(ys), frames, excluded)


def build_frames(bundle) -> dict[str, GovernorateFrame]:
    """Aligned frames for every registered governorate over the common date range."""
    registry = bundle.registry
    by_gov = {}
    for r in bundle.reports:
        by_gov.setdefault(r.governorate_id, []).append(r)
    missing = sorted(set(registry) - set(by_gov))
    if missing:
        raise MissingData(f"no cholera reports for {missing}")

    cases, deaths = {}, {}
    for gid in sorted(registry):
        ivs = cumulative_to_new(by_gov[gid])
        cases[gid] = interpolate_daily(ivs, "new_cases", gid)
        deaths[gid] = interpolate_daily(ivs, "new_deaths", gid)
    start = max(s.start for s in cases.values())
    end = min(s.end for s in cases.values())
    if start > end:
        raise MissingData("cholera report ranges of the governorates do not overlap")
    n = (end - start).days + 1
    rain = aggregate_rainfall(bundle.rainfall, bundle.gridmap)
    conflict = aggregate_conflict(bundle.conflict, start, end, registry)

    frames = {}
    for gid in sorted(registry):
        pop = registry[gid].population
        off = (start - cases[gid].start).days
        fr = GovernorateFrame(gid, start)
        fr.series["new_cases"] = normalize_per_10k(cases[gid], pop).values[off:off + n]
        fr.series["new_deaths"] = normalize_per_10k(deaths[gid], pop).values[off:off + n]
        gr = rain.get(gid, {})
        vals = np.empty(n)
        for i in range(n):
            day = start + dt.timedelta(days=i)
            if day not in gr:
                raise MissingData(f"no rainfall for {gid} on {day}")
            vals[i] = gr[day]
        fr.series["rainfall"] = vals
        fr.series["conflict"] = conflict[gid]
        frames[gid] = fr
    neighbor_mean(frames, registry)
    for fr in frames.values():
        fr.series = {s: fr.series[s] for s in SERIES_NAMES}
    return frames


def write_frames_csv(path, frames):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("governorate", "date") + SERIES_NAMES)
        for gid in sorted(frames):
            fr = frames[gid]
            for i in range(fr.n_days):
                w.writerow([gid, (fr.start + dt.timedelta(days=i)).isoformat()]
                           + [repr(float(fr.series[s][i])) for s in SERIES_NAMES])


def write_panel_csv(path, panel: Panel):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("governorate", "t") + SERIES_NAMES + tuple(f"y{k}" for k in HORIZONS))
        for r in range(len(panel)):
            fr = panel.frames[panel.governorate[r]]
            i = panel.anchor_index[r]
            ys = ["" if np.isnan(v) else repr(float(v)) for v in panel.targets[r]]
            w.writerow([panel.governorate[r], str(panel.anchor[r])]
                       + [repr(float(fr.series[s][i])) for s in SERIES_NAMES] + ys)
