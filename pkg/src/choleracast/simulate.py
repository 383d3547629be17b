"""Seeded synthetic inputs with a planted rainfall-to-cases lag.

Generative model, per governorate g and day t (rates per 10,000 people):

    r_g(t)   mean over g's grid cells of max(0, annual sinusoid + noise); the
             noise is a persistent AR(1) spell term plus daily white noise
    f_g(t)   conflict fatalities: sparse bursts
    lam_g(t) = b0 + b1 * max(0, rbar_g(t - 10) - theta)^2
                  + b2 * fbar_g(t - 7)
                  + b3 * mean over neighbours n of c_n(t - 5)
    cases    ~ Poisson(lam * pop / 1e4), deaths ~ Binomial(cases, cfr)

rbar and fbar are trailing 7-day means. Cumulative counts are reported every
1-6 days; the first emitted day and the last simulated day always carry a
report. A burn-in period precedes the emitted range so the epidemic is
already under way on day 0.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import (LATTICE, OUTSIDE, ConflictEvent, GovernorateMeta, RainGridObservation,
                     RawCumulativeReport, write_cholera_reports, write_conflict, write_governorate_meta,
                     write_gridmap, write_rainfall)
from .seeding import stream

INPUT_FILES = {
    "cholera": "cholera.csv",
    "rainfall": "rainfall.csv",
    "conflict": "conflict.csv",
    "gridmap": "gridmap.csv",
    "governorates": "governorates.json",
}


@dataclass(frozen=True)
class SimConfig:
    seed: int = 42
    n_governorates: int = 21
    n_days: int = 300
    start: dt.date = dt.date(2017, 5, 6)
    burn_in: int = 60
    b0: float = 0.05
    b1: float = 0.08
    b2: float = 0.05
    b3: float = 0.3
    theta: float = 3.0
    rain_mean: float = 2.0
    rain_amplitude: tuple = (0.5, 1.5)
    rain_peak_doy: float = 227.0        # mid-August
    rain_phase_jitter: float = 15.0
    rain_noise: float = 1.5
    rain_spell_sd: float = 2.5
    rain_persistence: float = 0.99      # daily AR(1) coefficient of the spell term
    rain_lag: int = 10
    conflict_lag: int = 7
    neighbor_lag: int = 5
    smooth: int = 7
    cfr: float = 0.005
    report_gap: tuple = (1, 6)
    n_neighbors: int = 3
    n_outside_cells: int = 4
    population_range: tuple = (200_000, 3_000_000)

    def __post_init__(self):
        if self.n_governorates < 2:
            raise ValueError("n_governorates must be >= 2")
        if self.n_days < 120:
            raise ValueError("n_days must be >= 120")


def _layout(cfg: SimConfig):
    rng = stream(cfg.seed, "sim/layout")
    G = cfg.n_governorates
    ids = [f"G{i + 1:02d}" for i in range(G)]
    # distinct base cells on a coarse grid inside a Yemen-sized box
    side = int(np.ceil(np.sqrt(G)))
    slots = rng.permutation(side * side)[:G]
    base = np.stack([12.0 + 1.5 * (slots // side), 43.0 + 1.5 * (slots % side)], axis=1)
    base += rng.uniform(0, 0.75, size=base.shape)
    pts = np.round(base / LATTICE) * LATTICE
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    k = min(cfg.n_neighbors, G - 1)
    nb = {g: set() for g in ids}
    for i in range(G):
        for j in np.argsort(d[i], kind="stable")[:k]:
            nb[ids[i]].add(ids[j])
            nb[ids[j]].add(ids[i])
    pops = rng.integers(cfg.population_range[0], cfg.population_range[1], size=G)
    registry = {g: GovernorateMeta(g, int(pops[i]), frozenset(nb[g])) for i, g in enumerate(ids)}

    gridmap, cells = {}, {g: [] for g in ids}
    for i, g in enumerate(ids):
        bi, bj = int(round(pts[i, 0] / LATTICE)), int(round(pts[i, 1] / LATTICE))
        for di, dj in [(0, 0), (0, 1), (1, 0), (1, 1)][:int(rng.integers(1, 5))]:
            key = (bi + di, bj + dj)
            if key not in gridmap:
                gridmap[key] = g
                cells[g].append(key)
    for m in range(cfg.n_outside_cells):
        gridmap[(int(round(20.0 / LATTICE)) + m, int(round(40.0 / LATTICE)))] = OUTSIDE
    return ids, registry, gridmap, cells


def _trailing_mean(x, w):
    c = np.concatenate(([0.0], np.cumsum(x)))
    out = np.empty_like(x)
    for t in range(len(x)):
        lo = max(0, t - w + 1)
        out[t] = (c[t + 1] - c[lo]) / (t + 1 - lo)
    return out


def simulate_tables(cfg: SimConfig):
    """In-memory tables: (reports, rain observations, conflict events, gridmap, registry)."""
    ids, registry, gridmap, cells = _layout(cfg)
    G, T = len(ids), cfg.burn_in + cfg.n_days
    day0 = cfg.start - dt.timedelta(days=cfg.burn_in)
    doy = np.array([(day0 + dt.timedelta(days=t)).timetuple().tm_yday for t in range(T)], dtype=float)

    # rainfall: cell values first, governorate series is their mean (what ingest will see)
    rng = stream(cfg.seed, "sim/rainfall")
    amp = rng.uniform(cfg.rain_amplitude[0], cfg.rain_amplitude[1], size=G)
    shift = rng.uniform(-cfg.rain_phase_jitter, cfg.rain_phase_jitter, size=G)
    cell_rain = {}
    rain = np.zeros((G, T))
    phi = cfg.rain_persistence
    for i, g in enumerate(ids):
        season = cfg.rain_mean + amp[i] * np.sin(2 * np.pi * (doy - cfg.rain_peak_doy + 91.25 + shift[i]) / 365.0)
        # persistent wet/dry spells shared by the governorate's cells
        spell = np.empty(T)
        spell[0] = cfg.rain_spell_sd * rng.standard_normal()
        eps = rng.standard_normal(T)
        for t in range(1, T):
            spell[t] = phi * spell[t - 1] + np.sqrt(1 - phi * phi) * cfg.rain_spell_sd * eps[t]
        vals = []
        for key in cells[g]:
            v = np.clip(season + spell + cfg.rain_noise * rng.standard_normal(T), 0, None)
            cell_rain[key] = v
            vals.append(v)
        rain[i] = np.mean(vals, axis=0)
    outside = sorted(k for k, v in gridmap.items() if v == OUTSIDE)
    for key in outside:
        cell_rain[key] = rng.exponential(2.0, size=T)

    rng = stream(cfg.seed, "sim/conflict")
    rate = rng.uniform(0.03, 0.15, size=G)
    conflict_events = []
    fat = np.zeros((G, T), dtype=np.int64)
    for i, g in enumerate(ids):
        for t in np.flatnonzero(rng.random(T) < rate[i]):
            for _ in range(int(rng.integers(1, 4))):
                k = int(rng.geometric(0.2))
                fat[i, t] += k
                conflict_events.append((g, int(t), k))

    rbar = np.stack([_trailing_mean(rain[i], cfg.smooth) for i in range(G)])
    fbar = np.stack([_trailing_mean(fat[i].astype(float), cfg.smooth) for i in range(G)])
    pop = np.array([registry[g].population for g in ids], dtype=float)
    nb_idx = [[ids.index(n) for n in sorted(registry[g].neighbors)] for g in ids]

    rng = stream(cfg.seed, "sim/cases")
    cases = np.zeros((G, T), dtype=np.int64)
    deaths = np.zeros((G, T), dtype=np.int64)
    crate = np.zeros((G, T))
    for t in range(T):
        lam = np.full(G, cfg.b0)
        if t >= cfg.rain_lag:
            lam += cfg.b1 * np.clip(rbar[:, t - cfg.rain_lag] - cfg.theta, 0, None) ** 2
        if t >= cfg.conflict_lag:
            lam += cfg.b2 * fbar[:, t - cfg.conflict_lag]
        if t >= cfg.neighbor_lag:
            lam += cfg.b3 * np.array([crate[nb, t - cfg.neighbor_lag].mean() if nb else 0.0
                                      for nb in nb_idx])
        cases[:, t] = rng.poisson(lam * pop / 1e4)
        deaths[:, t] = rng.binomial(cases[:, t], cfg.cfr)
        crate[:, t] = cases[:, t] * 1e4 / pop

    rng = stream(cfg.seed, "sim/reports")
    lo, hi = cfg.report_gap
    reports = []
    cc, cd = np.cumsum(cases, axis=1), np.cumsum(deaths, axis=1)
    for i, g in enumerate(ids):
        t = cfg.burn_in
        days = []
        while t < T - 1:
            days.append(t)
            t += int(rng.integers(lo, hi + 1))
        days.append(T - 1)
        for t in days:
            reports.append(RawCumulativeReport(g, day0 + dt.timedelta(days=t), float(cc[i, t]), float(cd[i, t])))

    rain_obs = [RainGridObservation(k[0] * LATTICE, k[1] * LATTICE, day0 + dt.timedelta(days=t),
                                    float(cell_rain[k][t]))
                for k in sorted(cell_rain) for t in range(cfg.burn_in, T)]
    events = [ConflictEvent(g, day0 + dt.timedelta(days=t), k)
              for g, t, k in conflict_events if t >= cfg.burn_in]
    return reports, rain_obs, events, gridmap, registry


def simulate(out_dir, seed: int = 42, n_governorates: int = 21, n_days: int = 300,
             config: SimConfig = None) -> dict:
    """Write the five input files into ``out_dir``; returns name -> path."""
    cfg = config or SimConfig(seed=seed, n_governorates=n_governorates, n_days=n_days)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports, rain_obs, events, gridmap, registry = simulate_tables(cfg)
    paths = {k: out / v for k, v in INPUT_FILES.items()}
    write_cholera_reports(paths["cholera"], reports)
    write_rainfall(paths["rainfall"], rain_obs)
    write_conflict(paths["conflict"], events)
    write_gridmap(paths["gridmap"], gridmap)
    write_governorate_meta(paths["governorates"], registry)
    return paths
