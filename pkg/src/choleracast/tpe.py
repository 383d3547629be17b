"""Tree-structured Parzen estimator for sequential hyperparameter search.

After ``n_startup`` prior draws, the ``ceil(gamma * sqrt(n))`` lowest-loss
trials form the good set and the rest the bad set (``split_rule="quantile"``
uses ``ceil(gamma * n)`` instead). Each dimension gets a Parzen mixture per set:
one truncated Gaussian per observed value plus the prior, each weighted
1/(k+1). Candidates are drawn from the good mixture and the one with the
largest good/bad density ratio is proposed. Dimensions are modelled
independently. Log-uniform dimensions live in log space; integer dimensions
are treated as continuous on [lo - 0.5, hi + 0.5] and rounded at the end.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

log = logging.getLogger(__name__)

KINDS = ("uniform", "loguniform", "int")


@dataclass(frozen=True)
class Dimension:
    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.kind == "loguniform" and self.lo <= 0:
            raise ValueError("log-uniform bounds must be positive")

    @property
    def internal_bounds(self) -> tuple[float, float]:
        if self.kind == "loguniform":
            return math.log(self.lo), math.log(self.hi)
        if self.kind == "int":
            return self.lo - 0.5, self.hi + 0.5
        return float(self.lo), float(self.hi)

    def to_internal(self, v: float) -> float:
        return math.log(v) if self.kind == "loguniform" else float(v)

    def from_internal(self, u: float):
        if self.kind == "loguniform":
            return float(min(max(math.exp(u), self.lo), self.hi))
        if self.kind == "int":
            return int(min(max(round(u), self.lo), self.hi))
        return float(min(max(u, self.lo), self.hi))

    def sample_prior(self, rng):
        if self.kind == "int":
            return int(rng.integers(int(self.lo), int(self.hi) + 1))
        a, b = self.internal_bounds
        return self.from_internal(rng.uniform(a, b))

    def contains(self, v) -> bool:
        return self.lo <= v <= self.hi and (self.kind != "int" or float(v).is_integer())


SearchSpace = dict   # name -> Dimension, iteration order is the draw order


def default_gbt_space() -> SearchSpace:
    return {
        "eta": Dimension("loguniform", 0.01, 0.3),
        "n_rounds": Dimension("int", 50, 500),
        "max_depth": Dimension("int", 2, 10),
        "min_child_weight": Dimension("uniform", 1.0, 10.0),
        "reg_lambda": Dimension("loguniform", 0.1, 10.0),
        "gamma": Dimension("uniform", 0.0, 5.0),
        "subsample": Dimension("uniform", 0.5, 1.0),
        "colsample": Dimension("uniform", 0.5, 1.0),
    }


def space_to_dict(space: SearchSpace) -> dict:
    return {k: {"kind": d.kind, "lo": d.lo, "hi": d.hi} for k, d in space.items()}


def space_from_dict(d: dict) -> SearchSpace:
    return {k: Dimension(v["kind"], v["lo"], v["hi"]) for k, v in d.items()}


@dataclass
class Trial:
    index: int
    params: dict
    loss: float


@dataclass
class TrialHistory:
    trials: list = field(default_factory=list)

    def __len__(self):
        return len(self.trials)

    def append(self, params, loss) -> Trial:
        t = Trial(len(self.trials), dict(params), float(loss))
        self.trials.append(t)
        return t

    def best(self) -> Trial:
        return min(self.trials, key=lambda t: (t.loss, t.index))

    def best_so_far(self) -> list[float]:
        return list(np.minimum.accumulate([t.loss for t in self.trials]))

    def to_json(self) -> str:
        rows = [{"index": t.index, "params": t.params,
                 "loss": t.loss if math.isfinite(t.loss) else None} for t in self.trials]
        return json.dumps({"trials": rows}, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrialHistory":
        h = cls()
        for row in json.loads(text)["trials"]:
            h.append(row["params"], math.inf if row["loss"] is None else row["loss"])
        return h


@dataclass
class TpeSettings:
    n_startup: int = 10
    gamma: float = 0.25
    n_candidates: int = 24
    min_bandwidth_frac: float = 0.01
    split_rule: str = "sqrt"

    def __post_init__(self):
        if self.split_rule not in ("sqrt", "quantile"):
            raise ValueError(f"split_rule must be 'sqrt' or 'quantile', got {self.split_rule!r}")


class ParzenMixture:
    """Truncated-Gaussian kernels on [a, b] blended with the uniform prior."""

    def __init__(self, obs, a, b, min_bandwidth_frac=0.01):
        self.a, self.b = float(a), float(b)
        width = self.b - self.a
        mus = np.sort(np.asarray(obs, dtype=np.float64))
        k = len(mus)
        if k > 1:
            gaps = np.diff(mus)
            sig = np.maximum(np.concatenate(([0.0], gaps)), np.concatenate((gaps, [0.0])))
        else:
            sig = np.full(k, width)
        self.mus = mus
        self.sigmas = np.clip(sig, min_bandwidth_frac * width, width)
        self.weight = 1.0 / (k + 1)
        self._lo = ndtr((self.a - self.mus) / self.sigmas)
        self._hi = ndtr((self.b - self.mus) / self.sigmas)
        self._mass = np.maximum(self._hi - self._lo, 1e-300)

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        dens = np.full(x.shape, self.weight / (self.b - self.a))
        if len(self.mus):
            z = (x[:, None] - self.mus) / self.sigmas
            ker = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigmas * self._mass)
            dens = dens + self.weight * ker.sum(axis=1)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, dens, 0.0)

    def sample(self, rng, size) -> np.ndarray:
        comp = rng.integers(0, len(self.mus) + 1, size=size)
        u = rng.uniform(size=size)
        out = np.empty(size)
        prior = comp == len(self.mus)
        out[prior] = self.a + u[prior] * (self.b - self.a)
        ker = ~prior
        if ker.any():
            c = comp[ker]
            p = self._lo[c] + u[ker] * (self._hi[c] - self._lo[c])
            p = np.clip(p, 1e-300, 1 - 1e-16)
            out[ker] = self.mus[c] + self.sigmas[c] * ndtri(p)
        return np.clip(out, self.a, self.b)


def _split(history: TrialHistory, gamma: float, rule: str = "sqrt"):
    finite = [t for t in history.trials if math.isfinite(t.loss)]
    finite.sort(key=lambda t: (t.loss, t.index))
    scale = math.sqrt(len(finite)) if rule == "sqrt" else len(finite)
    n_good = min(len(finite), max(1, math.ceil(gamma * scale)))
    good = finite[:n_good]
    good_idx = {t.index for t in good}
    bad = [t for t in history.trials if t.index not in good_idx]
    return good, bad


def suggest(history: TrialHistory, space: SearchSpace, rng, settings: TpeSettings = None) -> dict:
    settings = settings or TpeSettings()
    if len(history) < settings.n_startup:
        return {name: dim.sample_prior(rng) for name, dim in space.items()}
    good, bad = _split(history, settings.gamma, settings.split_rule)
    if not good:
        return {name: dim.sample_prior(rng) for name, dim in space.items()}
    names = list(space)
    cand = np.empty((settings.n_candidates, len(names)))
    score = np.zeros(settings.n_candidates)
    for j, name in enumerate(names):
        dim = space[name]
        a, b = dim.internal_bounds
        lx = ParzenMixture([dim.to_internal(t.params[name]) for t in good], a, b, settings.min_bandwidth_frac)
        gx = ParzenMixture([dim.to_internal(t.params[name]) for t in bad], a, b, settings.min_bandwidth_frac)
        cand[:, j] = lx.sample(rng, settings.n_candidates)
        with np.errstate(divide="ignore"):
            score += np.log(lx.pdf(cand[:, j])) - np.log(gx.pdf(cand[:, j]))
    best = int(np.argmax(score))
    return {name: space[name].from_internal(cand[best, j]) for j, name in enumerate(names)}


def optimize(objective, space: SearchSpace, n_trials: int, seed: int,
             settings: TpeSettings = None, history: TrialHistory = None):
    """Sequential suggest/evaluate loop; returns (best params, history).

    A trial whose objective raises or returns a non-finite value is recorded
    with loss +inf and never enters the good set.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    settings = settings or TpeSettings()
    rng = np.random.default_rng(seed)
    history = history if history is not None else TrialHistory()
    for _ in range(n_trials):
        params = suggest(history, space, rng, settings)
        try:
            loss = float(objective(params))
        except Exception as exc:     # ObjectiveFailure sentinel
            log.warning("trial %d failed: %s", len(history), exc)
            loss = math.inf
        if not math.isfinite(loss):
            loss = math.inf
        t = history.append(params, loss)
        log.debug("trial %d loss %.6g %s", t.index, t.loss, params)
    return history.best().params, history


def random_search(objective, space: SearchSpace, n_trials: int, seed: int):
    """Pure prior sampling with the same rng stream as ``optimize``'s startup phase."""
    return optimize(objective, space, n_trials, seed, TpeSettings(n_startup=n_trials + 1))


# ---------------------------------------------------------------- benchmark


QUADRATIC_CENTER = {"x": 0.3, "y": -1.2, "z": 2.0}


def quadratic_space() -> SearchSpace:
    return {k: Dimension("uniform", -5.0, 5.0) for k in QUADRATIC_CENTER}


def quadratic(params: dict) -> float:
    """Convex bowl with an off-centre minimum of 0."""
    return float(sum((params[k] - c) ** 2 for k, c in QUADRATIC_CENTER.items()))


def compare_with_random(objective, space: SearchSpace, n_trials: int, seeds, settings: TpeSettings = None):
    """Best loss per seed for TPE and for random search, paired by seed."""
    tpe_best, rnd_best = [], []
    for s in seeds:
        tpe_best.append(optimize(objective, space, n_trials, s, settings)[1].best().loss)
        rnd_best.append(random_search(objective, space, n_trials, s)[1].best().loss)
    return np.array(tpe_best), np.array(rnd_best)
