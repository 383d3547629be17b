"""Run configuration: one JSON document, overridable from the command line."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .cv import LEAKAGE_MODES
from .gbtree import GbtParams
from .prep import HORIZONS
from .simulate import INPUT_FILES
from .tpe import TpeSettings, default_gbt_space


@dataclass
class RunConfig:
    inputs: dict = field(default_factory=dict)     # cholera, rainfall, conflict, gridmap, governorates
    out_dir: str = "out"
    horizons: tuple = HORIZONS
    schedule: str = None                           # FoldSchedule JSON path; None = default schedule
    leakage: str = "label"
    anchor_stride: int = 3
    q_cut: float = 0.001
    corr_threshold: float = 0.97
    cap: int = 50
    min_delta: float = 1e-4
    tune_max_features: int = 60
    forward_max_candidates: int = 80
    gbt: dict = field(default_factory=dict)        # pinned GbtParams fields, excluded from tuning
    n_trials: int = 25
    seed: int = 42
    tpe: dict = field(default_factory=dict)        # TpeSettings overrides
    retune_final: bool = False
    plot_data: bool = True

    @classmethod
    def from_input_dir(cls, input_dir, **kw) -> "RunConfig":
        d = Path(input_dir)
        return cls(inputs={k: str(d / v) for k, v in INPUT_FILES.items()}, **kw)

    def validate(self, check_files: bool = True) -> "RunConfig":
        missing = sorted(set(INPUT_FILES) - set(self.inputs))
        if missing:
            raise ValueError(f"config.inputs lacks {missing}")
        if check_files:
            for k, p in sorted(self.inputs.items()):
                if not Path(p).is_file():
                    raise FileNotFoundError(f"input {k!r} not found: {p}")
            if self.schedule is not None and not Path(self.schedule).is_file():
                raise FileNotFoundError(f"schedule file not found: {self.schedule}")
        self.horizons = tuple(sorted(set(int(h) for h in self.horizons)))
        if not self.horizons or not set(self.horizons) <= set(HORIZONS):
            raise ValueError(f"horizons must be a non-empty subset of {HORIZONS}")
        if self.leakage not in LEAKAGE_MODES:
            raise ValueError(f"leakage must be one of {LEAKAGE_MODES}")
        checks = [
            (self.anchor_stride >= 1, "anchor_stride must be >= 1"),
            (0 < self.q_cut <= 1, "q_cut must be in (0, 1]"),
            (0 < self.corr_threshold <= 1, "corr_threshold must be in (0, 1]"),
            (self.cap >= 1, "cap must be >= 1"),
            (self.min_delta >= 0, "min_delta must be >= 0"),
            (self.tune_max_features is None or self.tune_max_features >= 1, "tune_max_features must be >= 1"),
            (self.forward_max_candidates is None or self.forward_max_candidates >= 1,
             "forward_max_candidates must be >= 1"),
            (self.n_trials >= 0, "n_trials must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        unknown = set(self.gbt) - {f.name for f in dataclasses.fields(GbtParams)}
        if unknown:
            raise ValueError(f"unknown gbt parameters {sorted(unknown)}")
        GbtParams.from_dict(self.gbt)
        TpeSettings(**self.tpe)
        return self

    def search_space(self) -> dict:
        return {k: v for k, v in default_gbt_space().items() if k not in self.gbt}

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["horizons"] = list(self.horizons)
        d["inputs"] = {k: str(v) for k, v in self.inputs.items()}
        if self.schedule is not None:
            d["schedule"] = str(self.schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        """Read a config; relative input and schedule paths resolve against its directory."""
        with open(path) as fh:
            cfg = cls.from_dict(json.load(fh))
        root = Path(path).resolve().parent
        cfg.inputs = {k: str(root / v) for k, v in cfg.inputs.items()}
        if cfg.schedule is not None:
            cfg.schedule = str(root / cfg.schedule)
        return cfg

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
