"""Monte Carlo calibration of the leading critical constants.

For each of ``K`` seeded null streams the detector's statistic is divided by
its critical-value shape and maximised over every ``(t, g)`` pair (and
sparsity level).  The constant is the ``k``-th smallest of these maxima with
``k = ceil((1 - alpha) K)``, so that roughly a fraction ``alpha`` of null
streams would alarm before the horizon.  For calibrated CHAD the dense and
sparse branches are calibrated separately at ``alpha / 2`` each.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from gridcpd.detectors import DetectorConfig, ExpFamModel, OnlineDetector, scan_normalized_max
from gridcpd.errors import ConfigError, NumericError
from gridcpd.simharness import StreamSpec, gen_stream, map_replications, replication_rng

__all__ = ["CalibrationReport", "CalibrationSpec", "calibrate", "calibrate_chad", "order_statistic_index"]


def order_statistic_index(alpha: float, K: int) -> int:
    """1-based index ``ceil((1 - alpha) K)``, immune to float noise in the product."""
    return max(1, math.ceil(round((1.0 - alpha) * K, 9)))


def default_null(config: DetectorConfig, N: int) -> StreamSpec:
    if config.kind == "cov_opnorm":
        return StreamSpec(kind="gauss_cov", N=N, p=config.p)
    if config.kind == "poisson_rate":
        return StreamSpec(kind="poisson", N=N, rate1=1.0)
    return StreamSpec(kind="gauss_mean", N=N, p=config.p, sigma=config.sigma)


@dataclass(frozen=True)
class CalibrationSpec:
    config: DetectorConfig
    N: int = 1000
    K: int = 1000
    alpha: float = 0.05
    seed: int = 0
    null_model: Optional[StreamSpec] = None
    threads: int = 1

    def __post_init__(self) -> None:
        if self.K < 100:
            raise ConfigError(f"need K >= 100 replications, got {self.K}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.N < 2:
            raise ConfigError(f"need N >= 2, got {self.N}")
        null = self.null_model or default_null(self.config, self.N)
        object.__setattr__(self, "null_model", replace(null, N=self.N, tau=None))

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("threads")
        return out


@dataclass
class CalibrationReport:
    kind: str
    mode: str
    constants: dict
    samples: dict
    quantile_index: dict
    alpha: float
    K: int
    N: int
    seed: int
    runtime_seconds: float
    warnings: list = field(default_factory=list)
    degenerate_branches: list = field(default_factory=list)
    spec: dict = field(default_factory=dict)

    def apply(self, config: DetectorConfig) -> DetectorConfig:
        """``config`` with the calibrated constants (and calibrated mode) filled in."""
        updates = {k: v for k, v in self.constants.items() if v is not None}
        if config.kind in ("uni_mean", "chad_mean"):
            updates["mode"] = self.mode
        return config.replace(**updates)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationReport":
        data = json.loads(text)
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _samples(spec: CalibrationSpec, model: ExpFamModel | None) -> np.ndarray:
    det = OnlineDetector(spec.config, model)
    statistic = det.statistic

    def one(rep: int) -> np.ndarray:
        data = gen_stream(spec.null_model, replication_rng(spec.seed, rep))
        return scan_normalized_max(statistic, data)

    return np.array(map_replications(one, spec.K, spec.threads))


def _quantile(sample: np.ndarray, share: float, branch: str, notes: list) -> tuple[float, int]:
    k = order_statistic_index(share, sample.size)
    value = float(np.sort(sample)[k - 1])
    if np.all(sample == sample[0]):
        notes.append(f"{branch}: all {sample.size} sampled maxima are equal ({sample[0]:.6g})")
    if not (value > 0 and math.isfinite(value)):
        raise NumericError(f"{branch}: calibrated constant {value!r} is not positive", best_estimate=value)
    return value, k


def _finish(spec, samples: dict, constants: dict, index: dict, notes: list, degenerate: list, start) -> CalibrationReport:
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=3)
    return CalibrationReport(
        kind=spec.config.kind,
        mode=spec.config.mode,
        constants=constants,
        samples={b: [float(x) for x in s] for b, s in samples.items()},
        quantile_index=index,
        alpha=spec.alpha,
        K=spec.K,
        N=spec.N,
        seed=spec.seed,
        runtime_seconds=time.perf_counter() - start,
        warnings=notes,
        degenerate_branches=degenerate,
        spec=spec.to_dict(),
    )


def calibrate(spec: CalibrationSpec, model: ExpFamModel | None = None) -> CalibrationReport:
    """Calibrate ``lam`` (or ``lam1``/``lam2`` for calibrated CHAD)."""
    if spec.config.kind == "chad_mean" and spec.config.mode == "calibrated":
        return calibrate_chad(spec)
    start = time.perf_counter()
    sample = _samples(spec, model)[:, 0]
    notes: list = []
    lam, k = _quantile(sample, spec.alpha, "main", notes)
    return _finish(spec, {"main": sample}, {"lam": lam}, {"main": k}, notes, [], start)


def calibrate_chad(spec: CalibrationSpec) -> CalibrationReport:
    """Dense and sparse CHAD constants, each at the upper ``alpha / 2`` quantile.

    When a branch has no sparsity levels (the sparse one for ``p = 1``) the
    other branch receives the whole ``alpha`` and the empty one is reported.
    """
    cfg = spec.config
    if cfg.kind != "chad_mean" or cfg.mode != "calibrated":
        raise ConfigError("calibrate_chad needs a chad_mean detector in calibrated mode")
    start = time.perf_counter()
    both = _samples(spec, None)
    branches = {"dense": both[:, 0], "sparse": both[:, 1]}
    live = [b for b, s in branches.items() if np.all(np.isfinite(s))]
    degenerate = [b for b in branches if b not in live]
    share = spec.alpha / len(live)
    notes: list = [f"{b}: branch has no sparsity levels at p={cfg.p}; alpha goes to the other branch" for b in degenerate]
    constants: dict = {"lam1": None, "lam2": None}
    index: dict = {}
    for branch in live:
        value, k = _quantile(branches[branch], share, branch, notes)
        constants["lam1" if branch == "dense" else "lam2"] = value
        index[branch] = k
    samples = {b: (s if b in live else np.array([])) for b, s in branches.items()}
    return _finish(spec, samples, constants, index, notes, degenerate, start)
