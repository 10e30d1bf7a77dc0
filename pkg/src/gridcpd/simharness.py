"""Synthetic streams, detection-delay experiments and cost measurements.

Randomness comes from numpy's PCG64 generator.  Replication ``r`` of an
experiment seeded with ``seed`` draws from
``default_rng(SeedSequence(seed, spawn_key=(r,)))``, so replications are
independent of each other and of the number of worker threads.
"""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, TypeVar

import numpy as np

from gridcpd.detectors import DetectorConfig, ExpFamModel, OnlineDetector, scan_first_alarm
from gridcpd.errors import ConfigError, DomainError
from gridcpd.summaries import storage_bound

__all__ = [
    "CostReport",
    "DelayReport",
    "StreamSpec",
    "benchmark_costs",
    "estimate_delay",
    "gen_stream",
    "map_replications",
    "replication_rng",
]

STREAM_KINDS = ("gauss_mean", "gauss_cov", "poisson")

T = TypeVar("T")


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent generator for replication ``rep`` of an experiment seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(rep),)))


def map_replications(fn: Callable[[int], T], count: int, threads: int = 1) -> list[T]:
    """``[fn(0), ..., fn(count-1)]``, optionally on a thread pool; order is preserved."""
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    if threads == 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _matrix(value, p: int, name: str) -> Optional[tuple]:
    if value is None:
        return None
    m = np.asarray(value, dtype=np.float64)
    if m.shape != (p, p):
        raise DomainError(f"{name} must be {p}x{p}, got shape {m.shape}")
    if not np.all(np.isfinite(m)) or not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise DomainError(f"{name} must be a finite symmetric matrix")
    low = np.linalg.eigvalsh(m)[0]
    if low < -1e-10 * max(1.0, np.abs(m).max()):
        raise DomainError(f"{name} is not positive semi-definite (smallest eigenvalue {low:.3g})")
    return tuple(map(tuple, m.tolist()))


def _psd_root(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class StreamSpec:
    """A stream with at most one change, after observation ``tau``.

    Gaussian mean: ``mu2 = mu1 + phi k^{-1/2} (1_k, 0_{p-k})`` and noise
    ``sigma N(0, I)``.  Gaussian covariance: ``N(mu1, Sigma1)`` before,
    ``N(mu1, Sigma2)`` after, where ``Sigma2`` is either given or
    ``cov_scale * Sigma1``.  Poisson: rates ``rate1`` then ``rate2``.
    """

    kind: str
    N: int
    p: int = 1
    tau: Optional[int] = None
    phi: float = 0.0
    k: int = 1
    mu1: Optional[tuple] = None
    sigma: float = 1.0
    sigma1: Optional[tuple] = None
    sigma2: Optional[tuple] = None
    cov_scale: Optional[float] = None
    rate1: float = 1.0
    rate2: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in STREAM_KINDS:
            raise DomainError(f"stream kind must be one of {STREAM_KINDS}, got {self.kind!r}")
        if self.N < 1 or self.p < 1:
            raise DomainError("N and p must be positive")
        if self.kind == "poisson" and self.p != 1:
            raise DomainError("Poisson streams are one-dimensional")
        if self.tau is not None and not 0 <= self.tau < self.N:
            raise DomainError(f"need 0 <= tau < N, got tau={self.tau}, N={self.N}")
        if not 1 <= self.k <= self.p:
            raise DomainError(f"need 1 <= k <= p, got k={self.k}")
        if not self.phi >= 0 or not self.sigma >= 0:
            raise DomainError("phi and sigma must be non-negative")
        if self.mu1 is not None:
            mu = np.asarray(self.mu1, dtype=np.float64).reshape(-1)
            if mu.shape[0] != self.p:
                raise DomainError(f"mu1 must have length {self.p}")
            object.__setattr__(self, "mu1", tuple(mu.tolist()))
        object.__setattr__(self, "sigma1", _matrix(self.sigma1, self.p, "sigma1"))
        object.__setattr__(self, "sigma2", _matrix(self.sigma2, self.p, "sigma2"))
        if self.cov_scale is not None and not self.cov_scale >= 0:
            raise DomainError("cov_scale must be non-negative")
        if self.sigma2 is not None and self.cov_scale is not None:
            raise DomainError("give either sigma2 or cov_scale, not both")
        rate2 = self.rate1 if self.rate2 is None else self.rate2
        if not (self.rate1 >= 0 and rate2 >= 0):
            raise DomainError("Poisson rates must be non-negative")

    @property
    def mean1(self) -> np.ndarray:
        return np.zeros(self.p) if self.mu1 is None else np.asarray(self.mu1)

    @property
    def mean2(self) -> np.ndarray:
        shift = np.zeros(self.p)
        shift[: self.k] = self.phi / math.sqrt(self.k)
        return self.mean1 + shift

    @property
    def cov1(self) -> np.ndarray:
        return np.eye(self.p) if self.sigma1 is None else np.asarray(self.sigma1)

    @property
    def cov2(self) -> np.ndarray:
        if self.sigma2 is not None:
            return np.asarray(self.sigma2)
        return self.cov1 * (1.0 if self.cov_scale is None else self.cov_scale)

    def null(self) -> "StreamSpec":
        """Same stream without the change."""
        return StreamSpec(**{**asdict(self), "tau": None})

    def to_dict(self) -> dict:
        return asdict(self)


def gen_stream(spec: StreamSpec, seed) -> np.ndarray:
    """Draw an ``(N, p)`` stream; ``seed`` is an int, a SeedSequence or a Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, p = spec.N, spec.p
    cut = n if spec.tau is None else spec.tau
    if spec.kind == "poisson":
        rate2 = spec.rate1 if spec.rate2 is None else spec.rate2
        out = np.empty((n, 1))
        out[:cut, 0] = rng.poisson(spec.rate1, cut)
        out[cut:, 0] = rng.poisson(rate2, n - cut)
        return out
    z = rng.standard_normal((n, p))
    if spec.kind == "gauss_mean":
        out = spec.mean1 + spec.sigma * z
        out[cut:] += spec.mean2 - spec.mean1
        return out
    out = np.empty((n, p))
    out[:cut] = z[:cut] @ _psd_root(spec.cov1).T
    out[cut:] = z[cut:] @ _psd_root(spec.cov2).T
    return out + spec.mean1


@dataclass
class DelayReport:
    """Outcome of ``M`` seeded runs of one detector on one stream spec.

    ``premature + detected + missed == M``.  Without a change every alarm is
    premature.  ``mean_delay`` averages ``min(alarm, N) - tau`` over the
    non-premature runs and is ``None`` when there are none.
    """

    spec: dict
    config: dict
    M: int
    seed: int
    alarm_times: list
    premature: int
    detected: int
    missed: int
    mean_delay: Optional[float]
    delay_se: Optional[float]
    delay_defined: bool

    @property
    def false_alarm_rate(self) -> float:
        return self.premature / self.M

    @property
    def detection_rate(self) -> float:
        return self.detected / self.M

    def to_dict(self) -> dict:
        out = asdict(self)
        out["false_alarm_rate"] = self.false_alarm_rate
        out["detection_rate"] = self.detection_rate
        return out


def estimate_delay(
    config: DetectorConfig,
    spec: StreamSpec,
    M: int,
    seed: int = 0,
    *,
    threads: int = 1,
    engine: str = "scan",
    model: ExpFamModel | None = None,
) -> DelayReport:
    """Run ``M`` seeded streams and summarise alarm times.

    ``engine="scan"`` evaluates each recorded stream in bulk and
    ``engine="stream"`` feeds it through :class:`OnlineDetector`; both apply
    the same statistic and thresholds.
    """
    if M < 50:
        raise ConfigError(f"need M >= 50 runs, got {M}")
    if engine not in ("scan", "stream"):
        raise ConfigError(f"engine must be 'scan' or 'stream', got {engine!r}")

    def one(rep: int) -> Optional[int]:
        data = gen_stream(spec, replication_rng(seed, rep))
        det = OnlineDetector(config, model)
        if engine == "scan":
            return scan_first_alarm(det, data)
        return det.run_to_alarm(data, spec.N)

    alarms = map_replications(one, M, threads)
    tau = spec.tau
    if tau is None:
        premature = sum(a is not None for a in alarms)
        return DelayReport(spec.to_dict(), config.to_dict(), M, seed, alarms, premature, 0, M - premature,
                           None, None, False)
    premature = sum(a is not None and a <= tau for a in alarms)
    detected = sum(a is not None and a > tau for a in alarms)
    delays = [(spec.N if a is None else a) - tau for a in alarms if a is None or a > tau]
    mean = se = None
    if delays:
        mean = statistics.fmean(delays)
        se = statistics.stdev(delays) / math.sqrt(len(delays)) if len(delays) > 1 else 0.0
    return DelayReport(spec.to_dict(), config.to_dict(), M, seed, alarms, premature, detected,
                       M - premature - detected, mean, se, bool(delays))


@dataclass
class CostReport:
    """Per-update time (trailing-window mean, median over repetitions) and storage."""

    kind: str
    grid: str
    dim: int
    checkpoints: list[int]
    update_seconds: list[float]
    stored_scalars: list[int]
    storage_bounds: list[float] = field(default_factory=list)
    resets: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _bench_stream(config: DetectorConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    if config.kind == "poisson_rate":
        return rng.poisson(3.0, (n, 1)).astype(np.float64)
    return rng.standard_normal((n, config.p))


def benchmark_costs(
    config: DetectorConfig,
    checkpoints: Sequence[int],
    repetitions: int = 3,
    *,
    window: int = 200,
    seed: int = 0,
) -> CostReport:
    """Time single updates of an :class:`OnlineDetector` on a null stream.

    The per-update time at checkpoint ``t`` is the mean over the ``window``
    updates ending at ``t``.  Critical constants are raised far out of reach
    so that the detector keeps growing; the work per update does not depend on
    them.  Should an alarm still occur the detector is reset and the count is
    reported.
    """
    cps = [int(c) for c in checkpoints]
    if not cps or cps != sorted(cps) or cps[0] < 2:
        raise ConfigError("checkpoints must be sorted ascending and >= 2")
    if repetitions < 1 or window < 1:
        raise ConfigError("repetitions and window must be positive")
    huge = 1e100
    quiet = config.replace(lam=huge, lam1=huge if config.lam1 else None, lam2=huge if config.lam2 else None)
    if quiet.grid == "full" and (quiet.horizon_cap or 0) < cps[-1]:
        raise ConfigError("checkpoints exceed the full grid's horizon cap")
    per_rep: list[list[float]] = []
    stored: list[int] = []
    resets = 0
    dim = 0
    for rep in range(repetitions):
        det = OnlineDetector(quiet)
        dim = det.statistic.dim
        data = _bench_stream(quiet, cps[-1], replication_rng(seed, rep))
        times = np.empty(cps[-1])
        clock = time.perf_counter
        for i in range(cps[-1]):
            start = clock()
            alarmed = det.step(data[i]).alarmed
            times[i] = clock() - start
            if alarmed:
                det.reset()
                resets += 1
            if rep == 0 and i + 1 in cps:
                stored.append(det.stored_scalars)
        per_rep.append([float(times[max(0, c - window) : c].mean()) for c in cps])
    medians = [float(np.median([r[j] for r in per_rep])) for j in range(len(cps))]
    bounds = [storage_bound(dim, c) for c in cps]
    return CostReport(config.kind, config.grid, dim, cps, medians, stored, bounds, resets)
