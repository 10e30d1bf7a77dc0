"""Online detectors built on the recycled grid of candidate lags.

At every time ``t >= 2`` a detector evaluates a two-sample statistic for each
lag ``g`` in the current grid, using only the prefix sums ``S_{t-g}`` and
``S_t`` of a summary map ``h``, and raises an alarm the first time some lag's
statistic strictly exceeds its critical value.

Each detector kind is a small *statistic* object that knows

* ``summarize``: the summary map ``h`` applied row-wise,
* ``evaluate``: statistic and critical value for a batch of ``(t, g)`` rows,
* ``normalized``: the statistic divided by its critical-value shape, i.e. the
  quantity whose maximum over a null stream calibrates the leading constant.

Both :class:`OnlineDetector` (one grid per step) and :func:`scan` (all
``(t, g)`` pairs of a recorded stream at once) call the same ``evaluate``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from gridcpd import kernels
from gridcpd.errors import AlarmStateError, ConfigError, DegenerateInputError, DomainError, NumericError
from gridcpd.grid import GRID_KINDS, grid_pairs
from gridcpd.summaries import FULL_HORIZON_CAP, make_store

__all__ = [
    "KINDS",
    "Decision",
    "DetectorConfig",
    "ExpFamModel",
    "OnlineDetector",
    "chad_mean_stat",
    "cov_stat",
    "expfam_lr_stat",
    "gaussian_model",
    "make_statistic",
    "poisson_model",
    "poisson_stat",
    "run_to_alarm",
    "scan",
    "scan_first_alarm",
    "scan_normalized_max",
    "uni_mean_stat",
]

KINDS = ("uni_mean", "chad_mean", "cov_opnorm", "poisson_rate", "expfam_lr")
MODES = ("theory", "calibrated")


@dataclass(frozen=True)
class DetectorConfig:
    """Static configuration of one detector.

    ``lam`` is the leading constant of the critical value.  In calibrated CHAD
    mode ``lam1`` (dense sparsity levels) and ``lam2`` (sparse levels) replace
    it; they default to ``lam``.  ``sigma_cov_fixed`` is a pre-estimated noise
    level ``||Cov(Y)||_op`` that replaces the running estimate in the
    covariance statistic.
    """

    kind: str
    p: int = 1
    delta: float = 0.05
    lam: float = 1.0
    lam1: Optional[float] = None
    lam2: Optional[float] = None
    sigma: float = 1.0
    mode: str = "theory"
    known_pre_mean: bool = False
    grid: str = "dynamic"
    horizon_cap: Optional[int] = None
    sigma_cov_fixed: Optional[float] = None
    detector_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown detector kind {self.kind!r}; expected one of {KINDS}")
        if isinstance(self.p, bool) or int(self.p) != self.p or self.p < 1:
            raise ConfigError(f"p must be a positive integer, got {self.p!r}")
        if self.kind == "poisson_rate" and self.p != 1:
            raise ConfigError("poisson_rate monitors a single count series (p=1)")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("lam", "lam1", "lam2", "sigma_cov_fixed"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.grid not in GRID_KINDS:
            raise ConfigError(f"grid must be one of {GRID_KINDS}, got {self.grid!r}")
        if self.grid == "full" and (self.horizon_cap is None or not 2 <= self.horizon_cap <= FULL_HORIZON_CAP):
            raise ConfigError(f"grid='full' requires horizon_cap in [2, {FULL_HORIZON_CAP}]")

    @property
    def name(self) -> str:
        return self.detector_id or self.kind

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "DetectorConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class Decision:
    t: int
    alarmed: bool
    trigger_g: Optional[int]
    statistic: float
    threshold: float
    detector_id: str
    best_g: Optional[int] = None


@dataclass
class Evaluation:
    """Per-row statistics and critical values; ``aux`` carries kind-specific extras."""

    stat: np.ndarray
    thr: np.ndarray
    aux: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# exponential-family models


@dataclass(frozen=True)
class ExpFamModel:
    """Canonical exponential family ``eta(y) exp(theta . h(y) - A(theta))``.

    ``sufficient`` maps an ``(n, p)`` array of observations to ``(n, dim)``
    sufficient statistics.  ``mle`` maps a mean sufficient statistic to the
    maximiser of ``theta . m - A(theta)``.  ``max_value(Lambda, n)`` may be
    given in closed form to handle boundary maximisers (e.g. zero counts);
    otherwise it is assembled from ``mle`` and ``log_partition``.
    """

    name: str
    dim: int
    sufficient: Callable[[np.ndarray], np.ndarray]
    log_partition: Callable[[np.ndarray], float]
    mle: Callable[[np.ndarray], np.ndarray]
    max_value: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    validate: Optional[Callable[[np.ndarray], None]] = None

    def profile(self, sums: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """``sup_theta theta . Lambda - n A(theta)`` row by row."""
        if self.max_value is not None:
            return np.asarray(self.max_value(sums, counts), dtype=np.float64)
        out = np.empty(sums.shape[0])
        for i, (lam_row, n) in enumerate(zip(sums, counts)):
            # boundary maximisers surface as inf/nan and are reported below
            with np.errstate(all="ignore"):
                theta = np.asarray(self.mle(lam_row / n), dtype=np.float64)
                val = float(theta @ lam_row - n * self.log_partition(theta))
            if not math.isfinite(val):
                raise NumericError(f"{self.name}: maximiser failed for segment of length {n:g}")
            out[i] = val
        return out


def _xlogx_over(x: np.ndarray, n: np.ndarray) -> np.ndarray:
    # x * log(x / n) with 0 log 0 := 0
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe / n), 0.0)


def _check_counts(y: np.ndarray) -> None:
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DomainError("Poisson observations must be non-negative integers")


def poisson_model() -> ExpFamModel:
    """Poisson rate model; ``theta = log(rate)``, ``A(theta) = exp(theta)``."""
    return ExpFamModel(
        name="poisson",
        dim=1,
        sufficient=lambda y: np.asarray(y, dtype=np.float64).reshape(-1, 1),
        log_partition=lambda theta: float(np.exp(theta[0])),
        mle=lambda m: np.log(m),
        max_value=lambda lam, n: (_xlogx_over(lam[:, 0], n) - lam[:, 0]),
        validate=_check_counts,
    )


def gaussian_model(sigma: float = 1.0, p: int = 1) -> ExpFamModel:
    """Gaussian mean with known isotropic variance ``sigma^2``."""
    s2 = float(sigma) ** 2
    return ExpFamModel(
        name="gaussian",
        dim=p,
        sufficient=lambda y: np.asarray(y, dtype=np.float64).reshape(-1, p),
        log_partition=lambda theta: 0.5 * s2 * float(theta @ theta),
        mle=lambda m: m / s2,
        max_value=lambda lam, n: np.sum(lam * lam, axis=1) / (2.0 * n * s2),
    )


# ---------------------------------------------------------------------------
# statistics


class _Statistic:
    branches: tuple[str, ...] = ("main",)

    def __init__(self, config: DetectorConfig) -> None:
        self.config = config
        self.p = config.p

    @property
    def dim(self) -> int:
        return self.p

    def check(self, y: np.ndarray) -> None:
        """Validate an ``(n, p)`` block of observations (finiteness is checked upstream)."""

    def summarize(self, y: np.ndarray) -> np.ndarray:
        return y

    def evaluate(self, prefix, total, t, g) -> Evaluation:
        raise NotImplementedError

    def normalized(self, prefix, total, t, g) -> np.ndarray:
        raise NotImplementedError


class UniMeanStatistic(_Statistic):
    """Squared CUSUM against ``lam sigma^2 log(t/delta)`` (theory) or
    ``sigma^2 (1 + lam [L + sqrt(L)])`` with ``L = log(t/delta)`` (calibrated)."""

    def _squared(self, prefix, total, t, g) -> np.ndarray:
        if self.config.known_pre_mean:
            c = kernels.cusum_known_mean(total - prefix, g)
        else:
            c = kernels.cusum(prefix, total, t, g)
        return c[:, 0] ** 2

    def evaluate(self, prefix, total, t, g) -> Evaluation:
        cfg = self.config
        stat = self._squared(prefix, total, t, g)
        log_term = np.log(t / cfg.delta)
        s2 = cfg.sigma**2
        if cfg.mode == "theory":
            thr = cfg.lam * s2 * log_term
        else:
            thr = s2 * (1.0 + cfg.lam * (log_term + np.sqrt(log_term)))
        return Evaluation(stat, thr)

    def normalized(self, prefix, total, t, g) -> np.ndarray:
        cfg = self.config
        stat = self._squared(prefix, total, t, g) / cfg.sigma**2
        log_term = np.log(t / cfg.delta)
        if cfg.mode == "theory":
            return (stat / log_term)[:, None]
        return ((stat - 1.0) / (log_term + np.sqrt(log_term)))[:, None]


class ChadMeanStatistic(_Statistic):
    """Sparsity-adaptive thresholded CUSUM for multivariate mean changes."""

    def __init__(self, config: DetectorConfig) -> None:
        super().__init__(config)
        if config.mode == "calibrated":
            self.branches = ("dense", "sparse")
            self.lam_dense = config.lam1 if config.lam1 is not None else config.lam
            self.lam_sparse = config.lam2 if config.lam2 is not None else config.lam

    def _tables(self, t: np.ndarray):
        """Constants per row: ``(s, a, nu, shape, dense, valid)`` indexed by row."""
        mode = self.config.mode
        if mode == "calibrated":
            c = kernels.mean_test_constants(self.p, 2, mode)
            ones = np.zeros(t.shape[0], dtype=np.int64)
            valid = np.ones((1, len(c.s)), dtype=bool)
            return c.s, c.a[None], c.nu[None], c.shape[None], c.dense[None], valid, ones
        uniq, inverse = np.unique(t, return_inverse=True)
        widest = kernels.mean_test_constants(self.p, int(uniq[-1]), mode)
        s_levels = widest.s
        shape = (uniq.size, len(s_levels))
        a = np.zeros(shape)
        nus = np.ones(shape)
        z = np.ones(shape)
        dense = np.zeros(shape, dtype=bool)
        valid = np.zeros(shape, dtype=bool)
        for row, tt in enumerate(uniq):
            c = kernels.mean_test_constants(self.p, int(tt), mode)
            cols = [s_levels.index(s) for s in c.s]
            a[row, cols] = c.a
            nus[row, cols] = c.nu
            z[row, cols] = c.shape
            dense[row, cols] = c.dense
            valid[row, cols] = True
        return s_levels, a, nus, z, dense, valid, inverse

    def _scores(self, prefix, total, t, g):
        """``A_{s,g}`` for every row and sparsity level, plus the row constants."""
        if self.config.known_pre_mean:
            c = kernels.cusum_known_mean(total - prefix, g)
        else:
            c = kernels.cusum(prefix, total, t, g)
        z = c / self.config.sigma
        s_levels, a, nus, shape, dense, valid, idx = self._tables(np.asarray(t))
        a_rows, nu_rows = a[idx], nus[idx]
        hit = np.abs(z)[:, :, None] > a_rows[:, None, :]
        terms = np.where(hit, (z * z)[:, :, None] - nu_rows[:, None, :], 0.0)
        scores = terms.sum(axis=1)
        return scores, s_levels, shape[idx], dense[idx], valid[idx]

    def evaluate(self, prefix, total, t, g) -> Evaluation:
        scores, s_levels, shape, dense, valid = self._scores(prefix, total, t, g)
        if self.config.mode == "calibrated":
            crit = np.where(dense, self.lam_dense, self.lam_sparse) * shape
        else:
            crit = self.config.lam * shape
        ratio = np.where(valid, scores / crit, -np.inf)
        best = np.argmax(ratio, axis=1)
        stat = ratio[np.arange(ratio.shape[0]), best]
        s_star = np.asarray(s_levels)[best]
        return Evaluation(stat, np.ones_like(stat), {"s_star": s_star})

    def normalized(self, prefix, total, t, g) -> np.ndarray:
        scores, _, shape, dense, valid = self._scores(prefix, total, t, g)
        ratio = np.where(valid, scores / shape, -np.inf)
        if self.config.mode == "theory":
            return ratio.max(axis=1)[:, None]
        dense_max = np.where(dense, ratio, -np.inf).max(axis=1)
        sparse_max = np.where(~dense, ratio, -np.inf).max(axis=1)
        return np.stack([dense_max, sparse_max], axis=1)


class CovOpnormStatistic(_Statistic):
    """Operator-norm distance of the two second-moment matrices, scaled by the
    pre-change operator norm (or a fixed noise level)."""

    @property
    def dim(self) -> int:
        return self.p * self.p

    def summarize(self, y: np.ndarray) -> np.ndarray:
        return (y[:, :, None] * y[:, None, :]).reshape(y.shape[0], -1)

    def _stat(self, prefix, total, t, g) -> np.ndarray:
        p = self.p
        n = prefix.shape[0]
        t = np.asarray(t, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        before = prefix.reshape(n, p, p) / (t - g)[:, None, None]
        after = (total - prefix).reshape(n, p, p) / g[:, None, None]
        if self.config.sigma_cov_fixed is not None:
            scale = self.config.sigma_cov_fixed
        else:
            scale = kernels.sym_opnorm(before)
            if np.any(scale == 0.0):
                raise DegenerateInputError("pre-change second-moment matrix is zero; the statistic is undefined")
        return np.atleast_1d(kernels.sym_opnorm(before - after) / scale)

    def evaluate(self, prefix, total, t, g) -> Evaluation:
        return Evaluation(self._stat(prefix, total, t, g), kernels.xi_cov(g, t, self.p, self.config.lam))

    def normalized(self, prefix, total, t, g) -> np.ndarray:
        return (self._stat(prefix, total, t, g) / kernels.xi_cov(g, t, self.p, 1.0))[:, None]


class ExpFamStatistic(_Statistic):
    """Segment log-likelihood ratio for an exponential family, against a constant ``lam``."""

    def __init__(self, config: DetectorConfig, model: ExpFamModel) -> None:
        super().__init__(config)
        self.model = model

    @property
    def dim(self) -> int:
        return self.model.dim

    def check(self, y: np.ndarray) -> None:
        if self.model.validate is not None:
            self.model.validate(y)

    def summarize(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.model.sufficient(y), dtype=np.float64).reshape(y.shape[0], self.dim)

    def _lr(self, prefix, total, t, g) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        prof = self.model.profile
        lr = prof(prefix, t - g) + prof(total - prefix, g) - prof(total, t)
        # the profile likelihood of the split model dominates the null one
        return np.maximum(lr, 0.0)

    def evaluate(self, prefix, total, t, g) -> Evaluation:
        lr = self._lr(prefix, total, t, g)
        return Evaluation(lr, np.full_like(lr, self.config.lam))

    def normalized(self, prefix, total, t, g) -> np.ndarray:
        return self._lr(prefix, total, t, g)[:, None]


class PoissonStatistic(ExpFamStatistic):
    def __init__(self, config: DetectorConfig) -> None:
        super().__init__(config, poisson_model())


def make_statistic(config: DetectorConfig, model: ExpFamModel | None = None) -> _Statistic:
    if config.kind == "uni_mean":
        if config.p != 1:
            raise ConfigError("uni_mean is univariate; use chad_mean for p > 1")
        return UniMeanStatistic(config)
    if config.kind == "chad_mean":
        return ChadMeanStatistic(config)
    if config.kind == "cov_opnorm":
        return CovOpnormStatistic(config)
    if config.kind == "poisson_rate":
        return PoissonStatistic(config)
    if model is None:
        raise ConfigError("expfam_lr needs an ExpFamModel")
    return ExpFamStatistic(config, model)


# ---------------------------------------------------------------------------
# single-lag statistics read straight from a summary store


def _single(store, t: int, g: int):
    if t != store.t:
        raise DomainError(f"store is at t={store.t}, asked for t={t}")
    prefix = store.prefix(g)[None, :]
    total = store.total[None, :]
    return prefix, total, np.array([float(store.t)]), np.array([float(g)])


def uni_mean_stat(store, t: int, g: int, config: DetectorConfig) -> float:
    """Squared CUSUM ``(C_g^{(t)})^2`` at the store's current time."""
    return float(UniMeanStatistic(config).evaluate(*_single(store, t, g)).stat[0])


def chad_mean_stat(store, t: int, g: int, config: DetectorConfig) -> tuple[float, int]:
    """``max_s A_{s,g} / xi_s`` and the sparsity level attaining it."""
    ev = ChadMeanStatistic(config).evaluate(*_single(store, t, g))
    return float(ev.stat[0]), int(ev.aux["s_star"][0])


def cov_stat(store, t: int, g: int, config: DetectorConfig) -> float:
    return float(CovOpnormStatistic(config)._stat(*_single(store, t, g))[0])


def poisson_stat(store, t: int, g: int) -> float:
    cfg = DetectorConfig(kind="poisson_rate")
    return float(PoissonStatistic(cfg)._lr(*_single(store, t, g))[0])


def expfam_lr_stat(store, t: int, g: int, model: ExpFamModel) -> float:
    cfg = DetectorConfig(kind="expfam_lr", p=1)
    return float(ExpFamStatistic(cfg, model)._lr(*_single(store, t, g))[0])


# ---------------------------------------------------------------------------
# streaming detector


def _pick(stat: np.ndarray, thr: np.ndarray) -> tuple[int, bool]:
    """Index of the lag to report, and whether any lag fired."""
    ratio = stat / thr
    exceed = stat > thr
    if exceed.any():
        return int(np.argmax(np.where(exceed, ratio, -np.inf))), True
    return int(np.argmax(ratio)), False


class OnlineDetector:
    """Single-changepoint online detector; call :meth:`reset` after an alarm.

    >>> det = OnlineDetector(DetectorConfig(kind="uni_mean", lam=1.0))
    >>> [det.step([y]).alarmed for y in [0.0, 0.0, 0.0, 50.0]]
    [False, False, False, True]
    """

    def __init__(self, config: DetectorConfig, model: ExpFamModel | None = None) -> None:
        self.config = config
        self.statistic = make_statistic(config, model)
        self.store = make_store(self.statistic.dim, config.grid, config.horizon_cap)
        self.alarmed_at: Optional[int] = None
        self.last_evaluation: Optional[Evaluation] = None

    @property
    def t(self) -> int:
        return self.store.t

    @property
    def stored_scalars(self) -> int:
        return self.store.stored_scalars

    def reset(self) -> None:
        self.store.reset()
        self.alarmed_at = None
        self.last_evaluation = None

    def _observation(self, y) -> np.ndarray:
        arr = np.asarray(y, dtype=np.float64).reshape(-1)
        if arr.shape[0] != self.config.p:
            raise DomainError(f"expected an observation of dimension {self.config.p}, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("observations must be finite")
        block = arr[None, :]
        self.statistic.check(block)
        return block

    def step(self, y) -> Decision:
        if self.alarmed_at is not None:
            raise AlarmStateError(f"detector alarmed at t={self.alarmed_at}; reset before stepping")
        block = self._observation(y)
        self.store.push(self.statistic.summarize(block)[0])
        t = self.store.t
        if t < 2:
            return Decision(t, False, None, 0.0, math.inf, self.config.name)
        grid = self.store.grid
        n = len(grid)
        prefix = self.store.prefix_matrix()
        total = np.broadcast_to(self.store.total, prefix.shape)
        ev = self.statistic.evaluate(prefix, total, np.full(n, float(t)), np.asarray(grid, dtype=np.float64))
        thr = np.broadcast_to(ev.thr, ev.stat.shape)
        self.last_evaluation = ev
        idx, alarmed = _pick(ev.stat, thr)
        if alarmed:
            self.alarmed_at = t
        return Decision(
            t=t,
            alarmed=alarmed,
            trigger_g=grid[idx] if alarmed else None,
            statistic=float(ev.stat[idx]),
            threshold=float(thr[idx]),
            detector_id=self.config.name,
            best_g=grid[idx],
        )

    def run_to_alarm(self, stream: Iterable, horizon: int) -> Optional[int]:
        return run_to_alarm(self, stream, horizon)


def run_to_alarm(detector: OnlineDetector, stream: Iterable, horizon: int) -> Optional[int]:
    """Feed observations until an alarm or ``horizon`` steps; return the alarm time."""
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    for i, y in enumerate(stream):
        if i >= horizon:
            break
        if detector.step(y).alarmed:
            return detector.t
    return None


# ---------------------------------------------------------------------------
# vectorised evaluation of a whole recorded stream

_CHUNK_SCALARS = 1 << 21


def _prepare(statistic: _Statistic, data) -> np.ndarray:
    y = np.asarray(data, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != statistic.p:
        raise DomainError(f"expected data with {statistic.p} columns, got {y.shape[1]}")
    if not np.all(np.isfinite(y)):
        raise DomainError("observations must be finite")
    statistic.check(y)
    h = statistic.summarize(y)
    sums = np.zeros((h.shape[0] + 1, h.shape[1]))
    np.cumsum(h, axis=0, out=sums[1:])
    return sums


def _chunks(statistic: _Statistic, grid_kind: str, n: int, first: int | None = None):
    """Consecutive slices of the ``(t, g)`` pairs, in increasing ``t``.

    With ``first`` the slices start at that many pairs and double, which lets
    an early alarm stop the scan without evaluating the whole stream.
    """
    ts, gs, _ = grid_pairs(grid_kind, n)
    width = statistic.dim * (8 if isinstance(statistic, ChadMeanStatistic) else 2)
    cap = max(256, _CHUNK_SCALARS // max(width, 1))
    size = cap if first is None else min(first, cap)
    lo = 0
    while lo < ts.size:
        yield ts[lo : lo + size], gs[lo : lo + size]
        lo += size
        size = min(2 * size, cap)


def _rows(sums: np.ndarray, t: np.ndarray, g: np.ndarray):
    return sums[t - g], sums[t], t.astype(np.float64), g.astype(np.float64)


@dataclass
class ScanResult:
    t: np.ndarray
    g: np.ndarray
    stat: np.ndarray
    thr: np.ndarray

    def first_alarm(self) -> Optional[int]:
        hits = np.flatnonzero(self.stat > self.thr)
        return int(self.t[hits[0]]) if hits.size else None


def _as_statistic(detector) -> _Statistic:
    if isinstance(detector, OnlineDetector):
        return detector.statistic
    if isinstance(detector, DetectorConfig):
        return make_statistic(detector)
    return detector


def _grid_kind(detector) -> str:
    stat = _as_statistic(detector)
    return stat.config.grid


def scan(detector, data) -> ScanResult:
    """Evaluate every ``(t, g)`` pair of a recorded stream."""
    statistic = _as_statistic(detector)
    sums = _prepare(statistic, data)
    n = sums.shape[0] - 1
    parts_t, parts_g, parts_s, parts_h = [], [], [], []
    for t, g in _chunks(statistic, _grid_kind(detector), n):
        ev = statistic.evaluate(*_rows(sums, t, g))
        parts_t.append(t)
        parts_g.append(g)
        parts_s.append(ev.stat)
        parts_h.append(np.broadcast_to(ev.thr, ev.stat.shape))
    if not parts_t:
        empty = np.zeros(0)
        return ScanResult(empty.astype(np.int64), empty.astype(np.int64), empty, empty)
    return ScanResult(
        np.concatenate(parts_t), np.concatenate(parts_g), np.concatenate(parts_s), np.concatenate(parts_h)
    )


def scan_first_alarm(detector, data) -> Optional[int]:
    """First alarm time of the detector on a recorded stream, or ``None``."""
    statistic = _as_statistic(detector)
    sums = _prepare(statistic, data)
    n = sums.shape[0] - 1
    for t, g in _chunks(statistic, _grid_kind(detector), n, first=2048):
        ev = statistic.evaluate(*_rows(sums, t, g))
        hits = np.flatnonzero(ev.stat > ev.thr)
        if hits.size:
            return int(t[hits[0]])
    return None


def scan_normalized_max(detector, data) -> np.ndarray:
    """Per-branch maximum over all ``(t, g)`` of the shape-normalised statistic."""
    statistic = _as_statistic(detector)
    sums = _prepare(statistic, data)
    n = sums.shape[0] - 1
    best = np.full(len(statistic.branches), -np.inf)
    for t, g in _chunks(statistic, _grid_kind(detector), n):
        vals = statistic.normalized(*_rows(sums, t, g))
        if vals.size:
            best = np.maximum(best, vals.max(axis=0))
    return best
