from __future__ import annotations

import math

import numpy as np
import pytest

from gridcpd.detectors import DetectorConfig, OnlineDetector, run_to_alarm
from gridcpd.errors import ConfigError, DomainError
from gridcpd.simharness import (
    StreamSpec,
    benchmark_costs,
    estimate_delay,
    gen_stream,
    map_replications,
    replication_rng,
)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "gauss_mean", "N": 10, "tau": 10},
        {"kind": "gauss_mean", "N": 10, "p": 2, "k": 3},
        {"kind": "gauss_mean", "N": 10, "phi": -1.0},
        {"kind": "gauss_cov", "N": 10, "p": 2, "sigma1": [[1.0, 2.0], [2.0, 1.0]]},
        {"kind": "gauss_cov", "N": 10, "p": 2, "sigma1": [[1.0, 0.5], [0.0, 1.0]]},
        {"kind": "gauss_cov", "N": 10, "p": 2, "sigma2": np.eye(2), "cov_scale": 2.0},
        {"kind": "poisson", "N": 10, "p": 2},
        {"kind": "poisson", "N": 10, "rate1": -1.0},
        {"kind": "weibull", "N": 10},
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(DomainError):
        StreamSpec(**kwargs)


def test_reproducible_and_seed_sensitive():
    spec = StreamSpec(kind="gauss_mean", N=50, p=3, tau=20, phi=1.0, k=2)
    assert np.array_equal(gen_stream(spec, 7), gen_stream(spec, 7))
    assert not np.array_equal(gen_stream(spec, 7), gen_stream(spec, 8))
    assert np.array_equal(gen_stream(spec, replication_rng(3, 1)), gen_stream(spec, replication_rng(3, 1)))


def test_phi_zero_is_the_null_stream():
    spec = StreamSpec(kind="gauss_mean", N=80, p=2, tau=40, phi=0.0)
    assert np.array_equal(gen_stream(spec, 1), gen_stream(spec.null(), 1))


def test_noise_free_step():
    y = gen_stream(StreamSpec(kind="gauss_mean", N=10, p=3, tau=6, phi=1.0, k=1, sigma=0.0), 0)
    expected = np.zeros((10, 3))
    expected[6:, 0] = 1.0
    assert np.array_equal(y, expected)


def test_post_change_mean_within_clt_band():
    spec = StreamSpec(kind="gauss_mean", N=100_001, p=3, tau=1, phi=2.0, k=2, sigma=1.5, mu1=[1.0, -1.0, 0.5])
    y = gen_stream(spec, 11)[1:]
    np.testing.assert_allclose(spec.mean2, [1.0 + math.sqrt(2), -1.0 + math.sqrt(2), 0.5])
    se = 1.5 / math.sqrt(y.shape[0])
    assert np.all(np.abs(y.mean(axis=0) - spec.mean2) < 4 * se)
    assert np.all(np.abs(y.var(axis=0) / 1.5**2 - 1) < 4 * math.sqrt(2 / y.shape[0]))


def test_covariance_moments():
    sigma1 = np.array([[2.0, 0.6], [0.6, 1.0]])
    spec = StreamSpec(kind="gauss_cov", N=200_000, p=2, tau=100_000, sigma1=sigma1, cov_scale=2.0)
    y = gen_stream(spec, 5)
    for block, target in ((y[:100_000], sigma1), (y[100_000:], 2 * sigma1)):
        emp = block.T @ block / block.shape[0]
        # var of a product entry is S_ii S_jj + S_ij^2
        se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target**2) / block.shape[0])
        assert np.all(np.abs(emp - target) < 4 * se)


def test_singular_psd_covariance_allowed():
    spec = StreamSpec(kind="gauss_cov", N=500, p=2, sigma1=[[1.0, 1.0], [1.0, 1.0]])
    y = gen_stream(spec, 0)
    np.testing.assert_allclose(y[:, 0], y[:, 1], atol=1e-12)


def test_poisson_moments():
    spec = StreamSpec(kind="poisson", N=100_000, tau=50_000, rate1=1.0, rate2=3.0)
    y = gen_stream(spec, 2)[:, 0]
    assert abs(y[:50_000].mean() - 1.0) < 4 * math.sqrt(1.0 / 50_000)
    assert abs(y[50_000:].mean() - 3.0) < 4 * math.sqrt(3.0 / 50_000)
    assert np.all(y == np.floor(y))


def test_map_replications_order_and_threads():
    assert map_replications(lambda r: r * r, 10, threads=4) == [r * r for r in range(10)]
    with pytest.raises(ConfigError):
        map_replications(lambda r: r, 3, threads=0)


def test_estimate_delay_deterministic_jump():
    cfg = DetectorConfig(kind="uni_mean", lam=1.0)
    spec = StreamSpec(kind="gauss_mean", N=300, tau=150, phi=5.0, sigma=0.0)
    single = run_to_alarm(OnlineDetector(cfg), gen_stream(spec, 0), 300)
    report = estimate_delay(cfg, spec, M=50, seed=3)
    assert report.alarm_times == [single] * 50
    assert report.mean_delay == single - 150 and report.delay_se == 0.0
    assert report.detected == 50 and report.detection_rate == 1.0


def test_estimate_delay_partition_and_engines():
    cfg = DetectorConfig(kind="uni_mean", lam=1.5)
    spec = StreamSpec(kind="gauss_mean", N=300, tau=150, phi=0.7)
    scan_rep = estimate_delay(cfg, spec, M=60, seed=9)
    stream_rep = estimate_delay(cfg, spec, M=60, seed=9, engine="stream")
    assert scan_rep.alarm_times == stream_rep.alarm_times
    assert scan_rep.premature + scan_rep.detected + scan_rep.missed == 60
    assert scan_rep.detected > 0
    kept = [(300 if a is None else a) - 150 for a in scan_rep.alarm_times if a is None or a > 150]
    assert scan_rep.mean_delay == pytest.approx(np.mean(kept))
    doc = scan_rep.to_dict()
    assert doc["false_alarm_rate"] == scan_rep.premature / 60


def test_estimate_delay_null_and_all_premature():
    cfg = DetectorConfig(kind="uni_mean", lam=0.05)
    null = estimate_delay(cfg, StreamSpec(kind="gauss_mean", N=200), M=50, seed=1)
    assert null.premature == 50 and null.false_alarm_rate == 1.0 and not null.delay_defined
    late = estimate_delay(cfg, StreamSpec(kind="gauss_mean", N=200, tau=190, phi=1.0), M=50, seed=1)
    assert late.premature == 50 and late.mean_delay is None and not late.delay_defined


def test_estimate_delay_validation():
    cfg = DetectorConfig(kind="uni_mean")
    spec = StreamSpec(kind="gauss_mean", N=50)
    with pytest.raises(ConfigError):
        estimate_delay(cfg, spec, M=49)
    with pytest.raises(ConfigError):
        estimate_delay(cfg, spec, M=50, engine="gpu")


def test_benchmark_costs_small():
    report = benchmark_costs(DetectorConfig(kind="chad_mean", p=3), [50, 200, 800], repetitions=2, window=50)
    assert report.checkpoints == [50, 200, 800] and report.dim == 3
    assert all(s <= b + 3 for s, b in zip(report.stored_scalars, report.storage_bounds))
    assert all(x > 0 for x in report.update_seconds) and report.resets == 0


def test_full_grid_storage_is_linear():
    cfg = DetectorConfig(kind="uni_mean", grid="full", horizon_cap=1000)
    report = benchmark_costs(cfg, [100, 200, 400], repetitions=1, window=20)
    assert report.stored_scalars == [100, 200, 400]


def test_benchmark_validation():
    with pytest.raises(ConfigError):
        benchmark_costs(DetectorConfig(kind="uni_mean"), [200, 100])
    with pytest.raises(ConfigError):
        benchmark_costs(DetectorConfig(kind="uni_mean", grid="full", horizon_cap=100), [50, 500])
