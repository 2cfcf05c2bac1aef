import numpy as np
import pytest

from lacekit import perc_exact as pe
from lacekit import perc_mc as mc
from lacekit.lattice import Torus, build_kernel

K = build_kernel("uniform", L=1, d=2)
T = Torus(2, 8)


def test_worker_count_does_not_change_results():
    cfg = mc.McConfig(K, T, 2.0, 300, 11)
    a = mc.estimate_two_point(cfg, workers=1)
    b = mc.estimate_two_point(cfg, workers=2)
    assert np.array_equal(a.counts, b.counts)
    assert a.chi == b.chi


def test_extreme_p():
    e0 = mc.estimate_two_point(mc.McConfig(K, T, 0.0, 50, 1))
    assert e0.field[(0, 0)] == 1.0 and e0.field.values.sum() == 1.0
    e1 = mc.estimate_two_point(mc.McConfig(K, T, 9.0, 20, 1))
    assert np.all(e1.field.values == 1.0) and e1.chi == T.volume


def test_counts_match_cluster_labels():
    cfg = mc.McConfig(K, T, 2.5, 40, 5)
    est = mc.estimate_two_point(cfg)
    tally = np.zeros(T.shape)
    for _, lab in mc.sample_clusters(cfg):
        tally += lab == lab[0, 0]
    assert np.array_equal(tally, est.counts)


def test_uniform_stream_is_bernoulli():
    u = mc.trial_uniforms(7, 0, 1, 200_000)[0]
    q = 0.3
    frac = np.mean(u < q)
    assert abs(frac - q) < 4 * np.sqrt(q * (1 - q) / u.size)
    assert not np.array_equal(mc.trial_uniforms(7, 1, 1, 100)[0], u[:100])


def test_coupling_is_monotone():
    r = mc.susceptibility_scan(K, T, [0.5, 1.0, 1.5, 2.0, 2.5], 200, 3)
    chis = [row["chi"] for row in r["rows"]]
    assert chis == sorted(chis)


def test_symmetry_and_walk_bound():
    est = mc.estimate_two_point(mc.McConfig(K, Torus(2, 10), 0.9, 4000, 9))
    assert mc.symmetry_check(est) < 5.0
    assert mc.rw_domination(est, K, 0.9)["ok"]


def test_config_validation(monkeypatch):
    with pytest.raises(ValueError):
        mc.McConfig(K, T, 10.0, 10, 1)
    with pytest.raises(ValueError):
        mc.McConfig(K, T, 1.0, 10, -1)
    monkeypatch.setenv(mc.WORKERS_ENV, "3")
    assert mc.default_workers() == 3
    monkeypatch.setenv(mc.WORKERS_ENV, "junk")
    assert mc.default_workers() == 1


def test_oracle_single_bond():
    r = mc.oracle_comparison(pe.single_bond(), trials=20_000, seed=2)
    assert r["ok"]
