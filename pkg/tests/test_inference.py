import numpy as np
import pytest
from conftest import dataset_from, random_rows
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fuzzydid import BootstrapConfig, bootstrap, build_cells, influence_cic, influence_did, influence_lqte
from fuzzydid import influence_tc, lqte, wald_cic, wald_did
from fuzzydid.errors import BootstrapError, DensityFloorError
from fuzzydid.inference import kde, silverman_bandwidth, with_analytic
from fuzzydid.simulate import DgpConfig, sample


def test_did_influence_toy(toy_ds, toy, toy_rows):
    iv = influence_did(toy_ds, toy)
    assert abs(iv.values.mean()) < 1e-12
    assert iv.se() == pytest.approx(oracles.did_delta_se(toy_rows), rel=1e-12)


def test_tc_influence_toy(toy_ds, toy):
    assert abs(influence_tc(toy_ds, toy).values.mean()) < 1e-12


def test_tc_influence_no_treated_period0():
    rows = [(0, 0, 0, 0), (1, 1, 0, 0), (2, 0, 0, 1), (4, 1, 0, 1), (1, 0, 0, 0), (5, 1, 0, 1),
            (3, 0, 1, 0), (4, 0, 1, 0), (5, 1, 1, 1), (7, 1, 1, 1), (1, 0, 1, 1), (2, 1, 0, 0),
            (3, 0, 0, 1)]
    ds = dataset_from(rows)
    iv = influence_tc(ds, stable_tol=np.inf)
    treated_control = (ds.g == 0) & (ds.d == 1)
    assert np.all(iv.values[treated_control] == 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_cic_influence_mean_zero(seed):
    rows, ds, ct = random_rows(np.random.default_rng(seed), n=120)
    psi = influence_cic(ds, ct, stable_tol=np.inf).values
    assert abs(psi.mean()) <= 1e-8 * psi.std()


def test_cic_influence_no_treated_period0_mass():
    # p_{1|10} = 0: the d = 1 transform never enters, so those control rows carry no weight
    rng = np.random.default_rng(1)
    n = 400
    g, t = rng.integers(0, 2, n), rng.integers(0, 2, n)
    d = np.where((g == 1) & (t == 0), 0, rng.integers(0, 2, n))
    y = rng.normal(size=n) + d
    from fuzzydid import Dataset
    ds = Dataset(y, d, g, t)
    psi = influence_cic(ds, stable_tol=np.inf).values
    assert np.all(psi[(g == 0) & (d == 1)] == 0)


def test_lqte_zero_effect_consistent():
    cfg = DgpConfig(n=6000, thresholds=((0.5, 0.5), (0.7, 0.3)), a=0.0, rho=0.0, seed=4)
    ds = sample(cfg, 0)
    ct = build_cells(ds)
    est = lqte(ct, 0.5, stable_tol=np.inf)
    se = influence_lqte(ds, 0.5, ct, stable_tol=np.inf).se()
    assert abs(est.point) < 3 * se


def test_density_floor_error():
    rows = [(0, 0, 0, 0), (0, 1, 0, 0), (0, 0, 0, 1), (0, 1, 0, 1),
            (0, 0, 1, 0), (0, 1, 1, 0), (5, 1, 1, 1), (5, 1, 1, 1), (5, 0, 1, 1), (0, 0, 1, 0)]
    ds = dataset_from(rows)
    with pytest.raises(DensityFloorError) as exc:
        influence_lqte(ds, 0.5, stable_tol=np.inf)
    assert "bootstrap" in exc.value.hint


def test_kde_and_bandwidth():
    x = np.random.default_rng(0).normal(size=2000)
    h = silverman_bandwidth(x)
    assert 0.15 < h < 0.3
    assert kde(x, np.array([0.0]), 1e-6)[0] == pytest.approx(1 / np.sqrt(2 * np.pi), rel=0.1)


def test_with_analytic(toy_ds, toy):
    est = with_analytic(wald_did(toy), influence_did(toy_ds, toy), 0.95)
    lo, hi, level = est.ci
    assert est.method == "analytic" and level == 0.95
    assert (hi - lo) / 2 == pytest.approx(1.959963984540054 * est.se)


def _sim(n=1500, seed=0):
    return sample(DgpConfig(n=n, thresholds=((0.6, 0.6), (0.7, 0.3)), a=1.0, rho=0.5, seed=seed), 0)


def test_bootstrap_constant():
    res = bootstrap(_sim(200), lambda x: 3.25, BootstrapConfig(reps=50))
    assert res.se[0] == 0 and res.ci_lo[0] == res.ci_hi[0] == 3.25


def test_bootstrap_deterministic_and_parallel():
    ds = _sim()

    def stat(x):
        return wald_did(build_cells(x)).point

    cfg = BootstrapConfig(reps=999, seed=12)
    a = bootstrap(ds, stat, cfg)
    b = bootstrap(ds, stat, cfg)
    c = bootstrap(ds, stat, BootstrapConfig(reps=999, seed=12, n_jobs=4))
    assert np.array_equal(a.replicates, b.replicates)
    assert np.array_equal(a.replicates, c.replicates)
    d = bootstrap(ds, stat, BootstrapConfig(reps=999, seed=13))
    assert not np.array_equal(a.replicates, d.replicates)


def test_singleton_clusters_match_iid():
    ds = _sim(400)
    clustered = ds.replace(cluster=np.arange(len(ds)) + 100)

    def stat(x):
        return wald_did(build_cells(x)).point

    a = bootstrap(ds, stat, BootstrapConfig(reps=60, seed=3))
    b = bootstrap(clustered, stat, BootstrapConfig(reps=60, seed=3, scheme="cluster"))
    assert np.array_equal(a.replicates, b.replicates)


def test_cluster_resampling_keeps_clusters_whole():
    ds = _sim(300).replace(cluster=np.repeat(np.arange(30), 10))
    seen = []

    def stat(x):
        counts = np.bincount(x.cluster, minlength=30)
        seen.append(set(counts.tolist()) <= set(range(0, 301, 10)))
        return float(len(x))

    bootstrap(ds, stat, BootstrapConfig(reps=20, scheme="cluster"))
    assert all(seen[1:])


def test_cluster_robust_se_singletons():
    ds = _sim(500)
    iv = influence_did(ds)
    assert iv.se(np.arange(len(ds))) == pytest.approx(iv.se(), rel=1e-9)


def test_bootstrap_failure_census(toy_ds):
    with pytest.raises(BootstrapError) as exc:
        bootstrap(toy_ds, lambda x: wald_cic(build_cells(x)).point, BootstrapConfig(reps=50))
    assert sum(exc.value.census.values()) > 5


def test_bootstrap_vector_and_normal_ci():
    ds = _sim()
    res = bootstrap(ds, lambda x: [x.y.mean(), x.d.mean()], BootstrapConfig(reps=200, ci="normal"))
    assert res.se.shape == (2,)
    assert res.ci_hi[0] - res.point[0] == pytest.approx(res.point[0] - res.ci_lo[0])


def test_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(reps=1)
    with pytest.raises(ValueError):
        BootstrapConfig(scheme="wild")
