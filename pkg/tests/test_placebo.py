import numpy as np
import pytest
from conftest import dataset_from

from fuzzydid import BootstrapConfig, Dataset, placebo_report
from fuzzydid.errors import DesignError
from fuzzydid.placebo import conditional_trends_test, default_pair, placebo_cic, placebo_did, placebo_tc
from fuzzydid.simulate import DgpConfig, sample


def _three_period(toy_rows):
    """TOY16 with period 0 copied into period -1, so the pair (-1, 0) has identical cells."""
    return dataset_from(list(toy_rows) + [(y, d, g, -1) for y, d, g, t in toy_rows if t == 0])


def _on_support(toy_rows):
    # treated period-0 outcomes moved onto control sample points (1 -> 0, 11 -> 10)
    return [({1: 0, 11: 10}.get(y, y) if (g, t) == (1, 0) else y, d, g, t) for y, d, g, t in toy_rows]


def test_identical_pair_gives_zero(toy_rows):
    ds = _three_period(_on_support(toy_rows))
    for f in (placebo_did, placebo_tc, placebo_cic):
        assert f(ds, -1, 0)[0] == 0
    assert all(v == (0.0, None) for v in conditional_trends_test(ds, -1, 0).values())


def test_cic_placebo_discreteness_gap(toy_rows):
    # off the control sample points Q_d rounds down to the nearest control value,
    # so identical cells leave a gap of mean(Y_1,-1) - mean(Q_D(Y_1,-1)) = 3.5 - 3
    ds = _three_period(toy_rows)
    assert placebo_did(ds, -1, 0)[0] == placebo_tc(ds, -1, 0)[0] == 0
    assert placebo_cic(ds, -1, 0)[0] == 0.5


def test_antisymmetry(toy_ds):
    assert placebo_did(toy_ds, 0, 1)[0] == -placebo_did(toy_ds, 1, 0)[0]


def test_default_pair(toy_rows):
    ds = _three_period(toy_rows)
    assert default_pair(ds) == (-1, 0)
    with pytest.raises(DesignError):
        default_pair(dataset_from(toy_rows))


def test_report_marks_uninformative():
    cfg = DgpConfig(n=4000, periods=(0, 1, 2), thresholds=((0.6, 0.3, 0.3), (0.7, 0.7, 0.3)), seed=1)
    rep = placebo_report(sample(cfg, 0))
    assert rep.pair == (0, 1)
    assert not rep.informative
    assert all(not t.informative for t in rep.tests)
    assert any("placebo statistics may differ from zero" in n for n in rep.notes)


def test_no_treated_pre_period_skips_row():
    rng = np.random.default_rng(0)
    n = 400
    g, t = rng.integers(0, 2, n), rng.integers(0, 2, n)
    d = np.where(g == 1, 0, rng.integers(0, 2, n))
    ds = Dataset(rng.normal(size=n), d, g, t)
    out = conditional_trends_test(ds, 0, 1)
    assert set(out) == {0}


def test_drift_and_wedge():
    c, w = 0.4, 0.7
    shift = ((0, 0, 0), (0, c, 0))
    treated = ((0, 0, 0), (0, w, 0))
    cfg = DgpConfig(n=60000, periods=(0, 1, 2), thresholds=((0.5, 0.5, 0.5), (0.6, 0.6, 0.3)),
                    shift=shift, rho=0.3, seed=8)
    ds = sample(cfg, 0)
    stat, se = placebo_did(ds, 0, 1, BootstrapConfig(reps=49))
    assert abs(stat - c) < 4 * se
    cfg = cfg.replace(shift=None, treated_shift=treated)
    trends = conditional_trends_test(sample(cfg, 0), 0, 1, BootstrapConfig(reps=49))
    assert abs(trends[1][0] - w) < 4 * trends[1][1]
    assert abs(trends[0][0]) < 4 * trends[0][1]


def test_report_shared_bootstrap_ses():
    cfg = DgpConfig(n=3000, periods=(0, 1, 2), thresholds=((0.5, 0.5, 0.5), (0.6, 0.6, 0.3)), seed=2)
    rep = placebo_report(sample(cfg, 0), cfg=BootstrapConfig(reps=49))
    assert rep.informative
    assert [t.name for t in rep.tests] == ["did", "tc", "cic", "trend", "trend"]
    assert all(t.se > 0 for t in rep.tests)


@pytest.mark.slow
def test_common_trends_size():
    cfg = DgpConfig(n=800, periods=(0, 1, 2), thresholds=((0.5, 0.5, 0.5), (0.6, 0.6, 0.3)), rho=0.3)
    inside = 0
    for r in range(200):
        stat, se = placebo_did(sample(cfg, r), 0, 1, BootstrapConfig(reps=49, seed=r))
        inside += abs(stat) <= 2 * se
    assert inside / 200 >= 0.93
