import logging

import numpy as np
import pytest
from scipy import stats

from pelletsc.model import validate_scenario
from pelletsc.scenario import (ScenarioModelSpec, bundle_scenarios, derive_ash_fractions,
                               derive_seed, make_rng, sample_scenarios, supply_score,
                               triangular_ppf)

EDGES = (0.0, 0.01, 0.02, np.inf)


@pytest.fixture
def spec():
    return ScenarioModelSpec(supply_mean=np.full((1, 2, 2), 10.0), n_depots=1, ash_edges=EDGES)


# frozen first draws of the seeded streams
def test_rng_vectors():
    assert np.allclose(make_rng((0,)).random(3), [0.01406704, 0.25776725, 0.47156538], atol=1e-8)
    assert np.allclose(make_rng((7, 1, 3)).standard_normal(3),
                       [0.06694999, -0.47824755, 0.5045611], atol=1e-8)


def test_scenario_vectors(spec):
    sc = sample_scenarios(spec, 2, (42, 1, 0))
    assert np.allclose(sc[0].supply.ravel(), [8.2182346, 10.26935029, 8.27745585, 8.73849749])
    assert np.allclose(sc[0].ash_content.ravel(), [0.02100044, 0.01903599])
    assert np.allclose(sc[1].moisture.ravel(), [0.06275432, 0.11547915])
    assert np.all(sc[0].preheat == 1)


def test_sampling_is_a_pure_function(spec):
    a = sample_scenarios(spec, 4, derive_seed(3, 1, 2))
    b = sample_scenarios(spec, 4, derive_seed(3, 1, 2))
    c = sample_scenarios(spec, 4, derive_seed(3, 1, 3))
    for x, y in zip(a, b):
        assert np.array_equal(x.supply, y.supply) and np.array_equal(x.dml, y.dml)
    assert not np.array_equal(a[0].supply, c[0].supply)


def test_samples_are_valid_scenarios(spec, t1):
    for sc in sample_scenarios(spec, 20, (1,)):
        assert sc.probability == pytest.approx(0.05)
        assert np.all(sc.supply >= 0)
        # loss only defined on age layers tau <= t
        assert np.all(np.tril(sc.dml[0], -1) == 0)
        assert np.all(sc.preheat == sc.preheat[:, :, :1, :])
    inst_scen = sample_scenarios(t1.spec, 5, (2,))
    assert all(validate_scenario(t1.instance, sc) == [] for sc in inst_scen)


def test_single_scenario_and_empty_request(spec):
    (only,) = sample_scenarios(spec, 1, (0,))
    assert only.probability == 1.0
    with pytest.raises(ValueError):
        sample_scenarios(spec, 0, (0,))


def test_invalid_spec_is_rejected(spec):
    from dataclasses import replace
    bad = replace(spec, dml_low=0.2, dml_high=0.1)
    assert bad.problems()
    with pytest.raises(ValueError, match="dml_low"):
        sample_scenarios(bad, 2, (0,))


def test_supply_is_clipped_normal(spec):
    from dataclasses import replace
    wide = replace(spec, supply_cv=2.0)
    draws = np.array([sc.supply for sc in sample_scenarios(wide, 4000, (9,))]).ravel()
    # E[max(0, m(1 + s Z))] = m (Phi(1/s) + s phi(1/s))
    m, s = 10.0, 2.0
    expect = m * (stats.norm.cdf(1 / s) + s * stats.norm.pdf(1 / s))
    assert np.mean(draws) == pytest.approx(expect, rel=0.03)
    assert np.mean(draws == 0) == pytest.approx(stats.norm.cdf(-1 / s), abs=0.02)


def test_triangular_matches_scipy():
    u = np.linspace(0, 1, 101)
    lo, mode, hi = 0.005, 0.012, 0.03
    ref = stats.triang.ppf(u, (mode - lo) / (hi - lo), loc=lo, scale=hi - lo)
    assert np.allclose(triangular_ppf(u, lo, mode, hi), ref, atol=1e-14)


def test_quality_multiplier_is_exact_common_random_numbers(spec):
    base = sample_scenarios(spec, 5, (4,))
    good = sample_scenarios(spec.with_quality(ash_mult=0.7), 5, (4,))
    for a, b in zip(base, good):
        assert np.array_equal(b.ash_content, a.ash_content * 0.7)
        assert np.array_equal(b.supply, a.supply)
        assert np.array_equal(b.moisture, a.moisture)


def test_multiplier_commutes_with_folding(spec):
    q = spec.with_quality(ash_mult=1.3, moist_mult=0.7)
    a = sample_scenarios(q, 6, (5,))
    b = sample_scenarios(q.scaled_distributions(), 6, (5,))
    for x, y in zip(a, b):
        assert np.allclose(x.ash_content, y.ash_content, rtol=1e-12)
        assert np.allclose(x.moisture, y.moisture, rtol=1e-12)


# -- ash fractions ------------------------------------------------------------------

def test_hard_classification():
    f = derive_ash_fractions(np.array([0.0, 0.005, 0.01, 0.019, 0.5]), EDGES)
    assert f.argmax(axis=-1).tolist() == [0, 0, 1, 1, 2]
    assert np.all(f.sum(axis=-1) == 1)


def test_out_of_range_is_clamped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        f = derive_ash_fractions(np.array([0.05]), (0.0, 0.01, 0.02))
    assert f.tolist() == [[0.0, 1.0]]
    assert "above the top edge" in caplog.text


@pytest.mark.parametrize("gamma,expect", [(0.01, [0.5, 0.5, 0.0]), (0.0115, [0.2, 0.8, 0.0])])
def test_smeared_fractions(gamma, expect):
    assert np.allclose(derive_ash_fractions(gamma, EDGES, width=0.005), expect)


@pytest.mark.parametrize("gamma", [0.0, 0.003, 0.0099, 0.0151, 0.0195, 0.04])
def test_smeared_fractions_against_quadrature(gamma):
    w = 0.005
    pts = gamma - w / 2 + w * (np.arange(200000) + 0.5) / 200000
    edges = np.array(EDGES)
    idx = np.clip(np.searchsorted(edges, pts, side="right") - 1, 0, 2)
    ref = np.bincount(idx, minlength=3) / pts.size
    assert np.allclose(derive_ash_fractions(gamma, EDGES, width=w), ref, atol=1e-5)


def test_bad_edges():
    with pytest.raises(ValueError):
        derive_ash_fractions(0.1, (0.0, 0.0, 1.0))


# -- bundles ------------------------------------------------------------------------------

def test_round_robin_bundles(spec):
    scen = sample_scenarios(spec, 5, (0,))
    bundles = bundle_scenarios(scen, 2)
    assert [b.members for b in bundles] == [(0, 2, 4), (1, 3)]
    assert all(sum(b.probabilities) == pytest.approx(1.0) for b in bundles)
    assert sum(b.mass for b in bundles) == pytest.approx(1.0)


@pytest.mark.parametrize("k", [1, 2, 3, 6])
def test_kmeans_bundles_partition(spec, k):
    scen = sample_scenarios(spec, 6, (0,))
    a = bundle_scenarios(scen, k, "supply_kmeans", seed=1)
    b = bundle_scenarios(scen, k, "supply_kmeans", seed=1)
    assert [x.members for x in a] == [x.members for x in b]
    assert len(a) == k and all(x.members for x in a)
    assert sorted(m for x in a for m in x.members) == list(range(6))


def test_kmeans_survives_duplicate_points(spec):
    one = sample_scenarios(spec, 1, (0,))[0].with_probability(0.25)
    bundles = bundle_scenarios([one] * 4, 3, "supply_kmeans")
    assert len(bundles) == 3 and all(b.members for b in bundles)


def test_bundle_arguments(spec):
    scen = sample_scenarios(spec, 3, (0,))
    with pytest.raises(ValueError):
        bundle_scenarios(scen, 4)
    with pytest.raises(ValueError):
        bundle_scenarios(scen, 2, "random")


def test_supply_score(spec):
    scen = sample_scenarios(spec, 3, (0,))
    assert supply_score(scen) == pytest.approx(sum(sc.supply.sum() for sc in scen))
