import json

import numpy as np
import pytest

from pelletsc.generate import generate_case
from pelletsc.kernel import solve_milp
from pelletsc.model import build_extensive_form
from pelletsc.pha import (PhaConfig, PhaError, PhaState, ProgressiveHedging, Termination,
                          consensus, default_rho, pha_check_termination, pha_init, pha_iterate,
                          pha_solve, round_consensus, update_multipliers)


@pytest.fixture(scope="module")
def hard_case():
    # proposals disagree after the first solve, so the algorithm iterates
    case = generate_case(3, 3, 2, seed=101, n_scenarios=4, n_biomass=1, n_ranges=2)
    prob = build_extensive_form(case.instance, case.scenarios)
    return case, solve_milp(prob).objective


def _state(**kw):
    base = dict(iteration=0, probs=np.array([0.5, 0.5]), Y=np.array([[1.0], [0.0]]),
                ybar=np.array([0.5]), w=np.array([[5.0], [-5.0]]), rho=10.0, rho0=10.0)
    base.update(kw)
    return PhaState(**base)


def test_initialization_example():
    Y = np.array([[1.0], [0.0]])
    probs = np.array([0.5, 0.5])
    ybar = consensus(Y, probs)
    w = update_multipliers(np.zeros_like(Y), Y, ybar, 10.0)
    assert ybar.tolist() == [0.5]
    assert w.ravel().tolist() == [5.0, -5.0]
    assert probs @ w == pytest.approx(0.0)


def test_default_rho(t1):
    assert default_rho(t1.instance) == 100.0


# -- termination ----------------------------------------------------------------

def test_termination_order():
    cfg = PhaConfig(gap_tol=0.01, max_iter=5)
    assert pha_check_termination(_state(incumbent=100.0, bound=99.5), cfg) == Termination.GAP_MET
    agree = _state(Y=np.ones((2, 1)), ybar=np.ones(1))
    assert pha_check_termination(agree, cfg) == Termination.CONSENSUS_MET
    assert pha_check_termination(_state(iteration=5), cfg) == Termination.ITER_LIMIT
    assert pha_check_termination(_state(iteration=4), cfg) == Termination.CONTINUE
    late = _state(started=1.0, elapsed=cfg.time_limit + 1)
    assert pha_check_termination(late, cfg) == Termination.TIME_LIMIT


def test_gap_checked_before_limits():
    cfg = PhaConfig(max_iter=0)
    st = _state(incumbent=10.0, bound=10.0)
    assert pha_check_termination(st, cfg) == Termination.GAP_MET


def test_zero_iterations_allowed(hard_case):
    case, _ = hard_case
    res = pha_solve(case.instance, case.scenarios, PhaConfig(max_iter=0))
    assert res.iterations == 0
    assert res.termination in (Termination.ITER_LIMIT, Termination.GAP_MET)


# -- behaviour on instances ----------------------------------------------------------

def test_t1_stops_at_initialization(t1):
    res = pha_solve(t1.instance, t1.scenarios)
    assert res.iterations == 0
    assert res.objective == pytest.approx(144.5)
    assert res.y.tolist() == [[1, 0]]


def test_single_scenario_is_solved_at_initialization(small_case):
    sc = small_case.scenarios[0].with_probability(1.0)
    res = pha_solve(small_case.instance, [sc])
    exact = solve_milp(build_extensive_form(small_case.instance, [sc])).objective
    assert res.iterations == 0
    assert res.objective == pytest.approx(exact, rel=1e-9)
    assert res.termination == Termination.GAP_MET


def test_one_bundle_is_the_extensive_form(hard_case):
    case, opt = hard_case
    res = pha_solve(case.instance, case.scenarios, PhaConfig.variant("pha-hr-sb", n_bundles=1))
    assert res.iterations == 0
    assert res.objective == pytest.approx(opt, rel=1e-9)
    assert res.bound == pytest.approx(opt, rel=1e-9)


def test_bound_is_valid_and_monotone(hard_case):
    case, opt = hard_case
    for name in ("pha", "pha-hr", "pha-hr-sb"):
        res = pha_solve(case.instance, case.scenarios, PhaConfig.variant(name, max_iter=15))
        bounds = [r["bound"] for r in res.trace]
        assert all(b <= opt + 1e-6 * abs(opt) for b in bounds), name
        assert all(b2 >= b1 for b1, b2 in zip(bounds, bounds[1:])), name
        assert res.ws_bound <= opt + 1e-6 * abs(opt)
        assert res.objective >= opt - 1e-6 * abs(opt)
        assert res.gap >= -1e-9


def test_trace_records_invariants(hard_case, tmp_path):
    case, _ = hard_case
    res = pha_solve(case.instance, case.scenarios, PhaConfig(max_iter=4))
    keys = {"iter", "consensus_residual", "bound", "estimate", "incumbent", "fixed_count",
            "rho_pen", "wall_ms", "centering"}
    assert [r["iter"] for r in res.trace] == list(range(res.iterations + 1))
    assert all(set(r) == keys for r in res.trace)
    assert all(r["centering"] <= 1e-9 for r in res.trace)
    path = tmp_path / "trace.jsonl"
    res.write_trace(path)
    assert [json.loads(x)["iter"] for x in path.read_text().splitlines()] == [r["iter"] for r in res.trace]


def test_plain_pha_keeps_rho_and_fixes_nothing(hard_case):
    case, _ = hard_case
    res = pha_solve(case.instance, case.scenarios, PhaConfig(max_iter=5))
    assert len({r["rho_pen"] for r in res.trace}) == 1
    assert all(r["fixed_count"] == 0 for r in res.trace)


def test_hr_grows_rho_up_to_cap(hard_case):
    case, _ = hard_case
    cfg = PhaConfig.variant("pha-hr", rho=1.0, rho_max=2.0, max_iter=6, gap_tol=1e-12)
    res = pha_solve(case.instance, case.scenarios, cfg)
    rhos = [r["rho_pen"] for r in res.trace]
    assert rhos[0] == 1.0 and all(r <= 2.0 for r in rhos)
    assert all(b >= a for a, b in zip(rhos, rhos[1:]))


def test_k_fix_one_fixes_agreeing_coordinates_at_start(hard_case):
    case, _ = hard_case
    ph, st = pha_init(case.instance, case.scenarios, PhaConfig.variant("pha-hr", k_fix=1))
    agree = np.flatnonzero(np.all(st.Y == st.Y[0], axis=0))
    assert sorted(st.fixed) == agree.tolist()
    st = pha_iterate(ph, st)
    for k, v in st.fixed.items():
        assert np.all(st.Y[:, k] == v)


def test_rollback_releases_latest_fixings(hard_case, monkeypatch):
    case, _ = hard_case
    ph, st = pha_init(case.instance, case.scenarios, PhaConfig.variant("pha-hr", k_fix=1))
    assert st.fixed
    real = ph.subs.solve
    calls = {"failed": False}

    def flaky(s, w=None, ybar=None, rho=0.0, fixed=None):
        if fixed and not calls["failed"]:
            calls["failed"] = True
            return None
        return real(s, w, ybar, rho, fixed)

    monkeypatch.setattr(ph.subs, "solve", flaky)
    released = list(st.last_fixed)
    st = pha_iterate(ph, st)
    assert calls["failed"]
    assert st.iteration == 1
    assert all(st.streak[k] <= 1 for k in released)


def test_infeasible_without_fixings_aborts(hard_case, monkeypatch):
    case, _ = hard_case
    ph, st = pha_init(case.instance, case.scenarios, PhaConfig())
    monkeypatch.setattr(ph.subs, "solve", lambda *a, **k: None)
    with pytest.raises(PhaError, match="infeasible"):
        pha_iterate(ph, st)


def test_singleton_bundles_match_plain_pha(hard_case):
    case, _ = hard_case
    a = pha_solve(case.instance, case.scenarios, PhaConfig(max_iter=5))
    b = pha_solve(case.instance, case.scenarios,
                  PhaConfig(max_iter=5, enable_sb=True, n_bundles=len(case.scenarios)))
    strip = lambda tr: [{k: v for k, v in r.items() if k != "wall_ms"} for r in tr]
    assert strip(a.trace) == strip(b.trace)
    assert a.y.tolist() == b.y.tolist()


def test_default_bundle_count(hard_case):
    case, _ = hard_case
    ph = ProgressiveHedging(case.instance, case.scenarios, PhaConfig.variant("pha-hr-sb"))
    assert len(ph.subs.problems) == 2


def test_deterministic(hard_case):
    case, _ = hard_case
    cfg = PhaConfig.variant("pha-hr", max_iter=5)
    a = pha_solve(case.instance, case.scenarios, cfg)
    b = pha_solve(case.instance, case.scenarios, cfg)
    assert a.objective == b.objective and a.bound == b.bound and a.iterations == b.iterations


# -- rounding and configuration ------------------------------------------------------

def test_rounding_one_size_per_site():
    ybar = np.array([[0.6, 0.2, 0.5], [0.7, 0.4, 0.5]])  # (C=2, J=3)
    y = round_consensus(ybar, 2, 3)
    assert y.tolist() == [[0, 0, 1], [1, 0, 0]]


def test_rounding_threshold_and_empty():
    assert round_consensus(np.full((1, 2), 0.49), 1, 2).sum() == 0
    assert round_consensus(np.array([[0.5, 1.0]]), 1, 2).tolist() == [[1, 1]]


@pytest.mark.parametrize("kw", [dict(rho=0), dict(rho_growth=0.5), dict(gap_tol=0),
                                dict(max_iter=-1), dict(k_fix=0), dict(time_limit=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PhaConfig(**kw)


def test_variants():
    assert not PhaConfig.variant("pha").enable_hr
    hr = PhaConfig.variant("pha_hr")
    assert hr.enable_hr and hr.rho_growth == 1.25 and not hr.enable_sb
    assert PhaConfig.variant("pha-hr-sb", max_iter=3).max_iter == 3
    with pytest.raises(ValueError):
        PhaConfig.variant("admm")
