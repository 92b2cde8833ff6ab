import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobatto_dae.dae import SolverConfig
from lobatto_dae.errors import InsufficientDataError, StudyAbortedError
from lobatto_dae.harness import (
    ROUNDOFF_FLOOR,
    StudyConfig,
    asymptotic_fit,
    convergence_csv,
    convergence_summary_csv,
    expected_orders,
    fit_order,
    format_convergence_table,
    parse_config,
    run_convergence,
    run_verify,
    study_from_values,
    verify_csv,
    verify_pair,
)
from lobatto_dae.tableau import PartitionedTableau, lobatto_pair, stability_at_infinity

HS = [0.2 * 0.5**k for k in range(7)]


# --- fitting ---------------------------------------------------------------


def test_fit_exact_power_law():
    fit = fit_order([(h, 3.0 * h**2) for h in HS])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_perturbed_power_law():
    fit = fit_order([(h, 3.0 * h**4 * (1 + 0.1 * h)) for h in HS])
    assert abs(fit.slope - 4.0) < 0.05


def test_fit_all_below_floor():
    with pytest.raises(InsufficientDataError) as info:
        fit_order([(h, 1e-16) for h in HS])
    assert info.value.usable == []


def test_fit_trims_floor_points():
    pts = [(h, h**6) for h in HS]
    fit = fit_order(pts)
    assert all(e > ROUNDOFF_FLOOR for _, e in fit.points)
    assert len(fit.points) < len(pts)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 6.0), st.floats(1e-2, 1e2))
def test_fit_recovers_synthetic_slope(order, const):
    hs = [0.5 * 0.7**k for k in range(6)]
    fit = fit_order([(h, const * h**order) for h in hs])
    assert fit.slope == pytest.approx(order, abs=1e-9)


def test_asymptotic_window_skips_preasymptotic_points():
    # large-h points follow a different law; the tail is a clean h^4
    pts = [(h, h**4 if h < 0.03 else 10 * h**1.5) for h in HS]
    fit = asymptotic_fit(pts)
    assert fit.slope == pytest.approx(4.0, abs=1e-9)
    assert len(fit.points) == 4


def test_asymptotic_window_falls_back_to_all_points():
    rng = np.random.default_rng(1)
    pts = [(h, h**2 * math.exp(rng.uniform(-2, 2))) for h in HS]
    assert asymptotic_fit(pts) == fit_order(pts) or asymptotic_fit(pts).r2 >= 0.999


# --- expected orders -------------------------------------------------------


@pytest.mark.parametrize("s,orders", [(2, (2, 2, 2)), (3, (4, 4, 2)), (4, (6, 6, 4)), (5, (8, 8, 4))])
def test_expected_orders(s, orders):
    assert tuple(expected_orders(lobatto_pair(s)).values()) == orders


def test_lambda_order_follows_stability_parity(pair):
    exp = expected_orders(pair)
    q = pair.s
    rinf = stability_at_infinity(pair.first)
    assert exp["lambda"] == (q - 1 if rinf > 0 else q)


# --- studies ---------------------------------------------------------------


def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(steps=3)
    with pytest.raises(ValueError):
        StudyConfig(ratio=1.0)
    assert StudyConfig(h0=0.2, ratio=0.5, steps=4).step_sizes == [0.2, 0.1, 0.05, 0.025]


@pytest.mark.parametrize("s,expected", [(2, (2, 2, 2)), (3, (4, 4, 2))])
def test_particle_convergence(s, expected):
    rep = run_convergence(StudyConfig(problem="particle", s=s))
    for var, order in zip(("q", "p", "lambda"), expected):
        assert rep[var].expected == order
        assert rep[var].fit.slope == pytest.approx(order, abs=0.25), var
    assert rep.passed
    assert rep.max_phi <= 1e-11


def test_manufactured_s4_convergence():
    cfg = StudyConfig(problem="manufactured", s=4, h0=0.2, ratio=2**-0.5, steps=9)
    rep = run_convergence(cfg)
    assert [round(rep[v].fit.slope) for v in ("q", "p", "lambda")] == [6, 6, 4]
    assert rep.passed


def test_knife_edge_self_convergence():
    rep = run_convergence(StudyConfig(problem="knife-edge", s=2, h0=0.2, steps=5))
    assert rep["q"].fit.slope == pytest.approx(2.0, abs=0.25)


def test_study_aborts_with_failing_h():
    cfg = StudyConfig(problem="manufactured", s=3, h0=0.5, steps=4, solver=SolverConfig(max_iter=1))
    with pytest.raises(StudyAbortedError) as info:
        run_convergence(cfg)
    assert info.value.h == pytest.approx(0.5)


def test_report_lookup_and_outputs():
    rep = run_convergence(StudyConfig(problem="particle", s=2, steps=4))
    with pytest.raises(KeyError):
        rep["energy"]
    table = format_convergence_table([rep])
    assert table.splitlines()[0].split()[:3] == ["problem", "s", "var"]
    assert convergence_csv([rep]).splitlines()[0] == "problem,s,variable,h,error"
    assert len(convergence_csv([rep]).splitlines()) == 1 + 3 * 4
    summary = convergence_summary_csv([rep]).splitlines()
    assert summary[0] == "problem,s,variable,expected,slope,r2,points,verdict"
    assert summary[1].startswith("particle,2,q,2,")


def test_reports_are_deterministic():
    cfg = StudyConfig(problem="manufactured", s=2, steps=4)
    a = run_convergence(cfg)
    b = run_convergence(cfg)
    assert convergence_csv([a]) == convergence_csv([b])
    assert convergence_summary_csv([a]) == convergence_summary_csv([b])


# --- verification run ------------------------------------------------------


@pytest.fixture(scope="module")
def verify_reports():
    return run_verify(range(2, 6))


def test_verify_only_s5_words_fail(verify_reports):
    failed = [(r.s, r.name) for r in verify_reports if not r.passed]
    assert failed == [(5, "words")]


def test_verify_word_suite_only_for_s_at_least_3(verify_reports):
    with_words = {r.s for r in verify_reports if r.name == "words"}
    assert with_words == {3, 4, 5}


def test_verify_csv_deterministic(verify_reports):
    text = verify_csv(verify_reports)
    assert text.splitlines()[0] == "s,condition,order,max_residual,tol,verdict"
    assert text == verify_csv(run_verify(range(2, 6)))


def test_perturbed_tableau_fails_c():
    p = lobatto_pair(3)
    bad = PartitionedTableau(p.first.with_entry(1, 1, 1e-3), p.second)
    failed = {r.name for r in verify_pair(bad) if not r.passed}
    assert any(name.startswith("C(") for name in failed)


# --- config ----------------------------------------------------------------


def test_parse_config():
    text = "# study\nproblem = manufactured\nomega = 2   # faster\ns = 3\nh0=0.1\n\njacobian = fd\n"
    values = parse_config(text)
    assert values == {"problem": "manufactured", "omega": 2.0, "s": 3, "h0": 0.1, "jacobian": "fd"}
    cfg = study_from_values(values)
    assert cfg.params == {"omega": 2.0}
    assert cfg.s == 3 and cfg.h0 == 0.1 and cfg.solver.jacobian == "fd"
    assert cfg.ratio == 0.5 and cfg.steps == 7 and cfg.T == 1.0


@pytest.mark.parametrize("text", ["problem manufactured", "colour = red", "s = three"])
def test_parse_config_errors(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_problem_params_filtered():
    cfg = study_from_values({"problem": "particle", "omega": 3.0})
    assert cfg.params == {}
