import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from overdet.errors import DomainError
from overdet.funcexpr import CallableField, ScalarField
from overdet.quadrature import NonIntegrableError
from overdet.manifold import euclidean, hyperbolic, spherical
from overdet.radial import OverdeterminedSpec, ball_profile, v_of, w_of
from overdet.rigidity import (EXIT_CODES, Monotone, Verdict, bernoulli_check,
                              comparison_corollary_check, q_condition_check, serrin_check,
                              working_grid)

from strategies import expressions

F = ScalarField.parse
PRESETS = {"euclidean": euclidean, "hyperbolic": hyperbolic, "spherical": spherical}


def spec(m, f, phi="0", kappa="0", **kw):
    as_f = lambda x: F(x) if isinstance(x, str) else x
    return OverdeterminedSpec(m, as_f(f), as_f(phi), as_f(kappa), **kw)


def w_field(m, f, c, R0=1.0):
    base = spec(m, f, R0=R0)
    return CallableField(lambda r: w_of(base, r, c), text=f"w(r,{c})")


# --- Serrin examples ---------------------------------------------------------

def test_serrin_plane_linear_kappa():
    rep = serrin_check(spec(euclidean(2), "2", kappa="-r", interval=(0.01, 2.0)))
    assert rep.verdict is Verdict.RADIAL_AND_BALL
    assert rep.hypothesis_holds and rep.hypothesis_strict
    assert rep.cond1 and rep.cond2
    assert len(rep.defect_zeros) > 0


def test_serrin_sphere_strip():
    rep = serrin_check(spec(spherical(2), "2*cos(r)", kappa="-0.9", interval=(1.7, 2.5)))
    assert rep.verdict is Verdict.RADIAL_AND_BALL
    assert len(rep.defect_zeros) == 1
    assert rep.defect_zeros[0] == pytest.approx(math.pi - math.asin(0.9), abs=1e-9)
    assert rep.monotone_d is Monotone.NONDECREASING
    assert rep.f_nondegenerate


def test_serrin_unsolvable():
    rep = serrin_check(spec(euclidean(3), "1", kappa="1", interval=(0.01, 2.0)))
    assert rep.verdict is Verdict.UNSOLVABLE
    assert rep.hypothesis_holds and rep.defect_zeros == []
    assert rep.exit_code == 3


def test_serrin_hypothesis_fails_with_witness():
    rep = serrin_check(spec(euclidean(2), "1", phi="-r^2", kappa="-r/2", interval=(0.01, 2.0)))
    assert rep.verdict is Verdict.HYPOTHESIS_FAILS
    assert not rep.hypothesis_holds
    assert "hypothesis" in rep.witness


def test_serrin_rejects_annular_spec():
    with pytest.raises(DomainError):
        serrin_check(spec(euclidean(2), "1", R0=1.0))


def test_working_grid_needs_interval_on_infinite_manifold():
    with pytest.raises(DomainError):
        working_grid(spec(euclidean(2), "1"), 100)
    g = working_grid(spec(spherical(2), "1"), 100)
    assert 0 < g[0] < g[-1] < math.pi


# --- Bernoulli examples ------------------------------------------------------

def test_bernoulli_log_profile():
    rep = bernoulli_check(spec(euclidean(2), "0", phi="-1", kappa="-1/(r*log(r))",
                               R0=1.0, interval=(1.05, 3.0)))
    assert rep.verdict is Verdict.RADIAL_AND_BALL
    assert rep.hypothesis_strict


def test_bernoulli_exact_radial_kappa():
    m = euclidean(2)
    rep = bernoulli_check(spec(m, "1", kappa=w_field(m, "1", 0.0), R0=1.0,
                               interval=(1.05, 3.0)))
    assert rep.verdict is Verdict.RADIAL_AND_BALL
    assert rep.cond1 and rep.cond2
    assert rep.f_nondegenerate
    rep = bernoulli_check(spec(m, "0", kappa="0", R0=1.0, interval=(1.05, 3.0)))
    assert rep.verdict is Verdict.RADIAL_ONLY
    assert not rep.kappa_nonvanishing and not rep.f_nondegenerate
    assert not rep.hypothesis_strict


def test_bernoulli_constructed_defect():
    m = euclidean(2)
    base = w_field(m, "0", -1.0)
    kappa = CallableField(lambda r: base(r) + (r - 2.0))
    rep = bernoulli_check(spec(m, "0", phi="-1", kappa=kappa, R0=1.0, interval=(1.05, 3.0)))
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.defect_zeros == pytest.approx([2.0], abs=1e-9)
    assert not rep.cond1 and not rep.cond2
    assert "cond1" in rep.witness and "cond2" in rep.witness


def test_report_serialisations():
    rep = serrin_check(spec(euclidean(3), "1", kappa="1", interval=(0.01, 2.0)))
    doc = json.loads(rep.to_json())
    assert set(doc["rigidity"]) == {
        "problem_kind", "hypothesis_holds", "hypothesis_strict", "defect_zeros", "cond1",
        "cond2", "monotone_d", "kappa_nonvanishing", "f_nondegenerate", "verdict", "witness"}
    assert doc["rigidity"]["verdict"] == "Unsolvable"
    assert "verdict = Unsolvable" in rep.to_text()
    assert sorted(EXIT_CODES.values()) == [0, 1, 2, 3, 4]


# --- q condition and comparison check ---------------------------------------------

def test_q_condition_examples():
    m = euclidean(2)
    assert q_condition_check(spec(m, "0", kappa="3/r", R0=1.0, interval=(1.05, 3.0))).passed
    res = q_condition_check(spec(m, "0", kappa="-1/(r*log(r))", R0=1.0, interval=(1.05, 3.0)))
    assert not res.passed
    r1, r2 = res.witness
    assert r1 < r2 and -1 / math.log(r2) > -1 / math.log(r1)
    assert q_condition_check(spec(m, "1", kappa="-r/2", R0=1.0, interval=(1.05, 3.0))).passed
    h = hyperbolic(3)
    assert q_condition_check(spec(h, "0", kappa="-2/sinh(r)^2", R0=0.5,
                                  interval=(0.6, 2.0))).passed


def test_comparison_corollary_examples():
    m = euclidean(2)
    s = spec(m, "0", kappa="-1/r", R0=1.0, interval=(1.05, 3.0))
    rep = comparison_corollary_check(s, -1.0, -1.0)
    assert rep.applies and rep.ball
    rep = comparison_corollary_check(s, 0.0, 0.0)
    assert rep.applies and not rep.ball and rep.conclusion == "radial"
    rep = comparison_corollary_check(spec(m, "1", kappa="-r/2", R0=1.0, interval=(1.05, 3.0)),
                                     -1.0, -1.0)
    assert not rep.applies and not rep.f_nonpositive
    assert rep.conclusion == "not applicable"


# --- properties ---------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.sampled_from(list(PRESETS)), st.integers(2, 4), expressions,
       st.floats(0.3, 0.8), st.floats(0.6, 1.8), st.floats(0.1, 0.9),
       st.floats(-2.0, 0.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_q_condition_implies_cond1(name, N, expr, R0, width, frac, c, a, b):
    m = PRESETS[name](N)
    f = F(f"({expr})^2")
    lo, hi = R0 + 0.02, R0 + width
    r0 = lo + frac * (hi - lo)
    base = spec(m, f, R0=R0, interval=(lo, hi))
    qstar = (c + base.K(r0)) / base.G(r0)

    def kappa(r):
        Q = qstar + b * (r0 - r) + a * (np.exp(-r) - math.exp(-r0))
        return (Q - base.F0(r)) / m.h_pow(r, N - 1)

    s = spec(m, f, phi=repr(c), kappa=CallableField(kappa), R0=R0, interval=(lo, hi))
    q = q_condition_check(s, 200)
    assert q.passed
    rep = bernoulli_check(s, 200)
    assert rep.hypothesis_holds
    spacing = float(np.max(np.diff(working_grid(s, 200))))
    assert any(abs(z - r0) <= spacing for z in rep.defect_zeros)
    assert rep.cond1


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(list(PRESETS)), st.integers(2, 4), expressions,
       st.floats(-2, 2), st.floats(-2, 2), st.floats(0.6, 2.0))
def test_refinement_never_jumps_between_unsolvable_and_ball(name, N, expr, k0, k1, hi):
    m = PRESETS[name](N)
    s = spec(m, expr, kappa=f"{k0} + {k1}*r", interval=(0.02, hi))
    try:
        coarse = serrin_check(s, 100).verdict
    except NonIntegrableError:
        assume(False)
    fine = serrin_check(s, 200).verdict
    assert {coarse, fine} != {Verdict.UNSOLVABLE, Verdict.RADIAL_AND_BALL}


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(list(PRESETS)), st.integers(2, 4), expressions, st.floats(0.6, 2.0),
       st.booleans())
def test_adding_the_defect_gives_both_conditions(name, N, expr, hi, annular):
    m = PRESETS[name](N)
    if annular:
        base = spec(m, expr, phi="-1", R0=0.4, interval=(0.45, 0.4 + hi))
        kappa = CallableField(lambda r: w_of(base, r, -1.0))
        rep = bernoulli_check(spec(m, expr, phi="-1", kappa=kappa, R0=0.4,
                                   interval=(0.45, 0.4 + hi)), 100)
    else:
        base = spec(m, expr, interval=(0.02, hi))
        try:
            base.F
        except NonIntegrableError:
            assume(False)
        kappa = CallableField(lambda r: v_of(base, r))
        rep = serrin_check(spec(m, expr, kappa=kappa, interval=(0.02, hi)), 100)
    assert rep.cond1 and rep.cond2
    assert len(rep.defect_zeros) > 0


@pytest.mark.parametrize("m, f, kappa, interval", [
    (spherical(2), "2*cos(r)", "-0.9", (1.7, 2.5)),
    (euclidean(3), "1 + r", "-0.5", (0.05, 2.0)),
    (hyperbolic(2), "exp(-r)", "-0.2", (0.05, 3.0)),
])
def test_zeros_are_solvable_radii(m, f, kappa, interval):
    s = spec(m, f, kappa=kappa, interval=interval)
    rep = serrin_check(s)
    assert rep.defect_zeros
    for r0 in rep.defect_zeros:
        prof = ball_profile(s, r0, float(s.phi(r0)), n=64)
        assert prof.u_prime[-1] == pytest.approx(float(s.kappa(r0)), abs=1e-8)
