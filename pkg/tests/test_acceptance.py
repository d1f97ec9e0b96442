"""Acceptance criteria 1-9, one test each.  Every test records a PASS/FAIL
line that is repeated in the terminal summary."""

import math
from pathlib import Path

import numpy as np

from overdet.cli import main
from overdet.funcexpr import CallableField, ScalarField
from overdet.manifold import euclidean, hyperbolic, spherical
from overdet.pde2d import StarDomain, build_counterexample, radial_equivalence, solve_dirichlet
from overdet.radial import (OverdeterminedSpec, annulus_profile, ball_profile,
                            comparison_trajectory, ode_residual, v_of, w_of)
from overdet.rigidity import Verdict, bernoulli_check, q_condition_check, serrin_check

F = ScalarField.parse
PRESETS = [euclidean, hyperbolic, spherical]


def spec(m, f, phi="0", kappa="0", **kw):
    as_f = lambda x: F(x) if isinstance(x, str) else x
    return OverdeterminedSpec(m, as_f(f), as_f(phi), as_f(kappa), **kw)


def random_source(rng):
    """Smooth source drawn from a small family with random coefficients."""
    a, b, c, d = rng.uniform(-2, 2, 4)
    k = rng.uniform(0.5, 3)
    return f"{a:.6f} + {b:.6f}*cos({k:.6f}*r) + {c:.6f}*r + {d:.6f}*exp(-r)"


def random_annulus(rng):
    m = PRESETS[rng.integers(3)](int(rng.integers(2, 5)))
    R0 = rng.uniform(0.2, 1.0)
    R = R0 + rng.uniform(0.2, 1.8)
    return spec(m, random_source(rng), R0=R0), R, rng.uniform(-3, 3)


def test_criterion_1_closed_form_v(verdict_line):
    worst = {}
    r = np.linspace(0.01, 3.0, 200)
    worst["euclidean f=1"] = max(
        float(np.max(np.abs(v_of(spec(euclidean(N), "1"), r) + r / N))) for N in (2, 3, 4, 5))
    rs = np.linspace(0.01, math.pi - 0.01, 200)
    worst["spherical f=N cos r"] = max(
        float(np.max(np.abs(v_of(spec(spherical(N), f"{N}*cos(r)"), rs) + np.sin(rs))))
        for N in (2, 3))
    err = 0.0
    for make, grid in ((euclidean, r), (hyperbolic, r), (spherical, rs)):
        for N in (2, 3):
            m = make(N)
            s = OverdeterminedSpec(m, F(f"{N}*({m.h_prime.text})"))
            err = max(err, float(np.max(np.abs(v_of(s, grid) + m.h(grid)))))
    worst["f = N h' on all presets"] = err
    ok = all(e < 1e-9 for e in worst.values())
    verdict_line(1, ok, "max |v - closed form| " +
                 ", ".join(f"{k}: {e:.2e}" for k, e in worst.items()) + " (tol 1e-9)")
    assert ok


def test_criterion_2_singular_source(verdict_line):
    r = np.linspace(0.05, 2.0, 200)
    target = r ** -1.5
    # power-law member (N + alpha) r^alpha with N = 3, alpha = -2.5
    member = spec(euclidean(3), "0.5*r^(-2.5)")
    rel_member = float(np.max(np.abs(v_of(member, r) + target) / target))
    # the unscaled source r^(-2.5) is twice the member: v = -2 r^(-1.5)
    plain = spec(euclidean(3), "r^(-2.5)")
    rel_plain = float(np.max(np.abs(v_of(plain, r) + 2 * target) / (2 * target)))
    ok = rel_member < 1e-7 and rel_plain < 1e-7
    verdict_line(2, ok, f"relative error {rel_member:.2e} for 0.5 r^-2.5 against -r^-1.5, "
                        f"{rel_plain:.2e} for r^-2.5 against -2 r^-1.5 (tol 1e-7)")
    assert ok


def test_criterion_3_key_identity(verdict_line):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        s, R, c = random_annulus(rng)
        p = annulus_profile(s, R, c)
        worst = max(worst, float(np.max(np.abs(p.u_prime[1:] - w_of(s, p.grid[1:], p.u[1:])))))
    ok = worst < 1e-8
    verdict_line(3, ok, f"max |u' - w(r, u)| = {worst:.2e} over 20 annuli (tol 1e-8)")
    assert ok


def test_criterion_4_ode_residual(verdict_line):
    rng = np.random.default_rng(4)
    worst = 0.0
    count = 0
    for _ in range(10):
        s, R, c = random_annulus(rng)
        worst = max(worst, ode_residual(annulus_profile(s, R, c), s))
        count += 1
    for make in PRESETS:
        for N in (2, 3, 4):
            m = make(N)
            R = 2.5 if make is not spherical else 3.0
            s = spec(m, random_source(rng))
            worst = max(worst, ode_residual(ball_profile(s, R, rng.uniform(-1, 1)), s))
            count += 1
    singular = spec(euclidean(3), "0.5*r^(-2.5)")
    worst = max(worst, ode_residual(ball_profile(singular, 2.0, 0.0, r_min=1e-3), singular))
    count += 1
    ok = worst < 1e-7
    verdict_line(4, ok, f"max ode_residual = {worst:.2e} over {count} profiles (tol 1e-7)")
    assert ok


def _q_family_case(rng):
    m = PRESETS[rng.integers(3)](int(rng.integers(2, 5)))
    N = m.N
    R0 = rng.uniform(0.3, 0.8)
    lo, hi = R0 + 0.02, R0 + rng.uniform(0.6, 1.8)
    r0 = rng.uniform(lo, hi)
    f = f"({random_source(rng)})^2"
    c = rng.uniform(-2, 0)
    a, b = rng.uniform(0, 2, 2)
    base = spec(m, f, R0=R0, interval=(lo, hi))
    qstar = (c + base.K(r0)) / base.G(r0)

    def kappa(r):
        Q = qstar + b * (r0 - r) + a * (np.exp(-r) - math.exp(-r0))
        return (Q - base.F0(r)) / m.h_pow(r, N - 1)

    return spec(m, f, phi=repr(c), kappa=CallableField(kappa), R0=R0, interval=(lo, hi))


def test_criterion_5_rigidity_classifier(verdict_line):
    e2 = euclidean(2)
    w_base = lambda f, c: CallableField(
        lambda r, s=spec(e2, f, R0=1.0): w_of(s, r, c))
    cases = [
        ("serrin plane kappa=-r", serrin_check(spec(e2, "2", kappa="-r", interval=(0.01, 2.0))),
         Verdict.RADIAL_AND_BALL),
        ("serrin sphere strip", serrin_check(spec(spherical(2), "2*cos(r)", kappa="-0.9",
                                                  interval=(1.7, 2.5))),
         Verdict.RADIAL_AND_BALL),
        ("serrin unsolvable", serrin_check(spec(euclidean(3), "1", kappa="1",
                                                interval=(0.01, 2.0))),
         Verdict.UNSOLVABLE),
        ("bernoulli log", bernoulli_check(spec(e2, "0", phi="-1", kappa="-1/(r*log(r))", R0=1.0,
                                               interval=(1.05, 3.0))),
         Verdict.RADIAL_AND_BALL),
        ("bernoulli kappa=w(r,0) f=1", bernoulli_check(spec(e2, "1", kappa=w_base("1", 0.0), R0=1.0,
                                                         interval=(1.05, 3.0))),
         Verdict.RADIAL_AND_BALL),
        ("bernoulli kappa=0 f=0", bernoulli_check(spec(e2, "0", kappa="0", R0=1.0,
                                                         interval=(1.05, 3.0))),
         Verdict.RADIAL_ONLY),
        ("bernoulli defect 2-r", bernoulli_check(spec(
            e2, "0", phi="-1", kappa=CallableField(lambda r, w=w_base("0", -1.0): w(r) + r - 2),
            R0=1.0, interval=(1.05, 3.0))),
         Verdict.INCONCLUSIVE),
    ]
    wrong = [name for name, rep, want in cases if rep.verdict is not want]
    rng = np.random.default_rng(5)
    passed = implied = 0
    for _ in range(50):
        s = _q_family_case(rng)
        if q_condition_check(s, 200).passed:
            passed += 1
            implied += bernoulli_check(s, 200).cond1
    ok = not wrong and passed == 50 and implied == passed
    verdict_line(5, ok, f"{len(cases) - len(wrong)}/{len(cases)} example verdicts match"
                        + (f" (wrong: {', '.join(wrong)})" if wrong else "")
                        + f"; q-condition passed {passed}/50, cond1 true in {implied}/{passed}")
    assert ok


def test_criterion_6_cross_validation(verdict_line):
    cases = [
        ("euclidean disk", euclidean(2), StarDomain.ball(1.0), "1", 0.0),
        ("spherical cap", spherical(2), StarDomain.ball(math.pi / 3), "2*cos(r)", 0.0),
        ("hyperbolic ball", hyperbolic(2), StarDomain.ball(1.0), "0", 1.0),
        ("euclidean annulus", euclidean(2), StarDomain.annulus(1.0, math.e), "0", 1.0),
    ]
    details = []
    ok = True
    for name, m, dom, f, g in cases:
        s = OverdeterminedSpec(m, F(f), R0=dom.inner_radius)
        R = dom.constant_radius
        p = annulus_profile(s, R, g) if dom.annular else ball_profile(s, R, g)
        coarse = radial_equivalence(solve_dirichlet(m, dom, s.f, g, (128, 256)), p)
        fine = radial_equivalence(solve_dirichlet(m, dom, s.f, g, (256, 512)), p)
        factor = coarse / fine if fine > 0 else math.nan
        good = coarse < 1e-3 and 3.0 <= factor <= 5.0
        ok &= good
        note = ""
        if not good:
            # a scheme that is exact for the data leaves only roundoff, whose ratio
            # under refinement carries no convergence information
            note = (" [factor undefined: solution reproduced to roundoff]" if coarse < 1e-10
                    else " [out of range]")
        details.append(f"{name} err {coarse:.2e} factor {factor:.3g}{note}")
    verdict_line(6, ok, "; ".join(details) + " (err < 1e-3, factor in [3, 5])")
    assert ok


def test_criterion_7_counterexample(verdict_line):
    f = F("1")
    table = build_counterexample(1.5, 1.0, f, (192, 384))
    s = OverdeterminedSpec(euclidean(2), f, kappa=table.neumann_field(), interval=(1.0, 1.5))
    rep = serrin_check(s)
    outside = rep.verdict not in (Verdict.RADIAL_ONLY, Verdict.RADIAL_AND_BALL)
    ok = table.consistency < 5e-4 and outside and bool(np.all(table.kappa > 0))
    verdict_line(7, ok, f"consistency {table.consistency:.2e} (tol 5e-4), kappa in "
                        f"[{table.kappa.min():.4f}, {table.kappa.max():.4f}], "
                        f"verdict {rep.verdict.value} (cond1={rep.cond1}, cond2={rep.cond2})")
    assert ok


def test_criterion_8_comparison(verdict_line):
    """Super-solution y' >= w(r, y) and sub-solution y' <= w(r, y):
    an ordering at a propagates to the right, a reversed ordering at b to the left."""
    rng = np.random.default_rng(8)
    worst = 0.0
    for k in range(30):
        s, _, _ = random_annulus(rng)
        a = s.R0 + rng.uniform(0.05, 0.3)
        b = a + rng.uniform(0.3, 1.2)
        amp, freq = rng.uniform(0, 1, 2)
        up = lambda r: amp * (1 + math.sin(3 * freq * r))
        down = lambda r: -amp * freq * (1 + math.cos(2 * r))
        start = rng.uniform(-2, 2)
        gap = rng.uniform(0, 0.5) if k % 3 else 0.0
        if k % 2 == 0:
            _, lower = comparison_trajectory(s, a, b, start, down)
            _, upper = comparison_trajectory(s, a, b, start + gap, up)
            worst = max(worst, float(np.max(lower - upper)))
        else:
            _, lower = comparison_trajectory(s, a, b, start, down, from_right=True)
            _, upper = comparison_trajectory(s, a, b, start - gap, up, from_right=True)
            worst = max(worst, float(np.max(upper - lower)))
    ok = worst <= 1e-6
    verdict_line(8, ok, f"max ordering violation {worst:.2e} over 30 pairs (tol 1e-6)")
    assert ok


def test_criterion_9_determinism(verdict_line, tmp_path):
    runs = {
        "serrin-check": ("sphere_strip.toml", "defect.csv"),
        "radial": ("radial_hyperbolic.toml", "profile.csv"),
        "pde-solve": ("pde_cap.toml", "solution.csv"),
    }
    configs = Path(__file__).resolve().parent.parent / "configs"
    same = []
    for command, (cfg, csv) in runs.items():
        blobs = []
        for k in (1, 2):
            out = tmp_path / f"{command}-{k}"
            main([command, "--config", str(configs / cfg), "--out", str(out)])
            blobs.append((out / csv).read_bytes())
            if command == "pde-solve":
                blobs[-1] += (out / "flux.csv").read_bytes()
        same.append(blobs[0] == blobs[1] and len(blobs[0]) > 0)
    ok = all(same)
    verdict_line(9, ok, f"{sum(same)}/{len(same)} commands byte-identical across two runs")
    assert ok
