"""Acceptance criteria 1-12 at their stated tolerances.

Each test records a one-line outcome (printed in the terminal summary)
before asserting, so a failing criterion still reports its numbers.
"""

import math
import time

import numpy as np
import pytest

from fracpara import (ConductivityField, SpaceTimeField, apply_balakrishnan, build_grid, exact_kernel,
                      load_scenario, tail_integral_fb)
from fracpara.checks import (causality_perturbation, constants_report, run_decay, run_duality_check,
                             run_kernel_check, run_op_check, run_pushforward, run_reduction, run_transfer)
from fracpara.grid import GridSpec

from conftest import ACCEPTANCE


def record(number: int, title: str, ok: bool, detail: str):
    ACCEPTANCE[number] = (bool(ok), title, detail)
    assert ok, f"criterion {number} ({title}): {detail}"


def scenario(preset: str, disable=()):
    sc = load_scenario(preset=preset)
    sc.disabled.update(disable)
    return sc


def worst(res, prefix: str):
    items = [c for c in res.checks if c.name.startswith(prefix)]
    assert items, f"no checks named {prefix}"
    return items


def test_criterion_01_three_route_agreement():
    start = time.perf_counter()
    res = run_op_check(scenario("default1d"), refine=2)
    elapsed = time.perf_counter() - start
    agree = worst(res, "route_agreement")
    coarse = [c for c in agree if c.params["level"] == 0]
    orders = worst(res, "convergence_order")
    max_err = max(c.value for c in coarse)
    min_order = min(c.value for c in orders)
    ok = (max_err <= 1e-2 and all(c.params["grid"]["Nx"] == 64 and c.params["grid"]["Nt"] == 64 for c in coarse)
          and min_order >= 1.0 and elapsed <= 120.0 and {c.params["s"] for c in coarse} == {0.25, 0.5, 0.75})
    record(1, "three-route operator agreement", ok,
           f"max pairwise rel. L2 {max_err:.2e} <= 1e-2, min order {min_order:.2f} >= 1, {elapsed:.1f} s <= 120 s")


def test_criterion_02_constant_identities():
    rep = constants_report(np.random.default_rng(2024), count=20)
    ok = rep["product_error"] <= 1e-13 and rep["d_half_error"] <= 1e-15 and rep["c_half_error"] <= 1e-13
    record(2, "constant identities", ok,
           f"|d_s d_(1-s) - 1| {rep['product_error']:.1e}, |d_1/2 - 1| {rep['d_half_error']:.1e}, "
           f"|c_1/2 - 1/(2 sqrt(pi))| {rep['c_half_error']:.1e}")


def test_criterion_03_fourier_eigenfunctions():
    g = build_grid(GridSpec(n=1, L=4.0, Nx=64, T=1.0, Nt=64))
    kernel = exact_kernel(ConductivityField.identity(g))
    err = 0.0
    for s in (0.25, 0.5, 0.75):
        for kx in (0, 1, 3, 10, 31):
            for kt in (-31, -5, 0, 1, 7, 31):
                if kx == 0 and kt == 0:
                    continue
                xi, rho = np.pi * kx / g.spec.L, np.pi * kt / g.spec.T
                u = SpaceTimeField.from_function(g, lambda t, x: np.exp(1j * (xi * x[..., 0] + rho * t)),
                                                 causal=False)
                lam = (xi ** 2 + 1j * rho) ** s  # principal branch
                out = apply_balakrishnan(u, s, kernel).values
                err = max(err, float(np.max(np.abs(out - lam * u.values)) / abs(lam)))
    record(3, "spectral eigen-test", err <= 1e-3, f"max relative deviation {err:.1e} <= 1e-3")


def test_criterion_04_fb_scaling_identity():
    spread = 0.0
    for b in (0.3, 0.5, 1.0, 1.7):
        vals = [tail_integral_fb(b, A) * A ** b for A in (0.5, 1.0, 2.0, 4.0)]
        spread = max(spread, (max(vals) - min(vals)) / abs(np.mean(vals)))
        # oracle: substitution r = A / (4 tau) gives Gamma(b) 4^b
        assert np.mean(vals) == pytest.approx(math.gamma(b) * 4 ** b, rel=1e-8)
    f11 = abs(tail_integral_fb(1.0, 1.0) - 4.0)
    record(4, "f_b identity", spread <= 1e-8 and f11 <= 1e-8,
           f"relative spread of f_b(A) A^b {spread:.1e} <= 1e-8, |f_1(1) - 4| {f11:.1e} <= 1e-8")


def test_criterion_05_duality():
    sc = scenario("default1d")
    res = run_duality_check(sc, refine=2)
    resid = [c for c in res.checks if c.name == "conjugate_residual"]
    orders = worst(res, "conjugate_residual_order")
    trips = worst(res, "duality_roundtrip")
    r = max(c.value for c in resid)
    o = min(c.value for c in orders)
    t = max(c.value for c in trips)
    ok = r <= sc.tolerances["duality_residual"] and o >= 1.0 and t <= 2e-2
    record(5, "duality", ok, f"conjugate residual {r:.2e} <= {sc.tolerances['duality_residual']:g}, "
           f"min order {o:.2f} >= 1, round trip {t:.2e} <= 2e-2")


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["default1d", "default2d"])
def test_criterion_06_reduction(preset):
    res = run_reduction(scenario(preset, disable=["u_v_relation"]), refine=2)
    key = [c for c in res.checks if c.name.startswith("key_equation[") and c.params["level"] == 0]
    dec = worst(res, "key_equation_decrease")
    ctrl = [c for c in res.checks if c.name.startswith("raw_u_control_ratio") and c.params["level"] == 0]
    labels = {c.name for c in key}
    k = max(c.value for c in key)
    d = max(c.value for c in dec)
    r = min(c.value for c in ctrl)
    ok = k <= 5e-2 and d < 1.0 and r >= 10.0 and labels == {"key_equation[identity]", "key_equation[configured]"}
    detail = f"{preset}: max weak residual {k:.2e} <= 5e-2, refined/coarse <= {d:.2f} < 1, control ratio >= {r:.0f}"
    prev = ACCEPTANCE.get(6)
    if prev is not None:
        ok, detail = ok and prev[0], prev[2] + "; " + detail
    record(6, "reduction to a local equation", ok, detail)


def test_criterion_07_one_minus_s_relation():
    """The relation exactly as stated: ||H^(1-s) v + d_(1-s) u|| / ||u|| <= 5e-2."""
    res = run_reduction(scenario("default1d", disable=["key_equation", "control_ratio"]), refine=1)
    stated = next(c for c in res.checks if c.name == "u_v_relation[plus]")
    opposite = next(c for c in res.checks if c.name == "u_v_relation[minus]")
    assert stated.params["s"] == 0.5
    record(7, "(1-s) relation", stated.value <= 5e-2,
           f"||H^(1-s) v + d_(1-s) u|| / ||u|| = {stated.value:.3f} > 5e-2; "
           f"with the opposite sign the residual is {opposite.value:.1e}")


def test_criterion_08_transfer_graph():
    parts, ok = [], True
    for preset in ("default1d", "default2d"):
        res = run_transfer(scenario(preset), refine=1)
        checks = worst(res, "transfer_graph")
        bumps = {c.name for c in checks}
        m = max(c.value for c in checks)
        ok &= m <= 5e-2 and len(bumps) >= 3
        parts.append(f"{preset}: {len(bumps)} bumps, max rel. {m:.1e}")
    record(8, "transfer-map graph property", ok, "; ".join(parts) + " (<= 5e-2)")


def test_criterion_09_causality():
    m = 0.0
    for preset in ("default1d", "default2d"):
        sc = scenario(preset)
        g = sc.grid(0)
        sigma, masks = sc.sigma(g), sc.masks(g)
        for s in sc.s_values:
            for i, f in enumerate(sc.bumps(g)):
                for split in (g.spec.Nt // 4, g.spec.Nt // 2, 3 * g.spec.Nt // 4):
                    m = max(m, causality_perturbation(sigma, s, f, masks, seed=i, split=split))
    record(9, "causality", m <= 1e-10, f"max change before the perturbation time {m:.1e} <= 1e-10")


@pytest.mark.slow
@pytest.mark.parametrize("preset,refine", [("default1d", 3), ("default2d", 2)])
def test_criterion_10_pushforward_invariance(preset, refine):
    res = run_pushforward(scenario(preset), refine=refine)
    inv = [c for c in res.checks if c.name == "pushforward_invariance"]
    ctl = [c for c in res.checks if c.name == "boundary_moving_control"]
    seq = [c.value for c in inv]
    decreasing = all(b < a for a, b in zip(seq, seq[1:]))
    ok = seq[0] <= 5e-2 and decreasing and min(c.value for c in ctl) >= 0.1
    detail = (f"{preset}: blockwise discrepancy " + " -> ".join(f"{v:.1e}" for v in seq)
              + f" (<= 5e-2, decreasing), boundary-moving control >= {min(c.value for c in ctl):.2f}")
    prev = ACCEPTANCE.get(10)
    if prev is not None:
        ok, detail = ok and prev[0], prev[2] + "; " + detail
    record(10, "push-forward invariance", ok, detail)


def test_criterion_11_decay_exponents():
    res = run_decay(scenario("default1d"))
    checks = {c.name: c for c in res.checks}
    names = ("decay_slope[extension]", "decay_slope[gradient]", "decay_slope[w_tail]")
    assert all(c.params["n"] == 1 for c in checks.values())
    ok = all(n in checks and checks[n].value <= 0.2 for n in names)
    detail = ", ".join(f"{n[12:-1]} slope {checks[n].params['slope']:.3f} (target {checks[n].params['target']:g})"
                       for n in names if n in checks)
    record(11, "decay exponents", ok, detail + ", band 0.2")


def test_criterion_12_kernel_hygiene():
    sc = scenario("default1d")
    assert sc.spec.Nx == 64
    res = run_kernel_check(sc)
    groups = {}
    for prefix, tol in (("kernel_l1", 1e-2), ("kernel_mass", 1e-4), ("kernel_symmetry", 1e-6),
                        ("chapman_kolmogorov", 1e-3)):
        groups[prefix] = (max(c.value for c in worst(res, prefix)), tol)
    ok = all(v <= tol for v, tol in groups.values())
    record(12, "heat-kernel hygiene", ok, ", ".join(f"{k} {v:.1e} <= {t:g}" for k, (v, t) in groups.items()))
