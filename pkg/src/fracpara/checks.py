"""Scenario-level diagnostics shared by the command line and the test suite.

Every runner returns a :class:`RunResult` holding named checks (value,
tolerance, pass flag and the parameters that produced the number),
informational values, CSV tables and plot data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dnmap, extension, pushforward, reduction
from .conductivity import ConductivityField
from .fracop import apply_balakrishnan, apply_extension_trace, apply_symbol, frac_constants
from .grid import SpaceTimeField, graded_nodes
from .heat_kernel import build_discrete, check_gaussian_bounds, exact_kernel, periodized_exact
from .scenario import Scenario, exterior_bump, operator_datum
from .tauquad import DEFAULT_QUADRATURE

# near-trace nodes of the operator check: graded so that the first nodes sit
# deep inside the y^(2s) boundary layer
TRACE_YMAX = 2.0
TRACE_GRADE = 3.0


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str  # "<=" or ">="
    params: dict

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.tolerance if self.relation == "<=" else self.value >= self.tolerance

    def as_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "tolerance": float(self.tolerance),
                "relation": self.relation, "passed": self.passed, "params": self.params}


@dataclass
class RunResult:
    command: str
    checks: list = field(default_factory=list)
    values: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)
    archives: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, value, tol, relation="<=", **params) -> Check:
        c = Check(name, float(value), float(tol), relation, params)
        self.checks.append(c)
        return c

    def note(self, name, value, **params):
        self.values.append({"name": name, "value": float(value), "params": params})

    def table(self, name: str, header: list, rows: list):
        self.tables[name] = (header, rows)


def _grid_params(grid) -> dict:
    return grid.spec.as_dict()


def _quad_params() -> dict:
    q = DEFAULT_QUADRATURE
    return {"gl_order": q.gl_order, "dyadic_levels": q.dyadic_levels, "jacobi_order": q.jacobi_order}


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def _orders(errors: list) -> list:
    return [math.log2(errors[i] / errors[i + 1]) if errors[i + 1] > 0 else math.inf
            for i in range(len(errors) - 1)]


def _levels(refine: int) -> range:
    return range(max(int(refine), 1))


# ----------------------------------------------------------------------


def run_op_check(sc: Scenario, refine: int = 1) -> RunResult:
    """Balakrishnan, symbol and extension-trace routes on a Gaussian datum (sigma = Id)."""
    res = RunResult("op-check")
    tol = sc.tolerances
    pairs = (("balakrishnan", "symbol"), ("trace", "symbol"), ("balakrishnan", "trace"))
    rows = []
    for s in sc.s_values:
        errs = {p: [] for p in pairs}
        for lvl in _levels(refine):
            grid = sc.grid(lvl)
            u = operator_datum(grid)
            kernel = exact_kernel(ConductivityField.identity(grid))
            nodes = graded_nodes(TRACE_YMAX, grid.spec.Ny, TRACE_GRADE)[:4]
            out = {"balakrishnan": apply_balakrishnan(u, s, kernel).values,
                   "symbol": apply_symbol(u, s).values,
                   "trace": apply_extension_trace(u, s, kernel, trace_nodes=nodes).values}
            params = dict(s=s, level=lvl, grid=_grid_params(grid), quadrature=_quad_params(),
                          trace_nodes=[float(v) for v in nodes])
            for a, b in pairs:
                e = _rel(out[a], out[b])
                errs[a, b].append(e)
                res.check(f"route_agreement[{a}-{b}]", e, tol["route_agreement"], **params)
                rows.append([s, lvl, grid.spec.Nx, grid.spec.Nt, f"{a}-{b}", e])
        for (a, b), e in errs.items():
            for i, order in enumerate(_orders(e)):
                res.check(f"convergence_order[{a}-{b}]", order, tol["min_order"], ">=",
                          s=s, levels=[i, i + 1], errors=e[i:i + 2], grid=_grid_params(sc.grid(i)))
        if refine > 1:
            res.plots.append({"kind": "convergence", "name": f"op_check_s{s:g}",
                              "x": [sc.grid(i).spec.Nx for i in _levels(refine)],
                              "series": {f"{a}-{b}": e for (a, b), e in errs.items()}})
    res.table("route_errors", ["s", "level", "Nx", "Nt", "pair", "rel_l2"], rows)
    return res


def run_extension_check(sc: Scenario, refine: int = 1) -> RunResult:
    """Kernel representation against the implicit PDE solver, and the PDE trace against the symbol."""
    res = RunResult("extension-check")
    tol = sc.tolerances
    rows = []
    for s in sc.s_values:
        diffs = []
        for lvl in _levels(refine):
            grid = sc.grid(lvl)
            u = operator_datum(grid)
            kernel = exact_kernel(ConductivityField.identity(grid))
            a = extension.extend_kernel(u, s, kernel)
            b = extension.extend_pde(u, s, kernel=kernel)
            m = grid.y <= 0.5 * grid.spec.Ymax
            d = _rel(b.values[..., m], a.values[..., m])
            sym = apply_symbol(u, s).values
            tr = apply_extension_trace(u, s, kernel, method="pde").values
            params = dict(s=s, level=lvl, grid=_grid_params(grid), quadrature=_quad_params(), scheme="bdf2")
            res.check("kernel_vs_pde", d, tol["extension_agreement"], **params)
            res.check("pde_trace_vs_symbol", _rel(tr, sym), tol["extension_agreement"], **params)
            res.note("kernel_extension_pde_residual",
                     extension.weighted_pde_residual(a, 1 - 2 * s, kernel, t_window=(-0.5 * grid.spec.T, 0.5 * grid.spec.T)),
                     **params)
            diffs.append(d)
            rows.append([s, lvl, grid.spec.Nx, grid.spec.Nt, grid.spec.Ny, d])
        for i, order in enumerate(_orders(diffs)):
            res.check("kernel_vs_pde_order", order, tol["min_order"], ">=", s=s, levels=[i, i + 1], errors=diffs[i:i + 2])
    res.table("extension_agreement", ["s", "level", "Nx", "Nt", "Ny", "rel_l2"], rows)
    return res


def run_duality_check(sc: Scenario, refine: int = 1) -> RunResult:
    """``u2 = -y^(2s-1) dU1/dy`` for ``U1`` of order ``1-s``: residual and integral round trip."""
    res = RunResult("duality-check")
    tol = sc.tolerances
    rows = []
    for s in sc.s_values:
        resid = []
        for lvl in _levels(refine):
            grid = sc.grid(lvl)
            u = operator_datum(grid)
            kernel = exact_kernel(ConductivityField.identity(grid))
            u1 = extension.extend_kernel(u, 1.0 - s, kernel)
            u2 = extension.conjugate_transform(u1, s)
            T = grid.spec.T
            r = extension.weighted_pde_residual(u2, 1.0 - 2.0 * s, kernel, t_window=(-0.5 * T, 0.5 * T))
            back = extension.inverse_conjugate(u2, s)
            rt = _rel(back.values, u1.values)
            params = dict(s=s, level=lvl, grid=_grid_params(grid), quadrature=_quad_params(),
                          y_window=[grid.spec.Ymax / 12, grid.spec.Ymax / 2], t_window=[-0.5 * T, 0.5 * T])
            res.check("conjugate_residual", r, tol["duality_residual"], **params)
            res.check("duality_roundtrip", rt, tol["duality_roundtrip"], **params)
            resid.append(r)
            rows.append([s, lvl, grid.spec.Nx, grid.spec.Nt, grid.spec.Ny, r, rt])
        for i, order in enumerate(_orders(resid)):
            res.check("conjugate_residual_order", order, tol["min_order"], ">=", s=s, levels=[i, i + 1],
                      errors=resid[i:i + 2])
    res.table("duality", ["s", "level", "Nx", "Nt", "Ny", "residual", "roundtrip"], rows)
    return res


def _pipeline(sigma, s, f, masks, kernel=None, extra_nt=None):
    kernel = dnmap.discrete_kernel(sigma) if kernel is None else kernel
    u = dnmap.solve_nonlocal(sigma, s, f, masks, kernel=kernel)
    ext = extension.extend_kernel(u, s, kernel, nt=extra_nt)
    return u, ext, reduction.compute_v(ext, s)


def run_reduction(sc: Scenario, refine: int = 1) -> RunResult:
    """Weak heat residual of ``v`` (identity and configured sigma), raw-``u`` control, ``u``-``v`` relation."""
    res = RunResult("reduction")
    tol = sc.tolerances
    rows = []
    for s in sc.s_values:
        for label in ("identity", "configured"):
            if label == "configured" and sc.raw["sigma"].get("kind") == "identity":
                continue
            history = []
            for lvl in _levels(refine):
                grid = sc.grid(lvl)
                sigma = ConductivityField.identity(grid) if label == "identity" else sc.sigma(grid)
                masks = sc.masks(grid)
                if label == "configured" and not sigma.identity_outside(masks.omega):
                    res.note("sigma_not_identity_outside_domain", 1.0, sigma=sigma.name)
                f = sc.bumps(grid)[0]
                u, ext, v = _pipeline(sigma, s, f, masks)
                key = reduction.check_key_equation(v, sigma, masks)
                ctrl = reduction.check_key_equation(u, sigma, masks)
                params = dict(s=s, level=lvl, sigma=sigma.name, grid=_grid_params(grid),
                              quadrature=_quad_params(), test_family=key.version)
                if sc.enabled("key_equation"):
                    res.check(f"key_equation[{label}]", key.max_residual, tol["key_equation"], **params)
                ratio = ctrl.max_residual / max(key.max_residual, 1e-300)
                if sc.enabled("control_ratio"):
                    res.check(f"raw_u_control_ratio[{label}]", ratio, tol["control_ratio"], ">=", **params)
                history.append(key.max_residual)
                rows.append([s, label, lvl, grid.spec.Nx, grid.spec.Nt, key.max_residual, ctrl.max_residual])
            if sc.enabled("key_equation"):
                for i in range(len(history) - 1):
                    res.check(f"key_equation_decrease[{label}]", history[i + 1] / history[i], 1.0, "<=",
                              s=s, levels=[i, i + 1], residuals=history[i:i + 2])
    res.table("key_equation", ["s", "sigma", "level", "Nx", "Nt", "residual", "raw_u_residual"], rows)
    # (1-s) relation: needs sigma = Id and the exact symbol, so the pipeline
    # runs with the exact kernel and twice the time window for v.
    if sc.enabled("u_v_relation"):
        grid = sc.grid(0)
        sigma = ConductivityField.identity(grid)
        masks = sc.masks(grid)
        f = sc.bumps(grid)[0]
        s = 0.5 if 0.5 in sc.s_values else sc.s_values[0]
        kernel = exact_kernel(sigma)
        u, ext, v = _pipeline(sigma, s, f, masks, kernel=kernel, extra_nt=2 * grid.spec.Nt)
        params = dict(s=s, grid=_grid_params(grid), quadrature=_quad_params(), kernel="exact",
                      v_window=2 * grid.spec.Nt)
        stated = reduction.check_one_minus_s_relation(v, u, s, sign=1.0)
        corrected = reduction.check_one_minus_s_relation(v, u, s, sign=-1.0)
        res.check("u_v_relation[plus]", stated, tol["u_v_relation"], form="H^(1-s) v + d_(1-s) u", **params)
        res.check("u_v_relation[minus]", corrected, tol["u_v_relation"], form="H^(1-s) v - d_(1-s) u", **params)
        hs = apply_balakrishnan(u, s, kernel)
        res.note("outline_identity[minus]", reduction.outline_identity_residual(ext, hs, s, sign=-1.0), **params)
        res.note("outline_identity[plus]", reduction.outline_identity_residual(ext, hs, s, sign=1.0), **params)
    return res


def run_transfer(sc: Scenario, refine: int = 1) -> RunResult:
    """Cauchy pairs from the transfer map reproduced by the local forward solver."""
    res = RunResult("transfer")
    tol = sc.tolerances
    grid = sc.grid(0)
    sigma = sc.sigma(grid)
    masks = sc.masks(grid)
    rows = []
    for s in sc.s_values:
        for i, f in enumerate(sc.bumps(grid)):
            pair = dnmap.transfer_map(sigma, s, f, masks)
            flux = dnmap.local_dn(sigma, pair.trace, masks)
            d = _rel(flux, pair.flux)
            res.check(f"transfer_graph[bump{i}]", d, tol["transfer"], s=s, bump=sc.raw["masks"]["bumps"][i],
                      sigma=sigma.name, grid=_grid_params(grid), quadrature=_quad_params())
            rows.append([s, i, d])
            res.archives[f"cauchy_s{s:g}_bump{i}"] = (pair, grid, masks)
    res.table("transfer", ["s", "bump", "rel_l2"], rows)
    return res


def causality_perturbation(sigma, s, f: SpaceTimeField, masks, seed: int = 0, split: int | None = None) -> float:
    """Max change of the nonlocal solution up to ``t_split`` when data after it are perturbed."""
    rng = np.random.default_rng(seed)
    nt = f.nt
    j0 = nt // 2 if split is None else split
    pert = np.zeros_like(f.values)
    pert[j0 + 1:] = rng.standard_normal((nt - j0 - 1,) + f.grid.spatial_shape) * masks.w_set
    kernel = dnmap.discrete_kernel(sigma)
    op = dnmap.NonlocalOperator(kernel, s, nt)
    a = dnmap.solve_nonlocal(sigma, s, f, masks, operator=op).values
    b = dnmap.solve_nonlocal(sigma, s, f.with_values(f.values + pert), masks, operator=op).values
    return float(np.max(np.abs(a[: j0 + 1] - b[: j0 + 1])))


def _dn_linearity(dn: dnmap.DNMatrix, sigma, masks, rng, s=None) -> float:
    """DN matrix times random coefficients against the solver on the combined datum."""
    grid = sigma.grid
    nt = dn.meta["nt"]
    coef = rng.standard_normal(len(dn.cols))
    if dn.kind == "local":
        g = np.zeros((nt, len(masks.boundary)))
        for c, (k, j) in zip(coef, dn.cols):
            g[:, k] += c * dnmap.time_mollifier(nt, j)
        direct = dnmap.local_dn(sigma, g, masks).ravel()
    else:
        widx = masks.w_index
        data = np.zeros((nt,) + grid.spatial_shape)
        for c, (k, j) in zip(coef, dn.cols):
            spot = np.zeros(grid.spatial_shape)
            spot.ravel()[widx[k]] = 1.0
            for ax in range(grid.n):
                spot = 0.25 * np.roll(spot, -1, axis=ax) + 0.5 * spot + 0.25 * np.roll(spot, 1, axis=ax)
            data += c * dnmap.time_mollifier(nt, j).reshape((nt,) + (1,) * grid.n) * (spot * masks.w_set)
        direct = dnmap.nonlocal_dn(sigma, s, SpaceTimeField(grid, data), masks).ravel()
    return _rel(dn.entries @ coef, direct)


def run_dn(sc: Scenario, kind: str, refine: int = 1, seed: int = 0) -> RunResult:
    """Assemble a DN matrix; check causal triangularity, linearity and (nonlocal) causality."""
    res = RunResult(f"dn-{kind}")
    tol = sc.tolerances
    grid = sc.grid(0)
    sigma = sc.sigma(grid)
    masks = sc.masks(grid)
    rng = np.random.default_rng(seed)
    orders = sc.s_values if kind == "nonlocal" else [None]
    for s in orders:
        dn = dnmap.assemble_dn_matrix(kind, sigma, masks, s=s)
        tag = f"s{s:g}" if s is not None else "local"
        params = dict(s=s, sigma=sigma.name, grid=_grid_params(grid), columns=len(dn.cols), rows=len(dn.rows))
        res.check(f"causal_triangularity[{tag}]", dn.causal_violation() / np.max(np.abs(dn.entries)),
                  tol["dn_causal"], **params)
        res.check(f"linearity[{tag}]", _dn_linearity(dn, sigma, masks, rng, s), tol["dn_linearity"], **params)
        if kind == "nonlocal":
            for i, f in enumerate(sc.bumps(grid)):
                res.check(f"causality[{tag},bump{i}]", causality_perturbation(sigma, s, f, masks, seed=seed),
                          tol["causality"], **params)
        label = f"dn_{kind}_{tag}" if s is not None else f"dn_{kind}"
        res.archives[label] = dn
        res.plots.append({"kind": "heatmap", "name": label, "matrix": dn.entries,
                          "xlabel": "data (node, time)", "ylabel": "response (node, time)"})
    return res


def _diffeo(cfg: dict):
    params = {k: v for k, v in cfg.items() if k != "name"}
    return pushforward.diffeo_family(cfg["name"], **params)


def run_pushforward(sc: Scenario, refine: int = 1) -> RunResult:
    """Local DN invariance under a boundary-fixing map; boundary-moving control."""
    res = RunResult("pushforward")
    tol = sc.tolerances
    good = _diffeo(sc.raw["checks"]["diffeo"])
    bad = _diffeo(sc.raw["checks"]["control_diffeo"])
    rows, inv, ctl = [], [], []
    for lvl in _levels(refine):
        grid = sc.grid(lvl)
        sigma = sc.sigma(grid)
        masks = sc.masks(grid)
        params = dict(level=lvl, sigma=sigma.name, grid=_grid_params(grid), metric="blockwise")
        a = pushforward.check_cauchy_invariance(sigma, good, masks)
        b = pushforward.check_cauchy_invariance(sigma, bad, masks)
        res.check("pushforward_invariance", a.blockwise, tol["pushforward"], diffeo=good.params | {"name": good.name}, **params)
        res.check("boundary_moving_control", b.blockwise, tol["control_floor"], ">=",
                  diffeo=bad.params | {"name": bad.name}, **params)
        res.note("pushforward_invariance_frobenius", a.discrepancy, **params)
        res.note("boundary_moving_control_frobenius", b.discrepancy, **params)
        inv.append(a.blockwise)
        ctl.append(b.blockwise)
        rows.append([lvl, grid.spec.Nx, grid.spec.Nt, a.blockwise, a.discrepancy, b.blockwise, b.discrepancy])
    for i in range(len(inv) - 1):
        res.check("pushforward_decrease", inv[i + 1] / inv[i], 1.0, "<=", levels=[i, i + 1], values=inv[i:i + 2])
    res.table("pushforward", ["level", "Nx", "Nt", "invariance_blockwise", "invariance_frobenius",
                              "control_blockwise", "control_frobenius"], rows)
    if len(inv) > 1:
        res.plots.append({"kind": "convergence", "name": "pushforward_invariance",
                          "x": [r[1] for r in rows], "series": {"boundary-fixing map": inv}})
    return res


def run_decay(sc: Scenario, refine: int = 1) -> RunResult:
    """Log-log slopes of the time-integrated extension, its gradient and the weighted tail ``w``."""
    res = RunResult("decay")
    tol = sc.tolerances
    grid = sc.grid(0)
    n = grid.n
    s = float(sc.raw["fractional"].get("decay_s", 0.75))
    datum = {"center": [0.0] * n, "radius": 0.5, "time": 0.0, "duration": 0.5}
    u = exterior_bump(grid, datum)
    ys = extension.default_decay_grid()[1:]
    U, G = extension.poisson_extension_integrated(u, s, ys)
    # sup over x of the time integral; ũ >= 0 for this datum
    norm_u = np.max(np.abs(U), axis=0)
    norm_g = np.max(G, axis=0)
    diam = 2.0 * datum["radius"]
    fits = {"extension": (extension.decay_profile(ys, norm_u, diam), -float(n)),
            "gradient": (extension.decay_profile(ys, norm_g, diam), -float(n + 1))}
    w_exp = 2.0 - 2.0 * s - n
    if w_exp < 0:
        W = extension.tail_power_w(U, ys, s)
        fits["w_tail"] = (extension.decay_profile(ys, np.max(np.abs(W), axis=0), diam), w_exp)
    else:
        res.note("w_tail_skipped_nonintegrable", w_exp, s=s, n=n)
    series = {}
    for name, (fit, target) in fits.items():
        res.check(f"decay_slope[{name}]", abs(fit.slope - target), tol["decay_band"], s=s, n=n,
                  slope=fit.slope, target=target, window=list(fit.window), grid=_grid_params(grid),
                  y_nodes=len(ys))
        series[name] = (fit.y.tolist(), fit.norms.tolist(), fit.slope)
    res.table("decay", ["quantity", "slope", "target"], [[k, f.slope, t] for k, (f, t) in fits.items()])
    res.plots.append({"kind": "decay", "name": "decay_slopes", "series": series})
    return res


def run_kernel_check(sc: Scenario, refine: int = 1, taus=(0.25, 0.5, 1.0)) -> RunResult:
    """Discrete identity-conductivity kernel against the periodized Gaussian; Gaussian bounds for sigma."""
    res = RunResult("kernel-check")
    tol = sc.tolerances
    grid = sc.grid(0)
    ident = ConductivityField.identity(grid)
    kern = build_discrete(ident, taus)
    xs = grid.coords().reshape(-1, grid.n)
    rows = []
    for tau in taus:
        exact = np.stack([periodized_exact(grid, z, tau).ravel() for z in xs], axis=1)
        P = kern.table[tau]
        l1 = float(np.abs(P - exact).sum() / np.abs(exact).sum())
        mass = float(np.max(np.abs(kern.mass(tau) - 1.0)))
        sym = kern.asymmetry[tau]
        params = dict(tau=tau, grid=_grid_params(grid), method=kern.method)
        res.check(f"kernel_l1[tau={tau:g}]", l1, tol["kernel_l1"], **params)
        res.check(f"kernel_mass[tau={tau:g}]", mass, tol["kernel_mass"], **params)
        res.check(f"kernel_symmetry[tau={tau:g}]", sym, tol["kernel_symmetry"], **params)
        rows.append([tau, l1, mass, sym])
    for a in taus:
        if 2 * a in kern.table:
            P, Q = kern.table[a], kern.table[2 * a]
            ck = float(np.max(np.abs(P @ P * grid.cell_volume - Q)) / np.max(np.abs(Q)))
            res.check(f"chapman_kolmogorov[tau={a:g}+{a:g}]", ck, tol["chapman_kolmogorov"],
                      grid=_grid_params(grid), method=kern.method)
    sigma = sc.sigma(grid)
    bounds = check_gaussian_bounds(build_discrete(sigma, taus))
    res.check("gaussian_bound_violations", bounds.violations, 0.0, sigma=sigma.name, **bounds.as_dict())
    for k, v in bounds.as_dict().items():
        res.note(f"gaussian_bounds.{k}", v, sigma=sigma.name, grid=_grid_params(grid))
    res.table("kernel", ["tau", "rel_l1", "mass_error", "asymmetry"], rows)
    mid = grid.n_nodes // 2 if grid.n == 1 else np.ravel_multi_index((grid.spec.Nx // 2,) * 2, grid.spatial_shape)
    res.plots.append({"kind": "kernel", "name": "kernel_profiles", "taus": list(taus),
                      "profiles": [kern.table[t][:, mid].reshape(grid.spatial_shape) for t in taus],
                      "x": grid.x})
    return res


RUNNERS = {
    "op-check": run_op_check,
    "extension-check": run_extension_check,
    "duality-check": run_duality_check,
    "reduction": run_reduction,
    "transfer": run_transfer,
    "pushforward": run_pushforward,
    "decay": run_decay,
    "kernel-check": run_kernel_check,
}


def run_command(command: str, sc: Scenario, refine: int = 1, seed: int = 0) -> RunResult:
    if command == "dn-local":
        return run_dn(sc, "local", refine, seed)
    if command == "dn-nonlocal":
        return run_dn(sc, "nonlocal", refine, seed)
    if command not in RUNNERS:
        raise KeyError(command)
    return RUNNERS[command](sc, refine)


def constants_report(rng: np.random.Generator, count: int = 20) -> dict:
    """``d_s d_(1-s) - 1`` over random orders and the half-order values."""
    s = rng.uniform(0.01, 0.99, count)
    prod = max(abs(frac_constants(v).d * frac_constants(1 - v).d - 1.0) for v in s)
    half = frac_constants(0.5)
    return {"product_error": prod, "d_half_error": abs(half.d - 1.0),
            "c_half_error": abs(half.c - 1.0 / (2.0 * math.sqrt(math.pi)))}
