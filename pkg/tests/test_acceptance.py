"""Acceptance gate: one recorded line per criterion, printed in the terminal summary."""

import time

import numpy as np
import pytest

from conftest import record_criterion
from richards_lab import SoilModel, StabilityViolated, Verdict, classify
from richards_lab import coupled, fdm1d, fem2d, harness
from richards_lab.accel import wrap
from richards_lab.harness import ExperimentConfig
from richards_lab.orders import estimate_q_order, quotient_sequence


@pytest.fixture(scope="module")
def bench():
    runs = {}
    for name, kw in {"newton": dict(scheme="newton"), "lscheme": {},
                     "aa": dict(aa_enabled=True, aa_depth=5)}.items():
        runs[name] = harness.run(ExperimentConfig(problem="benchmark2d", **kw), write=False)
    return runs


@pytest.fixture(scope="module")
def column():
    out = {}
    for name, aa in (("plain", False), ("aa", True)):
        cfg = ExperimentConfig(problem="fdm1d_generic", aa_enabled=aa, aa_depth=5)
        harness.run(cfg, write=False)         # warm-up so JIT compilation is not timed
        t0 = time.perf_counter()
        rec = harness.run(cfg, write=False)
        out[name] = (rec, time.perf_counter() - t0)
    return out


def test_criterion_1_refinement_eoc():
    t0 = time.perf_counter()
    rows = coupled.refinement_study()
    wall = time.perf_counter() - t0
    eoc_psi = np.array([r.eoc_psi for r in rows[1:]])
    eoc_c = np.array([r.eoc_c for r in rows[1:]])
    ok = (1.6 <= eoc_psi.mean() <= 2.2) and (1.7 <= eoc_c.mean() <= 2.4) and wall < 60
    record_criterion(
        "1 refinement EOC", ok,
        f"EOC_psi={np.round(eoc_psi, 3).tolist()} mean {eoc_psi.mean():.3f}; "
        f"EOC_c={np.round(eoc_c, 3).tolist()} mean {eoc_c.mean():.3f}; {wall:.1f} s",
    )
    assert ok


def test_criterion_2_newton_quadratic(bench):
    rec = bench["newton"]
    details, ok = [], True
    for seq, rep in zip(rec.sequences, rec.reports):
        w = rep.tail
        p_q = rep.p_Q[-w:]
        p_r = rep.p_R[-w:]
        q2 = quotient_sequence(seq, 2)[-w:]
        good = (np.all((p_q >= 1.7) & (p_q <= 2.3))
                and p_r[-1] >= 2.0 and np.all(np.diff(p_r) < 0)
                and np.all(np.isfinite(q2)) and q2.max() / q2.min() < 10
                and rep.verdict == Verdict.C_order and rep.p_final == 2.0)
        ok &= bool(good)
        details.append(f"{seq.meta['checkpoint']}: p_Q {p_q.min():.2f}..{p_q.max():.2f}, "
                       f"p_R->{p_r[-1]:.2f}, Q_2 spread {q2.max() / q2.min():.2f}")
    ok &= max(rec.iterations) <= 12
    record_criterion("2 Newton quadratic order", ok,
                     "; ".join(details) + f"; max iterations/step {max(rec.iterations)}")
    assert ok


def test_criterion_3_lscheme_linear(bench):
    rec = bench["lscheme"]
    details, ok = [], True
    for seq, rep in zip(rec.sequences, rec.reports):
        q1 = rep.tail_Q
        spread = (q1.max() - q1.min()) / q1.mean()
        good = (rep.verdict == Verdict.C_order and rep.p_final == 1.0
                and np.all((q1 > 0.05) & (q1 < 0.95)) and spread < 0.25)
        ok &= bool(good)
        details.append(f"{seq.meta['checkpoint']}: Q_1 {q1.mean():.3f} spread {spread:.1e}")
    record_criterion("3 L-scheme linear order", ok, "; ".join(details))
    assert ok


def test_criterion_4_aa_implicit(bench):
    plain, aa = bench["lscheme"], bench["aa"]
    iter_ratio = aa.total_iterations / plain.total_iterations
    q_ratios = [harness.tail_rate(sa, ra) / harness.tail_rate(sp, rp)
                for sa, ra, sp, rp in zip(aa.sequences, aa.reports, plain.sequences, plain.reports)]
    ok = iter_ratio <= 0.6 and max(q_ratios) <= 0.7
    record_criterion("4 AA speeds up the implicit L-scheme", ok,
                     f"iterations {aa.total_iterations}/{plain.total_iterations} = {iter_ratio:.2f}; "
                     f"tail Q_1 ratios {np.round(q_ratios, 2).tolist()}")
    assert ok


def test_criterion_5_aa_explicit(column):
    (plain, t_plain), (aa, t_aa) = column["plain"], column["aa"]
    ratio = aa.total_iterations / plain.total_iterations
    ok = ratio >= 0.9 and t_aa > t_plain
    record_criterion("5 AA does not help the explicit scheme", ok,
                     f"iterations {aa.total_iterations}/{plain.total_iterations} = {ratio:.2f}; "
                     f"wall {t_aa:.3f} s vs {t_plain:.3f} s")
    assert ok


def test_criterion_6_error_correction_dichotomy():
    last, reports = coupled.dichotomy_study(nz=40)
    verdicts = {k: (r.verdict.value, r.p_final) for k, r in reports.items()}
    ok = (reports["psi_errors"].verdict == Verdict.sublinear
          and reports["c_errors"].verdict == Verdict.sublinear
          and all(reports[k].verdict == Verdict.C_order and reports[k].p_final == 1.0
                  for k in ("psi_corrections", "c_corrections")))
    corr = max(last.psi_corrections.values[-1], last.c_corrections.values[-1])
    record_criterion("6 error/correction dichotomy", ok,
                     f"{verdicts}; last correction at error stop {corr:.1e}")
    assert ok


# -- criterion 7: oracle and property suite ---------------------------------


def test_criterion_7a_constitutive_fd(loam):
    rng = np.random.default_rng(7)
    psi = -rng.uniform(0.05, 20.0, 1000)
    h = 1e-6 * np.maximum(1.0, np.abs(psi))
    worst = 0.0
    for f, df in ((loam.water_content, loam.d_water_content),
                  (loam.conductivity, loam.d_conductivity)):
        fd = (f(psi + h) - f(psi - h)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(df(psi) - fd) / np.abs(fd))))
    ok = worst < 1e-5
    record_criterion("7a constitutive derivatives vs FD", ok, f"max rel err {worst:.1e}")
    assert ok


def test_criterion_7b_newton_jacobian_fd(loam):
    rng = np.random.default_rng(8)
    mesh = fem2d.TriMesh(4, 4)
    psi = -rng.uniform(0.2, 3.0, mesh.n_nodes)
    prev = psi + rng.uniform(-0.1, 0.1, mesh.n_nodes)
    dt, h = 0.05, 1e-7
    jac = fem2d.assemble_jacobian(mesh, loam, psi, dt).toarray()
    fd = np.zeros_like(jac)
    for col, node in enumerate(mesh.free):
        up, dn = psi.copy(), psi.copy()
        up[node] += h
        dn[node] -= h
        fd[:, col] = (fem2d.assemble_residual(mesh, loam, up, prev, dt, 0.0)
                      - fem2d.assemble_residual(mesh, loam, dn, prev, dt, 0.0)) / (2 * h)
    mask = np.abs(fd) > 1e-8 * np.abs(fd).max()
    worst = float(np.max(np.abs(jac[mask] - fd[mask]) / np.abs(fd[mask])))
    ok = worst < 1e-4
    record_criterion("7b Newton Jacobian vs FD (4x4)", ok, f"max rel entry err {worst:.1e}")
    assert ok


def test_criterion_7c_hydrostatic(loam):
    mesh = fem2d.TriMesh(8, 8)
    psi2 = 0.3 - mesh.z
    res2 = np.max(np.abs(fem2d.assemble_residual(mesh, loam, psi2, psi2, 0.1, 0.0)))
    grid = fdm1d.Grid1D(1.0, 40)
    psi1 = 2.0 - grid.z
    out = fdm1d.explicit_l_step(grid, loam, psi1, psi1, fdm1d.ExplicitLConfig(L=0.5, dt=1e-4), 0.0)
    res1 = np.max(np.abs(out - psi1))
    ok = res2 < 1e-14 and res1 < 1e-14
    record_criterion("7c hydrostatic fixed points", ok, f"fem2d {res2:.1e}, fdm1d {res1:.1e}")
    assert ok


def test_criterion_7d_synthetic_sequences():
    q = 0.37
    geo = q ** np.arange(1, 25)
    err_geo = float(np.max(np.abs(quotient_sequence(geo, 1) - q)))
    dexp = np.array([2.0 ** -(2**k) for k in range(1, 7)])
    p_q = estimate_q_order(dexp)
    ok = err_geo < 1e-12 and np.array_equal(p_q, np.full(p_q.size, 2.0))
    ok &= classify(geo).verdict == Verdict.C_order and classify(dexp).p_final == 2.0
    record_criterion("7d synthetic estimators", ok,
                     f"geometric |Q_1 - q| {err_geo:.1e}; doubly-exponential p_Q {np.unique(p_q).tolist()}")
    assert ok


def test_criterion_7e_explicit_fixed_point_residual(loam):
    grid = fdm1d.Grid1D(1.0, 40)
    psi0 = fdm1d.column_initial(grid)
    f = fdm1d.column_source(grid)
    cfg = fdm1d.ExplicitLConfig(L=0.5, dt=3e-4, epsilon=1e-15, max_iters=200_000)
    psi, _ = fdm1d.solve_time_step_1d(grid, loam, psi0, cfg, f)
    res = float(np.max(np.abs(fdm1d.implicit_residual(grid, loam, psi, loam.water_content(psi0),
                                                      f, cfg.dt))))
    ok = res < 1e-12
    record_criterion("7e explicit fixed point solves the implicit scheme", ok, f"residual {res:.1e}")
    assert ok


def test_criterion_7f_anderson():
    rng = np.random.default_rng(9)
    n = 5
    qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = qm @ np.diag(rng.uniform(-0.95, 0.95, n)) @ qm.T
    b = rng.standard_normal(n)
    x_star = np.linalg.solve(np.eye(n) - a, b)
    g = lambda x: a @ x + b
    plain = acc = np.zeros(n)
    m0 = wrap(g, depth=0)
    bitwise = True
    for _ in range(20):
        plain, acc = g(plain), m0(acc)
        bitwise &= np.array_equal(plain, acc)
    mn = wrap(g, depth=n)
    x = np.zeros(n)
    for _ in range(n + 2):
        x = mn(x)
    err = float(np.linalg.norm(x - x_star))
    ok = bitwise and err < 1e-10
    record_criterion("7f AA depth 0 bitwise, linear problem exact", ok,
                     f"bitwise {bitwise}, linear error {err:.1e}")
    assert ok


def test_criterion_7g_stability_guard():
    soil = SoilModel(alpha=1.0, n=2.0, theta_r=0.1, theta_s=0.4, K_s=1.0)
    grid = fdm1d.Grid1D(1.0, 10)
    psi = np.zeros(11)                        # saturated, so K = K_s on every face
    dt_ok = fdm1d.stable_dt(grid, soil, (0.0, 0.0), 0.5)
    raised = False
    try:
        fdm1d.explicit_l_step(grid, soil, psi, psi, fdm1d.ExplicitLConfig(L=0.5, dt=1.001 * dt_ok), 0.0)
    except StabilityViolated:
        raised = True
    fdm1d.explicit_l_step(grid, soil, psi, psi, fdm1d.ExplicitLConfig(L=0.5, dt=dt_ok), 0.0)
    record_criterion("7g stability guard", raised, f"r slightly above 1/2 raised: {raised}")
    assert raised
