"""Acceptance suite: twelve end-to-end criteria at their stated tolerances.

The periodic Riccati tables for M0 = 4 and 9 are solved once per module
(about a minute each on the 81-node coarse mesh).
"""
import math
import time

import numpy as np
import pytest

from parastab.cli import main
from parastab.coefficients import autonomous_const, paper2d, pure_diffusion
from parastab.errors import NotStabilizingGuess
from parastab.fem import assemble_operators
from parastab.feedback import FeedbackLaw
from parastab.mateq import AreProblem, homotopy_are, newton_kleinman, solve_lyapunov, sym_norm
from parastab.mesh import build_unit_square_mesh, refine
from parastab.riccati import diffusion_generator, dre_backward, periodic_riccati, system_function
from parastab.simulate import fit_decay_rate, imex_step, run_simulation, uncontrollable_mode_check
from parastab.spaces import build_actuator_basis, state_weight

VARPI = math.pi / 6
TAU = 0.1
criterion = pytest.mark.criterion


@pytest.fixture(scope="module")
def base_mesh():
    return build_unit_square_mesh(8)


@pytest.fixture(scope="module")
def periodic(base_mesh):
    """Converged periodic Riccati results keyed by M0, paper2d data, eps = sqrt(N eps)."""
    ops = assemble_operators(base_mesh, 0.1)
    Xf = system_function(ops, base_mesh, paper2d(), 1.0)
    A = diffusion_generator(ops)
    out = {}
    for m in (2, 3):
        basis = build_actuator_basis(base_mesh, ops.mass, m, 0.5, 1.0)
        t0 = time.perf_counter()
        res = periodic_riccati(Xf, basis.B, state_weight(ops.mass), TAU, VARPI, 0.005,
                               n_max=200, delta_s=0.2, A_diffusion=A, beta=1.0)
        print(f"\nM0={m * m}: {res.sweeps} sweeps in {time.perf_counter() - t0:.1f} s, "
              f"halvings {sum(res.halvings)}")
        out[m * m] = res
    return out


def _run(mesh, law, T=3.0, k=0.01, coeffs=None):
    return run_simulation(coeffs or paper2d(), mesh, law, T, k)


@criterion(1, "FEM identities on n=8, rho in {0, 1}")
def test_c01_fem_identities(base_mesh):
    t0 = time.perf_counter()
    for rho in (0, 1):
        mesh = refine(base_mesh, rho)
        ops = assemble_operators(mesh, 0.1)
        one = np.ones(mesh.n_nodes)
        assert abs(ops.mass.sum() - 1.0) <= 1e-12
        assert np.linalg.norm(ops.stiffness @ one) <= 1e-12
        for G in ops.g_x:
            assert np.linalg.norm(G @ one) <= 1e-12
    assert time.perf_counter() - t0 < 1.0


@criterion(2, "Lyapunov and ARE oracles")
def test_c02_matrix_equation_oracles():
    t0 = time.perf_counter()
    g = np.random.default_rng(7)
    lam = g.uniform(0.1, 10, 8)
    R = g.standard_normal((8, 8))
    Q = R @ R.T
    X = solve_lyapunov(np.diag(-lam), Q)
    assert np.abs(X - Q / (lam[:, None] + lam[None, :])).max() <= 1e-10
    one = np.ones((1, 1))
    p = newton_kleinman(AreProblem(-one, one, one, 0 * one), tol=1e-14).Pi[0, 0]
    assert abs(p - (math.sqrt(2) - 1)) <= 1e-10
    p = newton_kleinman(AreProblem(one, one, one, 3 * one), tol=1e-14).Pi[0, 0]
    assert abs(p - (1 + math.sqrt(2))) <= 1e-10
    with pytest.raises(NotStabilizingGuess):
        newton_kleinman(AreProblem(one, one, one, 0 * one))
    assert time.perf_counter() - t0 < 1.0


@criterion(3, "DRE stationarity for autonomous data, k_ric = 0.005")
def test_c03_dre_stationarity(base_mesh):
    t0 = time.perf_counter()
    ops = assemble_operators(base_mesh, 0.1)
    X = system_function(ops, base_mesh, autonomous_const(-1.0), 1.0)(0.0)
    basis = build_actuator_basis(base_mesh, ops.mass, 2)
    C = state_weight(ops.mass)
    P = homotopy_are(X, basis.B, C, 0.2, diffusion_generator(ops)).Pi
    sw = dre_backward(lambda t: X, basis.B, C, P, TAU, VARPI, 0.005)
    assert sw.times.size == 105
    err = max(sym_norm(Q - P) for Q in sw.Pi_list) / sym_norm(P)
    assert err <= 1e-6
    assert time.perf_counter() - t0 < 30.0


@criterion(4, "periodic iteration converges geometrically (M0 = 4)")
def test_c04_periodic_convergence(periodic):
    h = np.asarray(periodic[4].history)
    print("\nerror history:", " ".join(f"{e:.3e}" for e in h))
    assert h[-1] <= math.sqrt(81 * np.finfo(float).eps)
    assert np.all(np.isfinite(h))
    burn = next(i for i in range(len(h)) if np.all(np.diff(h[i:]) < 0))
    assert burn <= 5
    ratios = h[-5:] / h[-6:-1]
    print("tail ratios:", ratios, "log:", np.log(ratios))
    assert np.all((ratios >= math.exp(-0.8)) & (ratios <= math.exp(-0.1)))


@criterion(5, "free dynamics grow: |y(2)| > 2 |y(0)|")
def test_c05_free_dynamics(base_mesh):
    tr = _run(base_mesh, FeedbackLaw.none(), T=2.0)
    assert tr.norms[-1] > 2 * tr.norms[0]


@criterion(6, "oblique and Riccati stabilize for M0 = 4, 9 on levels 0 and 1")
@pytest.mark.parametrize("M0", [4, 9])
def test_c06_stabilization(base_mesh, periodic, M0):
    m = int(math.isqrt(M0))
    table = periodic[M0].table
    for level in (0, 1):
        mesh = refine(base_mesh, level)
        mu_o = fit_decay_rate(_run(mesh, FeedbackLaw.oblique(m, 1.0))).mu
        mu_r = fit_decay_rate(_run(mesh, FeedbackLaw.riccati(table))).mu
        print(f"\nM0={M0} level {level}: mu_oblique={mu_o:.4f} mu_riccati={mu_r:.4f}")
        assert mu_o > 0.2 and mu_r > 0.2
        if level == 0:
            assert mu_r > 0.5


@criterion(7, "cost ordering J_ricc <= J_obli (T = 3, level 0)")
@pytest.mark.parametrize("M0", [4, 9])
def test_c07_cost_ordering(base_mesh, periodic, M0):
    m = int(math.isqrt(M0))
    J_o = _run(base_mesh, FeedbackLaw.oblique(m, 1.0)).cost[-1]
    J_r = _run(base_mesh, FeedbackLaw.riccati(periodic[M0].table)).cost[-1]
    print(f"\nM0={M0}: J_ricc={J_r:.4f} J_obli={J_o:.4f}")
    assert J_r <= J_o


@criterion(8, "single oblique actuator does not stabilize (M0 = 1)")
def test_c08_single_actuator(base_mesh):
    mu = fit_decay_rate(_run(base_mesh, FeedbackLaw.oblique(1, 1.0))).mu
    print(f"\nM0=1 oblique mu={mu:.4f}")
    assert mu <= 0


@criterion(9, "uncontrollable mode grows at -2 pi^2 nu - 1 - c (rho = 2)")
@pytest.mark.parametrize("law", ["none", "oblique"])
def test_c09_uncontrollable_mode(base_mesh, law):
    expected = -2 * math.pi ** 2 * 0.1 - 1 + 5.0
    rate = uncontrollable_mode_check(-5.0, 0.5, refine(base_mesh, 2), 3.0, 0.01, law=law)
    print(f"\n{law}: rate={rate:.4f} expected={expected:.4f}")
    assert abs(rate - expected) <= 0.1 * expected


@criterion(10, "IMEX per-step factor and second-order convergence")
def test_c10_imex_order(base_mesh):
    ops = assemble_operators(base_mesh, 0.1)
    N = base_mesh.n_nodes
    Z = 0 * ops.mass
    zf = np.zeros(N)
    for k in (0.1, 0.01, 0.001):
        y = imex_step(ops.mass, ops.s_nu, Z, Z, Z, Z, zf, zf, np.ones(N), np.ones(N), k)
        assert np.abs(y - (2 - k) / (2 + k)).max() <= 1e-12
    errs = []
    for k in (0.02, 0.01, 0.005):
        tr = run_simulation(pure_diffusion("constant"), base_mesh, FeedbackLaw.none(), 1.0, k)
        errs.append(np.abs(tr.norms - np.exp(-tr.times)).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    print("\nerror ratios:", ratios)
    assert np.all((ratios >= 3.5) & (ratios <= 4.5))


@criterion(11, "level-0 Riccati table stabilizes a level-2 simulation")
def test_c11_coarse_to_fine(base_mesh, periodic):
    tr = _run(refine(base_mesh, 2), FeedbackLaw.riccati(periodic[4].table))
    mu = fit_decay_rate(tr).mu
    print(f"\nlevel 2 with level-0 table: mu={mu:.4f}")
    assert mu > 0


@criterion(12, "repeated compare runs give byte-identical CSVs")
def test_c12_determinism(tmp_path):
    ini = tmp_path / "exp.ini"
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        ini.write_text(f"[actuators]\nm = 2\n[feedback]\nk_ric = 0.01\nepsilon = 1e-4\n"
                       f"[output]\ndir = {out}\n")
        assert main(["compare", "--config", str(ini)]) == 0
        outs.append(out)
    for f in ("trace_oblique.csv", "trace_riccati.csv", "error_history.csv", "comparison.json",
              "gain_table.psgt"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
