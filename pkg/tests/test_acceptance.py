"""Acceptance ladder: every verification criterion at its stated tolerance.

Each test prints one line with the measured margins next to the bounds it
must meet.  The criteria that need stationary turbulence share one
module-scoped pair of full-resolution runs (256x128, beta = 1 and 0)
driven end to end through the CLI; the pair takes roughly 25 minutes on
one core.  Everything else completes in seconds.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from bkhm import (
    ChannelGrid,
    DiagnosticSeries,
    PhysicsParams,
    RngState,
    build_forcing_basis,
    cascade_fit,
    forcing_spherical,
    khm_velocity_budget,
    khm_vorticity_budget,
    l2_norms,
    rest_state,
    step,
)
from bkhm.cli import main
from bkhm.dynamics import beta_term, nonlinear_term
from bkhm.fields import (PhysicalField, curl, inner_l2, streamfunction,
                         transform_forward, transform_inverse,
                         velocity_from_vorticity)
from bkhm.oracle import run_oracle_suite
from bkhm.statistics import SeparationGrid

from helpers import band_limited_state, grad_u_norm_sq, single_mode_state

# production resolution and physics shared by the turbulence criteria
N1, N2 = 256, 128
DELTA = np.pi / (N2 + 1)            # smallest grid spacing
L_I = 2.0 * np.pi / 12.0            # injection scale, band center kappa = 12
W_LO = 4.0 * DELTA                  # inertial-range fit window
W_HI = L_I / 2.0
W_HI_THETA = L_I / 4.0
KAPPA_LO_SHELL, KAPPA_HI_SHELL = 24.0, 64.0
MODE = "bilinear"                   # off-lattice interpolant for the analysis


def _acceptance_config(out_dir, beta: float) -> str:
    return f"""
[grid]
L = 6.283185307179586
a = 0.0
b = 3.141592653589793
N1 = {N1}
N2 = {N2}

[physics]
nu = 0.0002
alpha = 0.05
beta = {beta}
f0 = 0.0

[forcing]
kappa_lo = 10.0
kappa_hi = 14.0
eps_total = 1.0

[time]
dt = 0.002
max_steps = 200000
n_snapshots = 180
snapshot_stride = 0.6
spinup_window = 15.0

[analysis]
n_l = 56
n_dirs = 8
l_min = 0.0487069
l_max = 0.7853981633974483
fit_lo = {W_LO}
fit_hi = {W_HI}
n_blocks = 10
mode = {MODE}

[rng]
seed = 101

[output]
directory = {out_dir}
"""


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """Simulate and analyze the production configuration for both betas."""
    got = {}
    for beta in (1.0, 0.0):
        root = tmp_path_factory.mktemp(f"accept_beta{int(beta)}")
        cfg = root / "run.ini"
        out = root / "out"
        cfg.write_text(_acceptance_config(out, beta))
        for argv in (["simulate", "--config", str(cfg)],
                     ["balance", "--config", str(cfg)],
                     ["budget", "--config", str(cfg)],
                     ["structure", "--config", str(cfg),
                      "--kinds", "D_bar,frakD_bar,ctheta_bar,frakQ_bar"],
                     ["spectrum", "--config", str(cfg)]):
            assert main(argv) == 0, f"{argv[0]} failed for beta={beta}"
        got[beta] = out
    return got


def _table(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def _series_from_csv(path, kind) -> DiagnosticSeries:
    t = _table(path)
    return DiagnosticSeries(kind, t["l"], t["value"], t["stderr"], 0.0, 1)


def test_c1_oracle_equivalence():
    report = run_oracle_suite(n_instances=20, seed=0, tol=1e-10)
    worst = max(report.families.values())
    ok = report.passed
    print(f"criterion 1: {len(report.families)} estimator families vs brute force, "
          f"worst {worst:.3e} <= 1e-10 over {report.n_instances} instances "
          f"-> {'PASS' if ok else 'FAIL'}")
    assert ok


def test_c2_exact_numerics():
    grid = ChannelGrid(L=2.0 * np.pi, a=0.0, b=np.pi, N1=64, N2=31)
    rng = np.random.default_rng(2)

    vals = rng.standard_normal((grid.N1, grid.N2))
    back = transform_inverse(transform_forward(PhysicalField(grid, vals)))
    round_trip = float(np.abs(back.values - vals).max())

    w = band_limited_state(grid, seed=2, kmax=8, mmax=8).omega
    v = velocity_from_vorticity(w)
    scale = np.abs(w.coeffs).max()
    curl_back = float(np.abs(curl(v, grid).coeffs - w.coeffs).max() / scale)
    grad_identity = abs(grad_u_norm_sq(grid, v) / l2_norms(w).omega_sq - 1.0)

    params = PhysicsParams(nu=0.01, alpha=0.3)
    state0 = single_mode_state(grid, 3, 4, amp=1.7)
    state = state0
    for _ in range(10):
        state, _ = step(state, params, dt=0.05)
    exact = np.exp(-(0.01 * (3.0 ** 2 + 4.0 ** 2) + 0.3) * 0.5) * state0.omega.coeffs
    decay = float(np.abs(state.omega.coeffs - exact).max() / np.abs(exact).max())

    def scaled(fa, fb):
        return abs(inner_l2(fa, fb)) / np.sqrt(
            l2_norms(fa).omega_sq * l2_norms(fb).omega_sq)

    adv = nonlinear_term(w)
    advect_w = scaled(w, adv)
    advect_psi = scaled(streamfunction(w), adv)
    rot = beta_term(w, 0.8)
    beta_neutral = scaled(w, rot)

    checks = [("round-trip", round_trip, 1e-12),
              ("curl-back", curl_back, 1e-10),
              ("grad-norm identity", grad_identity, 1e-10),
              ("single-mode decay", decay, 1e-12),
              ("<w, advection>", advect_w, 1e-10),
              ("<psi, advection>", advect_psi, 1e-10),
              ("<w, beta term>", beta_neutral, 1e-10)]
    ok = all(v <= tol for _, v, tol in checks)
    worst = ", ".join(f"{n} {v:.1e}" for n, v, tol in checks)
    print(f"criterion 2: {worst} -> {'PASS' if ok else 'FAIL'}")
    for name, v, tol in checks:
        assert v <= tol, f"{name}: {v:.3e} > {tol:.0e}"


def test_c3_forcing_taylor_law():
    """Small-separation expansion of the exact forcing correlation."""
    grid = ChannelGrid(L=2.0 * np.pi, a=0.0, b=np.pi, N1=N1, N2=N2)
    basis = build_forcing_basis(grid, 10.0, 14.0, 1.0)
    sep = SeparationGrid(np.geomspace(2e-3, 0.2, 48), 8)
    a = forcing_spherical(basis, sep, windowed=False)["a_bar"]

    model = basis.eps_area - 0.25 * sep.lengths ** 2 * basis.eta_area
    remainder = np.abs(a.values - model)
    slope = np.polyfit(np.log(sep.lengths), np.log(remainder), 1)[0]

    r = sep.lengths[0]
    d2 = 2.0 * (a.values[0] - a.value_at_zero) / r ** 2
    d2_rel = abs(d2 / (-0.5 * basis.eta_area) - 1.0)

    ok = slope >= 3.0 and d2_rel <= 0.01
    print(f"criterion 3: remainder slope {slope:.3f} >= 3, "
          f"a''(0) rel err {d2_rel:.2e} <= 0.01 -> {'PASS' if ok else 'FAIL'}")
    assert slope >= 3.0
    assert d2_rel <= 0.01


def test_c4_stationary_balances(runs):
    margins = {}
    for beta, out in runs.items():
        t = _table(out / "balance.csv")
        margins[beta] = (abs(float(t["energy_rel_error"])),
                         abs(float(t["enstrophy_rel_error"])))
    ok = all(e <= 0.05 and z <= 0.05 for e, z in margins.values())
    detail = ", ".join(f"beta={b:g}: energy {e:.3f}, enstrophy {z:.3f}"
                       for b, (e, z) in margins.items())
    print(f"criterion 4: {detail} (each <= 0.05) -> {'PASS' if ok else 'FAIL'}")
    for beta, (e, z) in margins.items():
        assert e <= 0.05, f"energy balance off by {e:.3f} at beta={beta}"
        assert z <= 0.05, f"enstrophy balance off by {z:.3f} at beta={beta}"


def _exact_series(kind, ls, fn, at_zero):
    vals = np.array([fn(l) for l in ls])
    return DiagnosticSeries(kind, ls, vals, np.zeros_like(ls), at_zero, 1)


def test_c5_khm_closure(runs):
    worst = {}
    for name in ("velocity", "vorticity"):
        t = _table(runs[1.0] / f"{name}_budget.csv")
        window = (t["l"] >= W_LO) & (t["l"] <= W_HI)
        worst[name] = float(np.abs(t["residual_rel"][window]).max())

    # synthetic smooth inputs must close far below statistical error
    nu, alpha = 2e-4, 0.05
    ls = np.geomspace(0.02, 0.6, 64)
    corr = lambda l: 40.0 * np.exp(-(l / 0.35) ** 2)
    rot = lambda l: 5.0 * l ** 4 * np.exp(-(l / 0.35) ** 2)
    inj = lambda l: 90.0 * np.exp(-(l / 0.30) ** 2)
    cum = lambda fn: np.array([quad(lambda r: r * fn(r), 0.0, l,
                                    epsabs=1e-15, epsrel=1e-13, limit=400)[0]
                               for l in ls])
    d_corr = np.array([(corr(l + 1e-6) - corr(l - 1e-6)) / 2e-6 for l in ls])
    flux_vals = (-4.0 * nu * d_corr + (4.0 * alpha / ls) * cum(corr)
                 + (4.0 / ls) * cum(rot) - (4.0 / ls) * cum(inj))
    flux = DiagnosticSeries("flux", ls, flux_vals, np.zeros_like(ls), 0.0, 1)
    budget = khm_vorticity_budget(flux, _exact_series("c", ls, corr, 40.0),
                                  _exact_series("r", ls, rot, 0.0),
                                  _exact_series("a", ls, inj, 90.0), nu, alpha)
    synthetic = float(np.abs(budget.residual_rel).max())

    ok = all(v <= 0.10 for v in worst.values()) and synthetic <= 1e-6
    print(f"criterion 5: velocity {worst['velocity']:.3f}, vorticity "
          f"{worst['vorticity']:.3f} on [{W_LO:.4f}, {W_HI:.4f}] (<= 0.10); "
          f"synthetic closure {synthetic:.2e} <= 1e-6 -> {'PASS' if ok else 'FAIL'}")
    assert worst["velocity"] <= 0.10
    assert worst["vorticity"] <= 0.10
    assert synthetic <= 1e-6


def test_c6_direct_cascade_laws(runs):
    grid = ChannelGrid(L=2.0 * np.pi, a=0.0, b=np.pi, N1=N1, N2=N2)
    eta_area = build_forcing_basis(grid, 10.0, 14.0, 1.0).eta_area

    fd = _series_from_csv(runs[1.0] / "frakD_bar.csv", "frakD_bar")
    fit_fd = cascade_fit(fd, W_LO, W_HI, 1.0)
    ratio = fit_fd.prefactor / (-2.0 * eta_area)

    d = _series_from_csv(runs[1.0] / "D_bar.csv", "D_bar")
    fit_d = cascade_fit(d, W_LO, W_HI, 3.0)

    ok = (0.7 <= fit_fd.exponent <= 1.3 and 0.6 <= ratio <= 1.4
          and 2.5 <= fit_d.exponent <= 3.5)
    print(f"criterion 6: enstrophy-flux exponent {fit_fd.exponent:.3f} in [0.7, 1.3], "
          f"prefactor ratio {ratio:.3f} in [0.6, 1.4]; energy-flux exponent "
          f"{fit_d.exponent:.3f} in [2.5, 3.5] -> {'PASS' if ok else 'FAIL'}")
    assert 0.7 <= fit_fd.exponent <= 1.3
    assert 0.6 <= ratio <= 1.4
    assert 2.5 <= fit_d.exponent <= 3.5


def test_c7_coriolis_small_scales(runs):
    theta = _series_from_csv(runs[1.0] / "ctheta_bar.csv", "ctheta_bar")
    fit = cascade_fit(theta, W_LO, W_HI_THETA, 3.0)

    flat = max(float(np.abs(_table(runs[0.0] / f"{k}.csv")["value"]).max())
               for k in ("ctheta_bar", "frakQ_bar"))

    def advance(f0):
        grid = ChannelGrid(L=2.0 * np.pi, a=0.0, b=np.pi, N1=48, N2=23)
        basis = build_forcing_basis(grid, 4.0, 6.0, 1.0)
        params = PhysicsParams(nu=1e-3, alpha=0.05, beta=0.7, f0=f0)
        state, rng = rest_state(grid), RngState(5)
        for _ in range(200):
            state, rng = step(state, params, 0.004, basis=basis, rng=rng)
        return state

    a, b = advance(0.0), advance(10.0)
    identical = bool(np.array_equal(a.omega.coeffs, b.omega.coeffs)) and a.t == b.t

    ok = fit.exponent >= 2.5 and flat <= 1e-14 and identical
    print(f"criterion 7: rotation-term slope {fit.exponent:.3f} >= 2.5 on "
          f"[{W_LO:.4f}, {W_HI_THETA:.4f}]; beta=0 rotation series max {flat:.1e} "
          f"<= 1e-14; f0 0 vs 10 bit-identical {identical} -> {'PASS' if ok else 'FAIL'}")
    assert fit.exponent >= 2.5
    assert flat <= 1e-14
    assert identical


def test_c8_compensated_spectrum_plateau(runs):
    t = _table(runs[1.0] / "spectrum.csv")
    shell = (t["kappa"] >= KAPPA_LO_SHELL) & (t["kappa"] <= KAPPA_HI_SHELL)
    comp = t["kappa"][shell] ** 3 * t["E"][shell]
    ratio = float(comp.max() / comp.min())
    ok = ratio < 3.0
    print(f"criterion 8: compensated spectrum varies by {ratio:.2f} < 3 on "
          f"shells [{KAPPA_LO_SHELL:g}, {KAPPA_HI_SHELL:g}] -> {'PASS' if ok else 'FAIL'}")
    assert ratio < 3.0


def test_c9_byte_identical_reruns(tmp_path):
    cfg = tmp_path / "small.ini"
    # fast configuration: the guarantee is structural, not resolution-bound
    cfg.write_text(f"""
[grid]
L = 6.283185307179586
a = 0.0
b = 3.141592653589793
N1 = 32
N2 = 15

[physics]
nu = 0.002
alpha = 0.08
beta = 0.6
f0 = 0.0

[forcing]
kappa_lo = 4.0
kappa_hi = 6.0
eps_total = 1.0

[time]
dt = 0.004
max_steps = 10000
n_snapshots = 3
snapshot_stride = 0.2
spinup_window = 1.0

[analysis]
n_l = 10
n_dirs = 8
l_min = 0.42
l_max = 0.785
fit_lo = 0.45
fit_hi = 0.7
n_blocks = 3

[rng]
seed = 11

[output]
directory = {tmp_path / 'unused'}
""")
    outs = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["budget", "--config", str(cfg), "--snapshots", str(out),
                     "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
               for n in names)
    print(f"criterion 9: {len(names)} output files byte-identical across reruns: "
          f"{same} -> {'PASS' if same else 'FAIL'}")
    assert same
