"""Brute-force reference implementations of every lattice estimator.

Everything here is written the slow, obvious way: explicit loops over
collocation cells, pointwise bilinear lookups into the zero-extended
fields, no FFTs, no shared code with the fast paths.  The fast estimators
must reproduce these numbers to near machine precision; run_oracle_suite
checks that on a batch of small randomized instances and is wired to the
command line so the check is one command away on any install.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import FlowState
from .fields import ChannelGrid, SpectralField, transform_inverse, velocity_from_vorticity
from .forcing import ForcingBasis
from .statistics import (CORRELATION_KINDS, STRUCTURE_KINDS, SeparationGrid,
                         structure_function_spherical, two_point_spherical)


def _zero_ext(vals: np.ndarray, grid: ChannelGrid, i1: int, i2: int) -> float:
    """Integer-node lookup: periodic in x1, zero outside the strip in x2."""
    if 1 <= i2 <= grid.N2:
        return float(vals[i1 % grid.N1, i2 - 1])
    return 0.0


def _bilinear_point(vals: np.ndarray, grid: ChannelGrid, p1: float, p2: float) -> float:
    """Bilinear lookup at fractional node coordinates (x = a + p * dx)."""
    i1 = math.floor(p1)
    i2 = math.floor(p2)
    f1 = p1 - i1
    f2 = p2 - i2
    return ((1 - f1) * (1 - f2) * _zero_ext(vals, grid, i1, i2)
            + f1 * (1 - f2) * _zero_ext(vals, grid, i1 + 1, i2)
            + (1 - f1) * f2 * _zero_ext(vals, grid, i1, i2 + 1)
            + f1 * f2 * _zero_ext(vals, grid, i1 + 1, i2 + 1))


def brute_correlation(a_vals: np.ndarray, b_vals: np.ndarray, grid: ChannelGrid,
                      y1: float, y2: float) -> float:
    """Cell-sum cross-correlation (1/|Omega|) int a(x) b(x+y) dx, zero extended."""
    s1 = y1 / grid.dx1
    s2 = y2 / grid.dx2
    total = 0.0
    for j1 in range(grid.N1):
        for j2 in range(1, grid.N2 + 1):
            total += a_vals[j1, j2 - 1] * _bilinear_point(b_vals, grid, j1 + s1, j2 + s2)
    return total * grid.dx1 * grid.dx2 / grid.area


def brute_structure3(u1: np.ndarray, u2: np.ndarray, w: np.ndarray, grid: ChannelGrid,
                     y1: float, y2: float, margin: float = 0.0) -> dict[str, float]:
    """Every third-order structure-function kind at a single separation."""
    s1 = y1 / grid.dx1
    s2 = y2 / grid.dx2
    ell = math.hypot(y1, y2)
    n1 = y1 / ell
    n2 = y2 / ell
    sums = {k: 0.0 for k in STRUCTURE_KINDS}
    n_rows = 0
    for j2 in range(1, grid.N2 + 1):
        x2 = grid.a + j2 * grid.dx2
        if not (grid.a + margin - 1e-12 <= x2 <= grid.b - margin + 1e-12):
            continue
        n_rows += 1
        for j1 in range(grid.N1):
            du1 = _bilinear_point(u1, grid, j1 + s1, j2 + s2) - u1[j1, j2 - 1]
            du2 = _bilinear_point(u2, grid, j1 + s1, j2 + s2) - u2[j1, j2 - 1]
            dw = _bilinear_point(w, grid, j1 + s1, j2 + s2) - w[j1, j2 - 1]
            dun = n1 * du1 + n2 * du2
            sums["D_bar"] += (du1 * du1 + du2 * du2) * dun
            sums["frakD_bar"] += dw * dw * dun
            sums["S3_longitudinal"] += dun ** 3
            sums["S3_mixed_longitudinal"] += dw * dw * dun
    denom = grid.area if margin == 0.0 else grid.L * n_rows * grid.dx2
    cell = grid.dx1 * grid.dx2
    return {k: v * cell / denom for k, v in sums.items()}


def brute_two_point(state_omega: SpectralField, sep: SeparationGrid,
                    beta: float) -> dict[str, np.ndarray]:
    """Spherically averaged correlation kinds, assembled cell by cell."""
    grid = state_omega.grid
    v = velocity_from_vorticity(state_omega)
    u1 = v.u1.values
    u2 = v.u2.values
    w = transform_inverse(state_omega, check=False).values
    dirs = sep.unit_vectors
    out = {k: np.zeros(sep.lengths.size) for k in CORRELATION_KINDS}
    for i, ell in enumerate(sep.lengths):
        gam = cvv = q = theta = 0.0
        for (d1, d2) in dirs:
            y1, y2 = ell * d1, ell * d2
            gam += brute_correlation(u1, u1, grid, y1, y2) \
                + brute_correlation(u2, u2, grid, y1, y2)
            cvv += brute_correlation(w, w, grid, y1, y2)
            q += 0.5 * beta * (brute_correlation(u2, w, grid, y1, y2)
                               + brute_correlation(w, u2, grid, y1, y2))
            k_anti = brute_correlation(u2, u1, grid, y1, y2) \
                - brute_correlation(u1, u2, grid, y1, y2)
            theta += 0.5 * beta * ell * d2 * k_anti
        out["gamma_bar"][i] = gam / len(dirs)
        out["frakC_bar"][i] = cvv / len(dirs)
        out["frakQ_bar"][i] = q / len(dirs)
        out["ctheta_bar"][i] = theta / len(dirs)
    return out


def theta_spherical_general(state_omega: SpectralField, sep: SeparationGrid,
                            beta: float, f0: float) -> np.ndarray:
    """The rotation correlation built from the full Coriolis profile f0 + beta x2.

    Only the difference f(x2 + y2) - f(x2) enters, so the result cannot
    depend on f0 beyond roundoff; this is the estimator-level counterpart
    of the trajectory-level f0 independence.
    """
    grid = state_omega.grid
    v = velocity_from_vorticity(state_omega)
    u1 = v.u1.values
    u2 = v.u2.values
    dirs = sep.unit_vectors
    cell = grid.dx1 * grid.dx2
    out = np.zeros(sep.lengths.size)
    for i, ell in enumerate(sep.lengths):
        acc = 0.0
        for (d1, d2) in dirs:
            y1, y2 = ell * d1, ell * d2
            s1, s2 = y1 / grid.dx1, y2 / grid.dx2
            total = 0.0
            for j1 in range(grid.N1):
                for j2 in range(1, grid.N2 + 1):
                    x2 = grid.a + j2 * grid.dx2
                    df = (f0 + beta * (x2 + y2)) - (f0 + beta * x2)
                    k_anti = (u2[j1, j2 - 1] * _bilinear_point(u1, grid, j1 + s1, j2 + s2)
                              - u1[j1, j2 - 1] * _bilinear_point(u2, grid, j1 + s1, j2 + s2))
                    total += 0.5 * df * k_anti
            acc += total * cell / grid.area
        out[i] = acc / len(dirs)
    return out


def brute_forcing_correlations(basis: ForcingBasis, y1: float, y2: float,
                               n_x1: int = 128, n_x2: int = 4096) -> tuple[float, float]:
    """Continuum forcing correlations by dense quadrature over the strip.

    Each forcing mode contributes its real flavor fields; the x2 integral
    runs over the exact overlap [max(a, a - y2), min(b, b - y2)] so the
    truncation edge never falls between quadrature nodes.  The flavor-sum
    covariance carries the usual one-half of the quadratic variation, which
    makes a(0) the energy injection rate per unit area.
    """
    grid = basis.grid
    L, a, b, h = grid.L, grid.a, grid.b, grid.height
    lo = max(a, a - y2)
    hi = min(b, b - y2)
    if hi <= lo:
        return 0.0, 0.0
    x1 = np.linspace(0.0, L, n_x1, endpoint=False)
    x2 = np.linspace(lo, hi, n_x2)
    wt2 = np.full(n_x2, (hi - lo) / (n_x2 - 1))
    wt2[0] *= 0.5
    wt2[-1] *= 0.5
    g = math.sqrt(2.0 / (L * h))
    a_total = 0.0
    fraka_total = 0.0
    for mode in basis.modes:
        k = mode.k
        mu = math.pi * mode.m / h
        kap = math.sqrt(mode.kappa2)
        c = mode.b / kap * g
        if k == 0:
            flavors = [(
                lambda x, t, c=c, mu=mu: -c * mu * np.cos(mu * (t - a)) + 0.0 * x,
                lambda x, t: np.zeros_like(x + t),
                lambda x, t, bb=mode.b, kap=kap, mu=mu: -bb * kap * g * np.sin(mu * (t - a)) + 0.0 * x,
            )]
        else:
            kk = 2.0 * math.pi * k / L
            flavors = [
                (lambda x, t, c=c, mu=mu, kk=kk: -c * mu * np.cos(kk * x) * np.cos(mu * (t - a)),
                 lambda x, t, c=c, mu=mu, kk=kk: -c * kk * np.sin(kk * x) * np.sin(mu * (t - a)),
                 lambda x, t, bb=mode.b, kap=kap, mu=mu, kk=kk:
                     -bb * kap * g * np.cos(kk * x) * np.sin(mu * (t - a))),
                (lambda x, t, c=c, mu=mu, kk=kk: c * mu * np.sin(kk * x) * np.cos(mu * (t - a)),
                 lambda x, t, c=c, mu=mu, kk=kk: -c * kk * np.cos(kk * x) * np.sin(mu * (t - a)),
                 lambda x, t, bb=mode.b, kap=kap, mu=mu, kk=kk:
                     bb * kap * g * np.sin(kk * x) * np.sin(mu * (t - a))),
            ]
        xx = x1[:, None]
        tt = x2[None, :]
        for (f_u1, f_u2, f_w) in flavors:
            a_int = (f_u1(xx, tt) * f_u1(xx + y1, tt + y2)
                     + f_u2(xx, tt) * f_u2(xx + y1, tt + y2))
            w_int = f_w(xx, tt) * f_w(xx + y1, tt + y2)
            a_total += float(np.sum(a_int * wt2[None, :])) * (L / n_x1)
            fraka_total += float(np.sum(w_int * wt2[None, :])) * (L / n_x1)
    return 0.5 * a_total / grid.area, 0.5 * fraka_total / grid.area


@dataclass(frozen=True)
class OracleReport:
    families: dict[str, float]
    tol: float
    n_instances: int

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.families.values())


def _random_instance(rng: np.random.Generator):
    L = 2.0 * math.pi * (0.8 + 0.4 * rng.random())
    a = -0.4 * rng.random()
    h = math.pi * (0.8 + 0.4 * rng.random())
    grid = ChannelGrid(L=L, a=a, b=a + h, N1=16, N2=8)
    c = rng.standard_normal((grid.N1, grid.N2)) + 1j * rng.standard_normal((grid.N1, grid.N2))
    c = np.fft.fft(np.fft.ifft(c, axis=0).real * grid.N1, axis=0) / grid.N1
    c *= grid.dealias_keep
    return SpectralField(grid, c)


def run_oracle_suite(n_instances: int = 20, seed: int = 0, tol: float = 1e-10) -> OracleReport:
    """Fast estimators vs brute force on randomized small instances."""
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in CORRELATION_KINDS + STRUCTURE_KINDS + ("theta_general_f",)}
    for _ in range(n_instances):
        omega = _random_instance(rng)
        grid = omega.grid
        beta = 0.5 + 1.5 * rng.random()
        margin = float(rng.choice([0.0, 0.15 * grid.height]))
        lengths = np.geomspace(2.0 * min(grid.dx1, grid.dx2), grid.height / 4.0, 5)
        sep = SeparationGrid(lengths, n_dirs=8)
        state = FlowState(omega, t=0.0, step_index=0)

        fast_corr = two_point_spherical([state], sep, beta=beta, n_blocks=1)
        slow_corr = brute_two_point(omega, sep, beta)
        for kind in CORRELATION_KINDS:
            err = float(np.max(np.abs(fast_corr[kind].values - slow_corr[kind])))
            worst[kind] = max(worst[kind], err)

        fast_struct = structure_function_spherical([state], sep, n_blocks=1, margin=margin)
        slow = {k: np.zeros(lengths.size) for k in STRUCTURE_KINDS}
        v = velocity_from_vorticity(omega)
        w = transform_inverse(omega, check=False).values
        for i, ell in enumerate(lengths):
            for (d1, d2) in sep.unit_vectors:
                vals = brute_structure3(v.u1.values, v.u2.values, w, grid,
                                        ell * d1, ell * d2, margin)
                for kind in STRUCTURE_KINDS:
                    slow[kind][i] += vals[kind] / sep.n_dirs
        for kind in STRUCTURE_KINDS:
            err = float(np.max(np.abs(fast_struct[kind].values - slow[kind])))
            worst[kind] = max(worst[kind], err)

        f0 = float(rng.choice([0.0, 17.0]))
        theta_ref = theta_spherical_general(omega, sep, beta, f0)
        err = float(np.max(np.abs(fast_corr["ctheta_bar"].values - theta_ref)))
        worst["theta_general_f"] = max(worst["theta_general_f"], err)
    return OracleReport(families=worst, tol=tol, n_instances=n_instances)
