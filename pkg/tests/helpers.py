"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from bkhm.dynamics import FlowState
from bkhm.fields import ChannelGrid, SpectralField, VelocityPair


def band_limited_state(grid: ChannelGrid, seed: int = 0, kmax: int = 5,
                       mmax: int = 5, amp: float = 1.0) -> FlowState:
    """Random real vorticity field confined to |k| <= kmax, m <= mmax."""
    rng = np.random.default_rng(seed)
    kmax = min(kmax, grid.N1 // 2 - 1)
    mmax = min(mmax, grid.N2)
    c = np.zeros((grid.N1, grid.N2), dtype=complex)
    for k in range(0, kmax + 1):
        row = rng.standard_normal(mmax) + 1j * rng.standard_normal(mmax)
        if k == 0:
            row = row.real.astype(complex)
        c[k, :mmax] = row
        if k:
            c[-k, :mmax] = np.conj(row)
    return FlowState(SpectralField(grid, amp * c), t=0.0, step_index=0)


def single_mode_state(grid: ChannelGrid, k: int, m: int, amp: float = 1.0) -> FlowState:
    """omega = amp cos(2 pi k x1 / L) sin(m pi (x2 - a) / h)."""
    c = np.zeros((grid.N1, grid.N2), dtype=complex)
    if k == 0:
        c[0, m - 1] = amp
    else:
        c[k, m - 1] = amp / 2.0
        c[-k, m - 1] = amp / 2.0
    return FlowState(SpectralField(grid, c), t=0.0, step_index=0)


def grad_u_norm_sq(grid: ChannelGrid, v: VelocityPair) -> float:
    """||grad u||^2 summed from the velocity coefficients directly.

    Each of the four derivative series stays in a cos or sin basis, so the
    Parseval weight L h / 2 applies mode by mode.  Independent of l2_norms,
    which never touches the velocity coefficients.
    """
    weight = grid.L * grid.height / 2.0
    k2 = grid.k1[:, None] ** 2
    mu2 = grid.mu[None, :] ** 2
    mag = np.abs(v.u1_cos) ** 2 + np.abs(v.u2_sin) ** 2
    return float(np.sum(weight * (k2 + mu2) * mag))


def config_text(out_dir, *, N1=32, N2=15, nu=0.002, alpha=0.08, beta=0.6, f0=0.0,
                kappa_lo=4.0, kappa_hi=6.0, eps_total=1.0, dt=0.004,
                max_steps=40000, n_snapshots=3, snapshot_stride=0.5,
                spinup_window=6.0, n_l=10, n_dirs=8, l_min=0.42, l_max=0.785,
                fit_lo=0.45, fit_hi=0.7, n_blocks=3, seed=11) -> str:
    """INI text for a fast 32x15 run (a couple of seconds of stepping)."""
    return f"""
[grid]
L = 6.283185307179586
a = 0.0
b = 3.141592653589793
N1 = {N1}
N2 = {N2}

[physics]
nu = {nu}
alpha = {alpha}
beta = {beta}
f0 = {f0}

[forcing]
kappa_lo = {kappa_lo}
kappa_hi = {kappa_hi}
eps_total = {eps_total}

[time]
dt = {dt}
max_steps = {max_steps}
n_snapshots = {n_snapshots}
snapshot_stride = {snapshot_stride}
spinup_window = {spinup_window}

[analysis]
n_l = {n_l}
n_dirs = {n_dirs}
l_min = {l_min}
l_max = {l_max}
fit_lo = {fit_lo}
fit_hi = {fit_hi}
n_blocks = {n_blocks}

[rng]
seed = {seed}

[output]
directory = {out_dir}
"""
