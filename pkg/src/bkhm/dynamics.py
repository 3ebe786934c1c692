"""Time integration of the stochastically forced vorticity equation

    d omega + (u . grad omega + beta u^2) dt = (nu Lap omega - alpha omega) dt
                                               + d(curl zeta)

on the channel, with u recovered from omega through the streamfunction.
The Coriolis parameter f = f0 + beta x2 enters only through beta: the f0
part is a perfect gradient absorbed by the pressure, so trajectories are
bitwise independent of f0 (it is carried for provenance only).

Scheme: Heun (explicit, second order) for the advection + beta tendency,
exact per-mode integrating factor exp(-(nu kappa^2 + alpha) dt) for the
linear part, Euler-Maruyama additive noise applied with the half-step
damping factor.  Products are evaluated pseudo-spectrally on the interior
collocation nodes with 2/3-rule dealiasing in both directions; the parity
of the odd (sine) extension makes this identical to evaluation on the
extended periodic lattice, so the truncated advection conserves energy and
enstrophy exactly and the walls generate no spurious coupling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fields import (ChannelGrid, PhysicalField, SpectralField, cosine_samples,
                     dx1_coeffs, streamfunction, transform_forward,
                     transform_inverse)
from .forcing import ForcingBasis, RngState, sample_vorticity_increment


class CFLViolationError(RuntimeError):
    def __init__(self, msg: str, max_speed: float, cfl: float):
        super().__init__(msg)
        self.max_speed = max_speed
        self.cfl = cfl


class NumericalBlowupError(RuntimeError):
    """Non-finite coefficients after a step."""


class NonConvergenceError(RuntimeError):
    """Stationarity not reached within max_steps."""


@dataclass(frozen=True)
class PhysicsParams:
    nu: float
    alpha: float
    beta: float = 0.0
    f0: float = 0.0

    def __post_init__(self):
        # nu = 0 is allowed so the conservative advection limit is testable
        if self.nu < 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class FlowState:
    omega: SpectralField
    t: float
    step_index: int
    # physical samples as read from a snapshot file, kept so that rewriting
    # the state reproduces the payload bitwise; never used by the dynamics
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)


def rest_state(grid: ChannelGrid) -> FlowState:
    return FlowState(SpectralField(grid, np.zeros((grid.N1, grid.N2), np.complex128)),
                     t=0.0, step_index=0)


def _tendency(grid: ChannelGrid, w: np.ndarray, beta: float):
    """Dealiased advection + beta tendency of masked coefficients w.

    Returns (G, max_speed); max_speed is the pointwise max |u| used for the
    CFL check (free here since the velocity samples are needed anyway).
    """
    psi = -w / grid.kappa2
    psi[grid._nyquist_row, :] = 0.0
    u1_cos = -psi * grid.mu[None, :]
    u2_sin = dx1_coeffs(grid, psi)
    u1 = cosine_samples(grid, u1_cos)
    u2 = transform_inverse(SpectralField(grid, u2_sin), check=False).values
    w_x1 = transform_inverse(SpectralField(grid, dx1_coeffs(grid, w)), check=False).values
    w_x2 = cosine_samples(grid, w * grid.mu[None, :])
    adv = u1 * w_x1 + u2 * w_x2
    g = -transform_forward(PhysicalField(grid, adv)).coeffs
    g *= grid.dealias_keep
    g -= beta * u2_sin
    max_speed = float(np.sqrt(np.max(u1 * u1 + u2 * u2)))
    return g, max_speed


def nonlinear_term(w: SpectralField) -> SpectralField:
    """-(u . grad) omega, pseudo-spectral with 2/3 dealiasing (input masked too)."""
    grid = w.grid
    g, _ = _tendency(grid, w.coeffs * grid.dealias_keep, beta=0.0)
    return SpectralField(grid, g)


def beta_term(w: SpectralField, beta: float) -> SpectralField:
    """-beta u^2 for the vorticity tendency (a sine-basis field)."""
    grid = w.grid
    psi = streamfunction(SpectralField(grid, w.coeffs * grid.dealias_keep))
    return SpectralField(grid, -beta * dx1_coeffs(grid, psi.coeffs))


@lru_cache(maxsize=8)
def _decay_factors(grid: ChannelGrid, nu: float, alpha: float, dt: float):
    lam = nu * grid.kappa2 + alpha
    return np.exp(-lam * dt), np.exp(-0.5 * lam * dt)


def step(state: FlowState, params: PhysicsParams, dt: float,
         basis: ForcingBasis | None = None, rng: RngState | None = None,
         cfl_limit: float = 0.5) -> tuple[FlowState, RngState | None]:
    """One time step.  Raises CFLViolationError / NumericalBlowupError."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = state.omega.grid
    w = state.omega.coeffs * grid.dealias_keep
    g1, max_speed = _tendency(grid, w, params.beta)
    cfl = dt * max_speed / min(grid.dx1, grid.dx2)
    if cfl > cfl_limit:
        raise CFLViolationError(
            f"CFL {cfl:.3f} exceeds limit {cfl_limit} at t = {state.t:.6g} "
            f"(max |u| = {max_speed:.6g}); reduce dt", max_speed, cfl)
    decay, half_decay = _decay_factors(grid, params.nu, params.alpha, dt)
    predictor = decay * (w + dt * g1)
    g2, _ = _tendency(grid, predictor, params.beta)
    new = decay * w + 0.5 * dt * (decay * g1 + g2)
    if basis is not None:
        if rng is None:
            raise ValueError("a forcing basis requires an RngState")
        inc, rng = sample_vorticity_increment(basis, dt, rng)
        new += half_decay * inc.coeffs
    if not np.all(np.isfinite(new)):
        raise NumericalBlowupError(f"non-finite vorticity after step {state.step_index}")
    return FlowState(SpectralField(grid, new), t=state.t + dt,
                     step_index=state.step_index + 1), rng


@dataclass(frozen=True)
class SpinupCriterion:
    """Stationarity: trailing-window running average of ||u||^2 settles.

    The window defaults to window_tau eddy-turnover times tau = eta_area^(-1/3);
    pass window_time explicitly for unforced runs.  The detector also fires on
    a plateau at zero (free decay).
    """

    window_tau: float = 20.0
    rel_tol: float = 0.01
    window_time: float | None = None

    def resolve_window(self, eta_area: float) -> float:
        if self.window_time is not None:
            return self.window_time
        if eta_area <= 0.0:
            raise ValueError("eta_area = 0: pass an explicit window_time")
        return self.window_tau * eta_area ** (-1.0 / 3.0)


@dataclass
class RunResult:
    snapshots: list[FlowState]
    norms: np.ndarray           # records (t, u_sq, omega_sq, grad_omega_sq) per step
    stationary_at: float        # time at which the detector fired
    final: FlowState
    rng: RngState | None


_NORMS_DTYPE = np.dtype([("t", float), ("u_sq", float),
                         ("omega_sq", float), ("grad_omega_sq", float)])


def run_to_stationarity(initial: FlowState, params: PhysicsParams, dt: float,
                        basis: ForcingBasis | None = None,
                        rng: RngState | None = None,
                        spinup: SpinupCriterion = SpinupCriterion(),
                        n_snapshots: int = 0,
                        snapshot_stride_time: float | None = None,
                        max_steps: int = 10**7,
                        on_snapshot=None,
                        cfl_limit: float = 0.5) -> RunResult:
    """Advance until stationarity, then emit snapshots at a fixed stride.

    Norms are recorded every step from step 0.  Snapshots (n_snapshots of
    them, snapshot_stride_time apart, defaulting to one turnover time) are
    collected after the detector fires; on_snapshot(state), when given,
    receives them instead of the returned list (streaming to disk).
    """
    grid = initial.omega.grid
    eta_area = basis.eta_area if basis is not None else 0.0
    window = spinup.resolve_window(eta_area)
    if snapshot_stride_time is None:
        snapshot_stride_time = window / spinup.window_tau if eta_area > 0 else window
    check_stride = max(1, int(round(window / dt / 8.0)))

    from .fields import l2_norms
    state = initial
    records = [(state.t, *_norm_tuple(l2_norms(state.omega)))]
    peak = records[0][1]
    stationary_at = None

    def window_mean(recs, t_lo, t_hi):
        arr = np.array([r[1] for r in recs if t_lo <= r[0] <= t_hi])
        return float(arr.mean()) if arr.size else None

    n = 0
    while stationary_at is None:
        if n >= max_steps:
            raise NonConvergenceError(
                f"no stationarity after {n} steps (t = {state.t:.6g}, window {window:.6g}, "
                f"trailing mean {window_mean(records, state.t - window, state.t)})")
        state, rng = step(state, params, dt, basis, rng, cfl_limit)
        n += 1
        norms = l2_norms(state.omega)
        records.append((state.t, *_norm_tuple(norms)))
        peak = max(peak, norms.u_sq)
        if n % check_stride == 0 and state.t >= 2.0 * window:
            recent = window_mean(records, state.t - window, state.t)
            previous = window_mean(records, state.t - 2.0 * window, state.t - window)
            if recent is not None and previous is not None:
                if recent <= 1e-12 * max(peak, 1.0):
                    stationary_at = state.t   # decayed to the zero plateau
                elif abs(recent - previous) < spinup.rel_tol * recent:
                    stationary_at = state.t

    snapshots: list[FlowState] = []
    if n_snapshots > 0:
        stride_steps = max(1, int(round(snapshot_stride_time / dt)))
        for i in range(n_snapshots):
            target = n + stride_steps
            while n < target:
                state, rng = step(state, params, dt, basis, rng, cfl_limit)
                n += 1
                records.append((state.t, *_norm_tuple(l2_norms(state.omega))))
            if on_snapshot is not None:
                on_snapshot(state)
            else:
                snapshots.append(state)

    return RunResult(snapshots=snapshots,
                     norms=np.array(records, dtype=_NORMS_DTYPE),
                     stationary_at=stationary_at, final=state, rng=rng)


def _norm_tuple(n):
    return (n.u_sq, n.omega_sq, n.grad_omega_sq)
