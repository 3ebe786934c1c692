"""Band-limited stochastic forcing on the channel.

The forcing acts through unit-norm divergence-free basis elements
e_j = grad_perp(psi_j) / ||grad psi_j||, with psi_j the Laplacian
eigenfunctions trig(k x1) sin(m pi (x2-a)/(b-a)).  Modes are enumerated by
(k >= 0, m >= 1) with kappa_lo <= kappa_j <= kappa_hi, ordered
lexicographically in (m, k), all with equal amplitude b_j.  A k > 0 entry is
the conjugate pair exp(+-i k x1): internally it carries a cosine and a sine
flavor, each a real unit-norm element of amplitude b_j / sqrt(2), so sampled
fields are real and statistically homogeneous in x1 while the (k, m) entry
contributes b_j^2 / 2 to the injection budget exactly once.

Injection bookkeeping (unnormalized totals, and per-area rates divided by
|Omega| = L (b-a)):

    eps_total = 1/2 sum_j b_j^2          energy injection rate
    eta_total = 1/2 sum_j b_j^2 kappa_j^2  enstrophy injection rate

since the vorticity of a unit-norm element satisfies
int |curl e_j|^2 = kappa_j^2 exactly.

The noise is sampled with a counter-based generator: Philox keyed by the
seed, with the logical counter selecting a disjoint 2^64-block of the
counter space, and Gaussians produced by inverse-CDF from the raw bits.
Identical (seed, counter) give identical draws on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

from .fields import ChannelGrid, SpectralField


@dataclass(frozen=True)
class ForcingMode:
    k: int          # x1 wavenumber index (physical wavenumber 2 pi k / L)
    m: int          # sine index
    b: float        # amplitude b_j
    kappa2: float   # Laplacian eigenvalue of the mode


@dataclass(frozen=True)
class RngState:
    """Position in the noise stream: (seed, counter) fully determine the draws."""

    seed: int
    counter: int = 0

    def advanced(self) -> "RngState":
        return RngState(self.seed, self.counter + 1)


def gaussian_block(state: RngState, n: int) -> np.ndarray:
    """n standard normal draws determined by (seed, counter) alone.

    Raw 64-bit Philox output is mapped to (0, 1) with a fixed affine rule and
    through the inverse normal CDF; no rejection step, so the draw count per
    counter block is deterministic.
    """
    bg = Philox(key=state.seed, counter=state.counter << 64)
    raw = bg.random_raw(n)
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
    return ndtri(u)


@dataclass(frozen=True)
class ForcingBasis:
    grid: ChannelGrid
    kappa_lo: float
    kappa_hi: float
    modes: tuple[ForcingMode, ...]
    eps_total: float
    eta_total: float

    @property
    def eps_area(self) -> float:
        return self.eps_total / self.grid.area

    @property
    def eta_area(self) -> float:
        return self.eta_total / self.grid.area

    @property
    def kappa_injection(self) -> float:
        """Nominal injection wavenumber: the band midpoint."""
        return 0.5 * (self.kappa_lo + self.kappa_hi)

    @property
    def l_injection(self) -> float:
        return 2.0 * np.pi / self.kappa_injection

    def draws_per_sample(self) -> int:
        # one Gaussian for k = 0 entries, two (cos and sin flavors) otherwise
        return sum(1 if mode.k == 0 else 2 for mode in self.modes)


def dealiased_kappa_max(grid: ChannelGrid) -> float:
    """2/3 of the smallest Nyquist wavenumber of the two directions."""
    nyq = min(np.pi * grid.N1 / grid.L, np.pi * (grid.N2 + 1) / grid.height)
    return (2.0 / 3.0) * nyq


def build_forcing_basis(grid: ChannelGrid, kappa_lo: float, kappa_hi: float,
                        eps_total: float) -> ForcingBasis:
    if not (0.0 < kappa_lo < kappa_hi):
        raise ValueError(f"need 0 < kappa_lo < kappa_hi, got [{kappa_lo}, {kappa_hi}]")
    if eps_total <= 0.0:
        raise ValueError(f"eps_total must be positive, got {eps_total}")
    limit = dealiased_kappa_max(grid)
    if kappa_hi >= limit:
        raise ValueError(
            f"kappa_hi = {kappa_hi} reaches the dealiased range (limit {limit:.6g}); "
            f"forced modes must survive the 2/3 mask")

    dk = 2.0 * np.pi / grid.L
    dm = np.pi / grid.height
    entries = []
    for m in range(1, grid.N2 + 1):
        if m * dm > kappa_hi:
            break
        for k in range(0, grid.N1 // 2):
            kap2 = (k * dk) ** 2 + (m * dm) ** 2
            if kap2 > kappa_hi**2:
                break
            if kap2 >= kappa_lo**2:
                entries.append((k, m, kap2))
    if not entries:
        raise ValueError(
            f"no eigenmodes with kappa in [{kappa_lo}, {kappa_hi}] on this grid")

    b = float(np.sqrt(2.0 * eps_total / len(entries)))
    modes = tuple(ForcingMode(k=k, m=m, b=b, kappa2=kap2)
                  for (m, k, kap2) in sorted((m, k, kap2) for (k, m, kap2) in entries))
    eta_total = 0.5 * b * b * float(sum(mode.kappa2 for mode in modes))
    basis = ForcingBasis(grid=grid, kappa_lo=kappa_lo, kappa_hi=kappa_hi,
                         modes=modes, eps_total=0.5 * b * b * len(modes),
                         eta_total=eta_total)
    _verify_unit_norms(basis)
    return basis


def _verify_unit_norms(basis: ForcingBasis) -> None:
    """Quadrature check of ||e_j|| = 1 and int |curl e_j|^2 = kappa_j^2.

    Uses the (Parseval-exact) spectral quadrature on each real flavor.
    """
    grid = basis.grid
    weight = grid.L * grid.height / 2.0
    for mode in basis.modes:
        mu = mode.m * np.pi / grid.height
        kp = mode.k * 2.0 * np.pi / grid.L
        # psi flavor coefficients: k=0 -> single real sin(mu eps) with c = 1;
        # k>0 -> cos flavor c_{+-k} = 1/2, sin flavor c_{+-k} = -+ i/2.
        if mode.k == 0:
            psi_sq = weight * 1.0
            grad_sq = weight * (mu * mu)
        else:
            psi_sq = weight * (0.25 + 0.25)
            grad_sq = weight * (0.25 + 0.25) * (kp * kp + mu * mu)
        e_sq = grad_sq / (mode.kappa2 * psi_sq)
        curl_sq = mode.kappa2**2 * psi_sq / (mode.kappa2 * psi_sq)
        if abs(e_sq - 1.0) > 1e-10:
            raise AssertionError(f"basis element ({mode.k},{mode.m}) not unit norm: {e_sq}")
        if abs(curl_sq - mode.kappa2) > 1e-10 * mode.kappa2:
            raise AssertionError(
                f"basis element ({mode.k},{mode.m}) curl norm {curl_sq} != {mode.kappa2}")


def sample_vorticity_increment(basis: ForcingBasis, dt: float,
                               state: RngState) -> tuple[SpectralField, RngState]:
    """One noise increment sum_j b_j sqrt(dt) xi_j curl(e_j), spectrally.

    curl(e_j) = -kappa_j psi_j / ||psi_j||; with the conjugate-pair
    convention the (k > 0, m) coefficient receives a complex Gaussian.
    E ||increment||^2 = 2 eta_total dt.  dt = 0 yields a zero field but the
    counter still advances.
    """
    if dt < 0.0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    grid = basis.grid
    xi = gaussian_block(state, basis.draws_per_sample())
    coeffs = np.zeros((grid.N1, grid.N2), dtype=np.complex128)
    area = grid.L * grid.height
    pos = 0
    for mode in basis.modes:
        kap = np.sqrt(mode.kappa2)
        amp = -mode.b * np.sqrt(dt) * kap
        if mode.k == 0:
            coeffs[0, mode.m - 1] += amp * xi[pos] * np.sqrt(2.0 / area)
            pos += 1
        else:
            c = amp * (xi[pos] + 1j * xi[pos + 1]) / np.sqrt(2.0 * area)
            coeffs[mode.k, mode.m - 1] += c
            coeffs[-mode.k % grid.N1, mode.m - 1] += np.conj(c)
            pos += 2
    return SpectralField(grid, coeffs), state.advanced()


# ---------------------------------------------------------------------------
# Exact two-point correlations of the forcing (closed trig integrals).
#
# For the zero-extended basis elements, with mu = m pi/(b-a), h = b-a and
# |y2| <= h, the truncated x2 integrals are
#
#   A_ss(y2) = int sin(mu e) sin(mu (e+y2)) de = (h-|y2|)/2 cos(mu y2)
#                                               + sin(mu |y2|)/(2 mu),
#   A_cc(y2) = int cos(mu e) cos(mu (e+y2)) de = (h-|y2|)/2 cos(mu y2)
#                                               - sin(mu |y2|)/(2 mu),
#
# and the x1 integral contributes (L/2) cos(k y1) per flavor (L for k = 0),
# which collapses to one formula per (k, m) entry:
#
#   a(y)     = sum_j b_j^2 cos(k y1) [k^2 A_ss + mu^2 A_cc] / (kappa_j^2 h |Omega|)
#   fraka(y) = sum_j b_j^2 kappa_j^2 cos(k y1) A_ss / (h |Omega|)
#
# with a(0) = eps_area and fraka(0) = eta_area exactly.  These are the
# production values used in the KHM budgets; the lattice cross-correlation
# path exists for oracle comparisons only (its free-slip wall layer carries
# an O(1/N2) quadrature error that would pollute the exact anchors).
#
# windowed=False drops the overlap cut: A_ss = A_cc = (h/2) cos(mu y2),
# the correlation of the trig modes continued past the walls.  The windowed
# form is the one the budget identities need, but its cut introduces a term
# linear in |y2| at the walls (the u1 trace does not vanish there), so only
# the unwindowed form has the small-separation expansion
#
#   a_bar(r) = eps_area - (r^2/4) eta_area + O(r^4),
#
# which the quadratic-response diagnostic checks.
# ---------------------------------------------------------------------------


def _mode_arrays(basis: ForcingBasis):
    grid = basis.grid
    k = np.array([mode.k * 2.0 * np.pi / grid.L for mode in basis.modes])
    mu = np.array([mode.m * np.pi / grid.height for mode in basis.modes])
    b2 = np.array([mode.b**2 for mode in basis.modes])
    kap2 = np.array([mode.kappa2 for mode in basis.modes])
    return k, mu, b2, kap2


def forcing_correlations_at(basis: ForcingBasis, y1, y2, windowed: bool = True):
    """Exact (a, fraka) at offsets (y1, y2); arrays broadcast elementwise."""
    grid = basis.grid
    h = grid.height
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(np.abs(y2) > h):
        raise ValueError("offset |y2| exceeds the channel height")
    k, mu, b2, kap2 = _mode_arrays(basis)
    ay2 = np.abs(y2)[..., None]
    cos_mu = np.cos(mu * y2[..., None])
    if windowed:
        sin_mu = np.sin(mu * ay2)
        half_span = 0.5 * (h - ay2)
        a_ss = half_span * cos_mu + sin_mu / (2.0 * mu)
        a_cc = half_span * cos_mu - sin_mu / (2.0 * mu)
    else:
        a_ss = a_cc = 0.5 * h * cos_mu
    cos_k = np.cos(k * y1[..., None])
    denom = h * grid.area
    a_vals = np.sum(b2 * cos_k * (k**2 * a_ss + mu**2 * a_cc) / kap2, axis=-1) / denom
    fraka_vals = np.sum(b2 * kap2 * cos_k * a_ss, axis=-1) / denom
    return a_vals, fraka_vals


def flavor_velocities(basis: ForcingBasis, mode: ForcingMode):
    """Real unit-norm flavor elements of a mode, as spectral velocity data.

    Returns a list of (u1_cos, u2_sin, w_sin) coefficient triples; one entry
    for k = 0, two (cos, sin flavors) otherwise.  Used by the lattice/oracle
    correlation path and the construction-time norm checks in tests.
    """
    grid = basis.grid
    mu = mode.m * np.pi / grid.height
    kap = np.sqrt(mode.kappa2)
    out = []
    if mode.k == 0:
        psi = np.zeros((grid.N1, grid.N2), dtype=np.complex128)
        psi[0, mode.m - 1] = 1.0
        norm = kap * np.sqrt(grid.L * grid.height / 2.0)
        flavors = [psi / norm]
    else:
        psi_c = np.zeros((grid.N1, grid.N2), dtype=np.complex128)
        psi_c[mode.k, mode.m - 1] = 0.5
        psi_c[-mode.k % grid.N1, mode.m - 1] = 0.5
        psi_s = np.zeros((grid.N1, grid.N2), dtype=np.complex128)
        psi_s[mode.k, mode.m - 1] = -0.5j
        psi_s[-mode.k % grid.N1, mode.m - 1] = 0.5j
        norm = kap * np.sqrt(grid.L * grid.height / 4.0)
        flavors = [psi_c / norm, psi_s / norm]
    for psi in flavors:
        u1_cos = -psi * grid.mu[None, :]
        u2_sin = psi * (1j * grid.k1)[:, None]
        w_sin = -psi * grid.kappa2
        out.append((u1_cos, u2_sin, w_sin))
    return out
