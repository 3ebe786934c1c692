"""Channel grid, mixed Fourier/sine transforms, and spectral operators.

Domain: x1 in [0, L) periodic, x2 in (a, b) with free-slip walls
(psi = omega = 0 on the walls).  Scalar fields vanishing at the walls are
expanded in

    f(x) = sum_{k,m} c_{k,m} exp(i k x1) sin(m pi (x2 - a) / (b - a)),

with k running over the N1 FFT frequencies (integer multiples of 2 pi / L)
and m = 1..N2.  Collocation nodes are

    x1_i = i L / N1               i = 0..N1-1,
    x2_j = a + j (b - a)/(N2+1)   j = 1..N2   (interior nodes only),

so the sine direction is exactly the DST-I geometry: N2 interior nodes,
N2 + 1 subintervals, wall values implied by the basis and never stored.

Normalization: coefficients are the analytic basis coefficients.  Forward =
DST-I / (N2+1) along x2 then FFT / N1 along x1; inverse is exact (the DST-I
pair is its own inverse up to 2(N2+1)).

The x2-derivative of a sine-basis field lives in the companion cosine basis
cos(m pi (x2 - a)/(b - a)); those fields (u1 = -d2 psi among them) are kept
as cosine-coefficient arrays plus interior samples.  Their wall trace need
not vanish; only interior samples are ever stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from ._threads import fft_workers


class SpectralSymmetryError(ValueError):
    """Spectral data is not conjugate-symmetric: corrupted or mis-assembled."""


@dataclass(frozen=True)
class ChannelGrid:
    """Periodic-channel collocation grid T_L x [a, b]."""

    L: float
    a: float
    b: float
    N1: int
    N2: int

    def __post_init__(self):
        if not (self.L > 0.0):
            raise ValueError(f"L must be positive, got {self.L}")
        if not (self.b > self.a):
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")
        if self.N1 < 4 or self.N1 % 2 != 0:
            raise ValueError(f"N1 must be even and >= 4, got {self.N1}")
        if self.N2 < 2:
            raise ValueError(f"N2 must be >= 2, got {self.N2}")

    @property
    def height(self) -> float:
        return self.b - self.a

    @property
    def area(self) -> float:
        return self.L * self.height

    @property
    def dx1(self) -> float:
        return self.L / self.N1

    @property
    def dx2(self) -> float:
        # N2 interior nodes make N2 + 1 subintervals
        return self.height / (self.N2 + 1)

    @cached_property
    def x1(self) -> np.ndarray:
        return self.dx1 * np.arange(self.N1)

    @cached_property
    def x2(self) -> np.ndarray:
        return self.a + self.dx2 * np.arange(1, self.N2 + 1)

    @cached_property
    def k1(self) -> np.ndarray:
        """Physical x1 wavenumbers in FFT order, shape (N1,)."""
        return (2.0 * np.pi / self.L) * np.fft.fftfreq(self.N1, d=1.0 / self.N1)

    @cached_property
    def mu(self) -> np.ndarray:
        """Sine-direction wavenumbers m pi / (b - a) for m = 1..N2."""
        return (np.pi / self.height) * np.arange(1, self.N2 + 1)

    @cached_property
    def kappa2(self) -> np.ndarray:
        """Laplacian eigenvalues kappa^2 = k^2 + (m pi/(b-a))^2, shape (N1, N2)."""
        return self.k1[:, None] ** 2 + self.mu[None, :] ** 2

    @cached_property
    def dealias_keep(self) -> np.ndarray:
        """Boolean 2/3-rule mask: True for modes kept after dealiasing.

        Nyquist limits are N1/2 for |k| index and N2 + 1 for m (the sine
        Nyquist of the implicit odd extension of period 2(N2+1)).
        """
        ki = np.fft.fftfreq(self.N1, d=1.0 / self.N1).astype(int)
        k_keep = np.abs(ki) <= (2 * (self.N1 // 2)) // 3
        m = np.arange(1, self.N2 + 1)
        m_keep = m <= (2 * (self.N2 + 1)) // 3
        return k_keep[:, None] & m_keep[None, :]

    @cached_property
    def _nyquist_row(self) -> int:
        return self.N1 // 2


@dataclass(frozen=True)
class PhysicalField:
    """Interior samples of a scalar field, shape (N1, N2), axis order (x1, x2)."""

    grid: ChannelGrid
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != (self.grid.N1, self.grid.N2):
            raise ValueError(f"values shape {v.shape} does not match grid "
                             f"({self.grid.N1}, {self.grid.N2})")
        if v.dtype != np.float64:
            raise ValueError(f"values must be float64, got {v.dtype}")

    def integral(self) -> float:
        """Cell-sum quadrature sum(f) * dx1 * dx2 over the interior nodes.

        Because basis fields vanish at the walls this equals the full
        trapezoid rule on [a, b].
        """
        return _cell_sum(self.values) * self.grid.dx1 * self.grid.dx2


@dataclass(frozen=True)
class SpectralField:
    """Basis coefficients c_{k,m}, complex, shape (N1, N2), axis order (k, m)."""

    grid: ChannelGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = self.coeffs
        if c.shape != (self.grid.N1, self.grid.N2):
            raise ValueError(f"coeffs shape {c.shape} does not match grid "
                             f"({self.grid.N1}, {self.grid.N2})")
        if c.dtype != np.complex128:
            raise ValueError(f"coeffs must be complex128, got {c.dtype}")


def _cell_sum(block: np.ndarray) -> float:
    # Single fixed-order reduction shared by every integral-preservation
    # contract, so padded and unpadded sums agree bitwise.
    return float(np.sum(block))


def _check_conjugate_symmetry(grid: ChannelGrid, c: np.ndarray, rtol: float = 1e-9) -> None:
    mirrored = c[(-np.arange(grid.N1)) % grid.N1, :]
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return
    err = np.max(np.abs(c - np.conj(mirrored)))
    if err > rtol * scale:
        raise SpectralSymmetryError(
            f"spectral data violates conjugate symmetry: max deviation {err:.3e} "
            f"vs scale {scale:.3e}")


def transform_forward(field: PhysicalField) -> SpectralField:
    """Interior samples -> basis coefficients (exact for band-limited data)."""
    g = sfft.dst(field.values, type=1, axis=1, workers=fft_workers()) / (field.grid.N2 + 1)
    c = sfft.fft(g, axis=0, workers=fft_workers()) / field.grid.N1
    return SpectralField(field.grid, c)


def transform_inverse(field: SpectralField, check: bool = True) -> PhysicalField:
    """Basis coefficients -> interior samples.

    Raises SpectralSymmetryError when the coefficients are not conjugate
    symmetric under k -> -k (real fields only can be sampled).
    """
    if check:
        _check_conjugate_symmetry(field.grid, field.coeffs)
    g = sfft.ifft(field.coeffs, axis=0, workers=fft_workers()) * field.grid.N1
    vals = sfft.dst(np.ascontiguousarray(g.real), type=1, axis=1, workers=fft_workers()) / 2.0
    return PhysicalField(field.grid, vals)


def cosine_samples(grid: ChannelGrid, cos_coeffs: np.ndarray) -> np.ndarray:
    """Sample sum_m d_m cos(m pi (x2-a)/(b-a)) exp(i k x1) at interior nodes.

    cos_coeffs has the same (k, m) layout as SpectralField.coeffs but in the
    cosine basis (m = 1..N2; the constant and sine-Nyquist cosine components
    are structurally absent from x2-derivatives of sine fields).
    """
    g = sfft.ifft(cos_coeffs, axis=0, workers=fft_workers()) * grid.N1
    buf = np.zeros((grid.N1, grid.N2 + 2))
    buf[:, 1:grid.N2 + 1] = g.real
    # DCT-I of [0, d_1..d_N2, 0] evaluates the cosine series at nodes j=0..N2+1
    full = sfft.dct(buf, type=1, axis=1, workers=fft_workers()) / 2.0
    return np.ascontiguousarray(full[:, 1:grid.N2 + 1])


def dx1_coeffs(grid: ChannelGrid, coeffs: np.ndarray) -> np.ndarray:
    """Multiply by i k.  The k-Nyquist row is zeroed: its x1-derivative is not
    representable as a real field on the grid."""
    out = coeffs * (1j * grid.k1)[:, None]
    out[grid._nyquist_row, :] = 0.0
    return out


def dealias(field: SpectralField) -> SpectralField:
    return SpectralField(field.grid, field.coeffs * field.grid.dealias_keep)


@dataclass(frozen=True)
class VelocityPair:
    """Velocity samples plus the spectral data they were built from.

    u1 lives in the cosine basis along x2 (free-slip: its wall trace is
    unconstrained), u2 in the sine basis (vanishes at the walls).
    """

    u1: PhysicalField
    u2: PhysicalField
    u1_cos: np.ndarray
    u2_sin: np.ndarray


def streamfunction(w: SpectralField) -> SpectralField:
    """Solve Laplace(psi) = omega per mode: psi = -omega / kappa^2.

    The sine basis has no mean mode, so the inversion is unconditionally
    well-posed.  The k-Nyquist row is zeroed; dynamics never populates it
    (2/3 mask) and velocities derived from it would not be representable.
    """
    c = -w.coeffs / w.grid.kappa2
    c[w.grid._nyquist_row, :] = 0.0
    return SpectralField(w.grid, c)


def velocity_from_vorticity(w: SpectralField) -> VelocityPair:
    """u = (-d2 psi, d1 psi) with Laplace(psi) = omega."""
    grid = w.grid
    psi = streamfunction(w)
    u1_cos = -psi.coeffs * grid.mu[None, :]
    u2_sin = dx1_coeffs(grid, psi.coeffs)
    u1 = PhysicalField(grid, cosine_samples(grid, u1_cos))
    u2 = transform_inverse(SpectralField(grid, u2_sin), check=False)
    return VelocityPair(u1=u1, u2=u2, u1_cos=u1_cos, u2_sin=u2_sin)


def curl(v: VelocityPair, grid: ChannelGrid) -> SpectralField:
    """omega = d1 u2 - d2 u1 in the sine basis (exact on the spectral data).

    d2 of the cosine basis maps cos_m -> -mu_m sin_m, so the u1 term
    contributes +mu * u1_cos.
    """
    c = dx1_coeffs(grid, v.u2_sin) + grid.mu[None, :] * v.u1_cos
    return SpectralField(grid, c)


def divergence_coeffs(v: VelocityPair, grid: ChannelGrid) -> np.ndarray:
    """d1 u1 + d2 u2 in the cosine basis; identically zero for gradient-perp pairs."""
    return dx1_coeffs(grid, v.u1_cos) + grid.mu[None, :] * v.u2_sin


@dataclass(frozen=True)
class L2Norms:
    """Unnormalized squared L2 norms over T_L x [a, b] (no 1/2 factors)."""

    u_sq: float          # ||u||^2  = ||grad psi||^2
    omega_sq: float      # ||omega||^2 = ||grad u||^2
    grad_omega_sq: float  # ||grad omega||^2


def l2_norms(w: SpectralField) -> L2Norms:
    """Spectral quadrature: each basis mode carries weight L (b-a) / 2."""
    grid = w.grid
    weight = grid.L * grid.height / 2.0
    p = np.abs(w.coeffs) ** 2
    return L2Norms(
        u_sq=float(weight * np.sum(p / grid.kappa2)),
        omega_sq=float(weight * np.sum(p)),
        grad_omega_sq=float(weight * np.sum(p * grid.kappa2)),
    )


def inner_l2(fa: SpectralField, fb: SpectralField) -> float:
    """Unnormalized L2 inner product <fa, fb> for real fields, via coefficients."""
    grid = fa.grid
    weight = grid.L * grid.height / 2.0
    return float(weight * np.sum((np.conj(fa.coeffs) * fb.coeffs).real))


@dataclass(frozen=True)
class PaddedField:
    """Zero extension of interior samples onto a fully periodic lattice.

    The x2 direction is extended from N2 interior nodes to
    M2 = pad_factor * (N2 + 1) nodes with the same spacing, covering
    [a, a + pad_factor * (b - a)).  Columns 1..N2 hold the field, column 0
    is the wall x2 = a, column N2 + 1 the wall x2 = b; everything outside
    the strip is exactly zero.  Circular cross-correlations on this lattice
    equal zero-extension correlations for offsets |y2| <= (pad_factor - 1)(b-a).
    """

    grid: ChannelGrid
    pad_factor: int
    values: np.ndarray  # shape (N1, M2)

    @property
    def M2(self) -> int:
        return self.pad_factor * (self.grid.N2 + 1)

    def integral(self) -> float:
        """Cell-sum over the support block; bitwise equal to the source field's."""
        return _cell_sum(self.values[:, 1:self.grid.N2 + 1]) * self.grid.dx1 * self.grid.dx2


def extend_by_zero(field: PhysicalField, pad_factor: int = 2) -> PaddedField:
    if pad_factor < 2:
        raise ValueError(f"pad_factor must be >= 2, got {pad_factor}")
    grid = field.grid
    M2 = pad_factor * (grid.N2 + 1)
    vals = np.zeros((grid.N1, M2))
    vals[:, 1:grid.N2 + 1] = field.values
    return PaddedField(grid=grid, pad_factor=pad_factor, values=vals)
