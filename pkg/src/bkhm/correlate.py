"""Lattice machinery behind the two-point and structure-function estimators.

One discrete convention is shared by everything here and by the brute-force
checkers: fields live on the interior collocation lattice, are extended by
zero onto a periodic lattice with pad_factor*(N2+1) columns, and integrals
become cell sums weighted by dx1*dx2.  Correlations then come from FFT
cross-spectra of the padded lattice.  A fractional separation is resolved in
one of two ways:

  "bilinear"  bilinear interpolation of the integer-shift correlation table;
              by linearity of the weights this equals direct summation
              against a bilinearly shifted second factor, cell for cell.
  "trig"      the exact Fourier sum of the cross-spectrum at the fractional
              shift, i.e. trigonometric interpolation.

Bilinear is the production default.  It is local: the zero extension is
discontinuous at the walls for fields with a free-slip trace, and trig
interpolation rings there while bilinear confines the error to wall cells.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

from ._threads import fft_workers
from .fields import (PaddedField, SpectralField, extend_by_zero,
                     transform_inverse, velocity_from_vorticity)


def padded_triple(omega: SpectralField, pad_factor: int = 2):
    """Zero-extended (u1, u2, omega) samples of one vorticity snapshot."""
    v = velocity_from_vorticity(omega)
    w = transform_inverse(omega, check=False)
    return (extend_by_zero(v.u1, pad_factor),
            extend_by_zero(v.u2, pad_factor),
            extend_by_zero(w, pad_factor))


def lattice_spectrum(p: PaddedField) -> np.ndarray:
    return sfft.fft2(p.values, workers=fft_workers())


def lattice_spectrum_array(values: np.ndarray) -> np.ndarray:
    """Spectrum of a bare padded-lattice sample array (product fields)."""
    return sfft.fft2(values, workers=fft_workers())


def cross_spectrum(hat_a: np.ndarray, hat_b: np.ndarray) -> np.ndarray:
    """Spectrum of s -> sum_x a(x) b(x+s); evaluate with the helpers below."""
    return np.conj(hat_a) * hat_b


def correlation_table(spec: np.ndarray, grid, pad_factor: int) -> np.ndarray:
    """Integer-shift correlation table with the cell-sum normalization.

    table[s1, s2] = dx1 dx2 / |Omega| * sum_x a(x) b(x + s*dx), shifts
    circular on the padded lattice (the x2 wrap only ever lands in the
    zero band for the separations this package evaluates).
    """
    c = sfft.ifft2(spec, workers=fft_workers()).real
    return c * (grid.dx1 * grid.dx2 / grid.area)


def eval_table_bilinear(table: np.ndarray, s1, s2) -> np.ndarray:
    """Bilinear interpolation of a correlation table at fractional shifts."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    m1, m2 = table.shape
    i1 = np.floor(s1).astype(int)
    i2 = np.floor(s2).astype(int)
    f1 = s1 - i1
    f2 = s2 - i2
    j1, j1n = i1 % m1, (i1 + 1) % m1
    j2, j2n = i2 % m2, (i2 + 1) % m2
    return ((1 - f1) * (1 - f2) * table[j1, j2]
            + f1 * (1 - f2) * table[j1n, j2]
            + (1 - f1) * f2 * table[j1, j2n]
            + f1 * f2 * table[j1n, j2n])


def eval_spectrum_trig(spec: np.ndarray, grid, pad_factor: int, s1, s2) -> np.ndarray:
    """Exact Fourier sum of the cross-spectrum at fractional shifts."""
    s1 = np.asarray(s1, dtype=float).ravel()
    s2 = np.asarray(s2, dtype=float).ravel()
    m1, m2 = spec.shape
    k1 = sfft.fftfreq(m1, d=1.0)            # cycles per lattice step
    k2 = sfft.fftfreq(m2, d=1.0)
    ph1 = np.exp(2j * np.pi * np.outer(s1, k1))          # (P, m1)
    ph2 = np.exp(2j * np.pi * np.outer(k2, s2))          # (m2, P)
    partial = spec @ ph2                                  # (m1, P)
    vals = np.einsum("pk,kp->p", ph1, partial).real
    vals *= grid.dx1 * grid.dx2 / (grid.area * m1 * m2)
    shape = np.broadcast(np.asarray(s1).reshape(-1), np.asarray(s2).reshape(-1)).shape
    return vals.reshape(shape)


def evaluate_correlation(spec: np.ndarray, grid, pad_factor: int, s1, s2,
                         mode: str = "bilinear") -> np.ndarray:
    if mode == "bilinear":
        return eval_table_bilinear(correlation_table(spec, grid, pad_factor), s1, s2)
    if mode == "trig":
        orig = np.broadcast(np.asarray(s1), np.asarray(s2)).shape
        b1, b2 = np.broadcast_arrays(np.asarray(s1, float), np.asarray(s2, float))
        return eval_spectrum_trig(spec, grid, pad_factor, b1.ravel(), b2.ravel()).reshape(orig)
    raise ValueError(f"unknown interpolation mode {mode!r}")


def bilinear_shifted(values: np.ndarray, s1: float, s2: float) -> np.ndarray:
    """b(x + s*dx) on the padded lattice, bilinear, circular in both axes.

    The x2 circularity is safe by construction: for |y2| <= h the wrapped
    indices stay inside the zero band, so this is the zero extension.
    """
    i1 = int(np.floor(s1))
    i2 = int(np.floor(s2))
    f1 = s1 - i1
    f2 = s2 - i2
    r00 = np.roll(values, (-i1, -i2), axis=(0, 1))
    r10 = np.roll(r00, -1, axis=0)
    r01 = np.roll(r00, -1, axis=1)
    r11 = np.roll(r10, -1, axis=1)
    return ((1 - f1) * (1 - f2) * r00 + f1 * (1 - f2) * r10
            + (1 - f1) * f2 * r01 + f1 * f2 * r11)


def window_rows(grid, pad_factor: int, margin: float) -> slice:
    """Columns of the padded lattice with x2 in [a + margin, b - margin]."""
    if margin < 0 or 2 * margin >= grid.height:
        raise ValueError(f"margin must lie in [0, h/2), got {margin}")
    j = np.arange(1, grid.N2 + 1)
    x2 = grid.a + j * grid.dx2
    keep = (x2 >= grid.a + margin - 1e-12) & (x2 <= grid.b - margin + 1e-12)
    idx = j[keep]
    if idx.size == 0:
        raise ValueError("window margin leaves no collocation rows")
    return slice(int(idx[0]), int(idx[-1]) + 1)


def window_denominator(grid, rows: slice, margin: float) -> float:
    """Normalizing area: |Omega| for the full strip, L * covered height else."""
    if margin == 0.0:
        return grid.area
    return grid.L * (rows.stop - rows.start) * grid.dx2
