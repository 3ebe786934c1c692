"""Snapshot persistence and CSV emission.

Snapshot files are a fixed little-endian binary layout:

    magic "BKHM" | version u16 | L, a, b f64 | N1, N2 u32
    | nu, alpha, beta, f0 f64 | t f64 | step_index u64
    | N1*N2 vorticity samples f64, row-major with x2 as the outer index
    | checksum u64

The checksum is FNV-1a run over the payload's little-endian 64-bit words.
The payload round-trips bitwise: a read state carries its file samples and
a rewrite emits them unchanged, so write(read(p)) reproduces p byte for
byte.  The spectral coefficients reconstructed from the samples agree with
the coefficients that produced them to transform roundoff (~1e-15), which
is the representation change, not a storage defect.

All writers go through an atomic temp-file + rename, and CSV floats are
formatted by shortest round-trip (repr), so identical inputs always yield
byte-identical outputs.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import FlowState, PhysicsParams
from .fields import ChannelGrid, PhysicalField, transform_forward, transform_inverse

SNAPSHOT_MAGIC = b"BKHM"
SNAPSHOT_VERSION = 1

_HEADER = struct.Struct("<4sH" + "3d" + "II" + "4d" + "d" + "Q")
_CHECKSUM = struct.Struct("<Q")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = (1 << 64) - 1


class SnapshotFormatError(ValueError):
    """Base class: the file is not a usable snapshot."""


class SnapshotChecksumError(SnapshotFormatError):
    pass


class SnapshotVersionError(SnapshotFormatError):
    pass


class SnapshotTruncatedError(SnapshotFormatError):
    pass


def payload_checksum(payload: bytes) -> int:
    """FNV-1a over the payload's little-endian u64 words."""
    h = _FNV_OFFSET
    for w in np.frombuffer(payload, dtype="<u8"):
        h = ((h ^ int(w)) * _FNV_PRIME) & _U64_MASK
    return h


@dataclass(frozen=True)
class SnapshotHeader:
    L: float
    a: float
    b: float
    N1: int
    N2: int
    nu: float
    alpha: float
    beta: float
    f0: float
    t: float
    step_index: int

    def grid(self) -> ChannelGrid:
        return ChannelGrid(L=self.L, a=self.a, b=self.b, N1=self.N1, N2=self.N2)

    def physics(self) -> PhysicsParams:
        return PhysicsParams(nu=self.nu, alpha=self.alpha, beta=self.beta, f0=self.f0)


def _atomic_write(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_snapshot(state: FlowState, params: PhysicsParams, path) -> None:
    grid = state.omega.grid
    if state.samples is not None:
        samples = state.samples
    else:
        samples = transform_inverse(state.omega, check=False).values
    payload = np.ascontiguousarray(samples.T, dtype="<f8").tobytes()
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
                          grid.L, grid.a, grid.b, grid.N1, grid.N2,
                          params.nu, params.alpha, params.beta, params.f0,
                          state.t, state.step_index)
    _atomic_write(path, header + payload + _CHECKSUM.pack(payload_checksum(payload)))


def _read_header(raw: bytes, path) -> SnapshotHeader:
    if len(raw) < _HEADER.size:
        raise SnapshotTruncatedError(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    magic, version, L, a, b, n1, n2, nu, alpha, beta, f0, t, step = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotVersionError(f"{path}: format version {version}, expected {SNAPSHOT_VERSION}")
    return SnapshotHeader(L, a, b, int(n1), int(n2), nu, alpha, beta, f0, t, int(step))


def read_snapshot_header(path) -> SnapshotHeader:
    with open(path, "rb") as f:
        return _read_header(f.read(_HEADER.size), path)


def read_snapshot(path) -> FlowState:
    raw = Path(path).read_bytes()
    hdr = _read_header(raw, path)
    n = hdr.N1 * hdr.N2
    expected = _HEADER.size + 8 * n + _CHECKSUM.size
    if len(raw) < expected:
        raise SnapshotTruncatedError(f"{path}: {len(raw)} bytes, expected {expected}")
    payload = raw[_HEADER.size:_HEADER.size + 8 * n]
    (stored,) = _CHECKSUM.unpack_from(raw, _HEADER.size + 8 * n)
    actual = payload_checksum(payload)
    if stored != actual:
        raise SnapshotChecksumError(f"{path}: checksum {actual:#018x} != stored {stored:#018x}")
    grid = hdr.grid()
    samples = np.ascontiguousarray(
        np.frombuffer(payload, dtype="<f8").reshape(hdr.N2, hdr.N1).T)
    omega = transform_forward(PhysicalField(grid, samples))
    return FlowState(omega, t=hdr.t, step_index=hdr.step_index, samples=samples)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)    # + 0.0 folds -0.0 into 0.0, exact otherwise
    return str(v)


def write_csv(path, columns: list[tuple[str, object]]) -> None:
    """Column-oriented CSV writer with shortest-round-trip float formatting."""
    names = [name for name, _ in columns]
    arrays = [np.atleast_1d(np.asarray(vals)) for _, vals in columns]
    n = arrays[0].shape[0]
    for (name, _), arr in zip(columns, arrays):
        if arr.shape[0] != n:
            raise ValueError(f"column {name!r} has {arr.shape[0]} rows, expected {n}")
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_cell(arr[i]) for arr in arrays))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def write_series_csv(path, series) -> None:
    write_csv(path, [("l", series.lengths),
                     ("value", series.values),
                     ("stderr", series.stderr),
                     ("n_samples", np.full(series.lengths.shape, series.n_samples, dtype=int))])


def write_budget_csv(path, budget, flux_stderr=None) -> None:
    err = np.full(budget.lengths.shape, np.nan) if flux_stderr is None else flux_stderr
    write_csv(path, [("l", budget.lengths),
                     ("flux", budget.flux),
                     ("visc_term", budget.visc_term),
                     ("drag_term", budget.drag_term),
                     ("coriolis_term", budget.coriolis_term),
                     ("noise_term", budget.noise_term),
                     ("residual", budget.residual),
                     ("residual_rel", budget.residual_rel),
                     ("stderr", err)])
