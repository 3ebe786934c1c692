"""Snapshot files, checksums, and CSV output."""

import struct

import numpy as np
import pytest

from bkhm import (
    ChannelGrid,
    PhysicsParams,
    RngState,
    SnapshotChecksumError,
    SnapshotFormatError,
    SnapshotTruncatedError,
    SnapshotVersionError,
    build_forcing_basis,
    read_snapshot,
    read_snapshot_header,
    rest_state,
    step,
    write_snapshot,
)
from bkhm.io import payload_checksum, write_budget_csv, write_csv, write_series_csv
from bkhm.statistics import DiagnosticSeries, khm_velocity_budget

from helpers import band_limited_state


@pytest.fixture
def params():
    return PhysicsParams(nu=0.002, alpha=0.08, beta=0.6, f0=0.0)


def _forced_state(grid, n_steps=25):
    basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
    state, rng = rest_state(grid), RngState(3)
    p = PhysicsParams(nu=0.002, alpha=0.08, beta=0.6)
    for _ in range(n_steps):
        state, rng = step(state, p, 0.004, basis, rng)
    return state


class TestSnapshotRoundTrip:
    def test_spectral_state_round_trips(self, grid, params, tmp_path):
        state = _forced_state(grid)
        path = tmp_path / "s.bkhm"
        write_snapshot(state, params, path)
        back = read_snapshot(path)
        assert back.t == state.t
        assert back.step_index == state.step_index
        assert back.omega.grid == grid
        err = np.abs(back.omega.coeffs - state.omega.coeffs).max()
        assert err <= 1e-12 * np.abs(state.omega.coeffs).max()

    def test_reread_write_is_byte_identical(self, grid, params, tmp_path):
        """samples survive a read so the rewrite reproduces the payload bitwise."""
        state = _forced_state(grid)
        p1 = tmp_path / "a.bkhm"
        p2 = tmp_path / "b.bkhm"
        write_snapshot(state, params, p1)
        write_snapshot(read_snapshot(p1), params, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_fields(self, grid, params, tmp_path):
        state = _forced_state(grid)
        path = tmp_path / "s.bkhm"
        write_snapshot(state, params, path)
        hdr = read_snapshot_header(path)
        assert hdr.grid() == grid
        assert hdr.physics() == params
        assert hdr.t == state.t
        assert hdr.step_index == state.step_index
        assert (hdr.N1, hdr.N2) == (grid.N1, grid.N2)


class TestSnapshotValidation:
    def _written(self, grid, params, tmp_path):
        path = tmp_path / "s.bkhm"
        write_snapshot(_forced_state(grid, 5), params, path)
        return path

    def test_bad_magic(self, grid, params, tmp_path):
        path = self._written(grid, params, tmp_path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(SnapshotFormatError, match="magic"):
            read_snapshot(path)

    def test_bad_version(self, grid, params, tmp_path):
        path = self._written(grid, params, tmp_path)
        blob = bytearray(path.read_bytes())
        blob[4:6] = struct.pack("<H", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(SnapshotVersionError, match="version 99"):
            read_snapshot(path)

    def test_flipped_payload_byte(self, grid, params, tmp_path):
        path = self._written(grid, params, tmp_path)
        blob = bytearray(path.read_bytes())
        blob[200] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(SnapshotChecksumError, match="checksum"):
            read_snapshot(path)

    def test_truncated_file(self, grid, params, tmp_path):
        path = self._written(grid, params, tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 9])
        with pytest.raises(SnapshotTruncatedError):
            read_snapshot(path)

    def test_errors_are_value_errors(self):
        # the command line maps ValueError to the validation exit code
        assert issubclass(SnapshotFormatError, ValueError)
        assert issubclass(SnapshotChecksumError, SnapshotFormatError)
        assert issubclass(SnapshotVersionError, SnapshotFormatError)
        assert issubclass(SnapshotTruncatedError, SnapshotFormatError)


class TestChecksum:
    def test_empty_payload_is_offset_basis(self):
        assert payload_checksum(b"") == 0xCBF29CE484222325

    def test_frozen_vector(self):
        payload = np.arange(4, dtype="<u8").tobytes()
        assert payload_checksum(payload) == 0x4475327F98E05411

    def test_detects_single_bit_flip(self):
        payload = np.arange(8, dtype="<f8").tobytes()
        ref = payload_checksum(payload)
        mutated = bytearray(payload)
        mutated[17] ^= 0x40
        assert payload_checksum(bytes(mutated)) != ref


class TestCsv:
    def test_float_cells_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        vals = [0.1, 1.0 / 3.0, -0.0, 2.0, 1e-300]
        write_csv(path, [("x", vals)])
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "x"
        assert lines[3] == "0.0"  # negative zero is folded
        back = [float(s) for s in lines[1:]]
        assert back == [0.1, 1.0 / 3.0, 0.0, 2.0, 1e-300]

    def test_series_csv_layout(self, tmp_path):
        ls = np.geomspace(0.1, 0.4, 4)
        series = DiagnosticSeries("D_bar", ls, ls ** 3, np.full(4, 0.5), 0.0, 2, 6)
        path = tmp_path / "d.csv"
        write_series_csv(path, series)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "l,value,stderr,n_samples"
        assert len(lines) == 5
        assert lines[1].endswith(",6")

    def test_budget_csv_layout(self, tmp_path):
        ls = np.geomspace(0.05, 0.6, 8)
        mk = lambda v0: DiagnosticSeries("x", ls, np.exp(-ls * ls), np.zeros(8), v0, 1)
        budget = khm_velocity_budget(mk(1.0), mk(1.0), mk(0.0), mk(1.0), 2e-4, 0.05)
        path = tmp_path / "b.csv"
        write_budget_csv(path, budget, flux_stderr=np.zeros(8))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == ("l,flux,visc_term,drag_term,coriolis_term,"
                            "noise_term,residual,residual_rel,stderr")
        assert len(lines) == 9
