"""Command line interface.

Subcommands:

    simulate      advance the flow to stationarity, write snapshots + norms
    budget        scale-by-scale energy and enstrophy budgets from snapshots
    structure     diagnostic series (structure functions, correlations)
    balance       stationary input-output balance from the norm record
    spectrum      shell-summed energy spectrum from snapshots
    oracle-check  brute-force verification of the estimator stack

Common flags: --config <path> names the run configuration; --out <dir>
redirects outputs (ingestion still defaults to the configured directory);
--snapshots <dir> points analysis at a snapshot directory; --kinds
<comma list> picks the series the structure command writes; --range
<l_lo,l_hi> overrides the configured fit window for the budget report
line and the structure-command power-law fits.  BKHM_THREADS caps
transform parallelism.

Exit codes: 0 success, 1 usage error, 2 invalid configuration or input
files, 3 numerical failure during time stepping, 4 oracle mismatch.

Outputs are deterministic: a fixed config file (seed included) produces
byte-identical output directories on every run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, echo_config, load_config
from .dynamics import (CFLViolationError, NonConvergenceError, NumericalBlowupError,
                       SpinupCriterion, rest_state, run_to_stationarity)
from .forcing import ForcingBasis, RngState, build_forcing_basis
from .oracle import run_oracle_suite
from .statistics import (CORRELATION_KINDS, FORCING_KINDS, STRUCTURE_KINDS,
                         DiagnosticSeries, SeparationGrid, balance_residuals,
                         cascade_fit, energy_spectrum, forcing_spherical,
                         khm_velocity_budget, khm_vorticity_budget,
                         structure_function_spherical, two_point_spherical)

SNAPSHOT_PATTERN = "snapshot_*.bkhm"

# nominal power-law exponents used when --range asks for a fit
_NOMINAL_EXPONENT = {"D_bar": 3.0, "S3_longitudinal": 3.0, "ctheta_bar": 3.0,
                     "frakD_bar": 1.0, "frakQ_bar": 1.0, "S3_mixed_longitudinal": 1.0}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad arguments; the contract reserves 2 for
    validation problems, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _basis_for(cfg: RunConfig) -> ForcingBasis | None:
    if not cfg.forcing.enabled:
        return None
    return build_forcing_basis(cfg.grid, cfg.forcing.kappa_lo,
                               cfg.forcing.kappa_hi, cfg.forcing.eps_total)


def _separations(cfg: RunConfig) -> SeparationGrid:
    return SeparationGrid.log_spaced(cfg.grid, n_l=cfg.analysis.n_l,
                                     n_dirs=cfg.analysis.n_dirs,
                                     l_min=cfg.analysis.l_min,
                                     l_max=cfg.analysis.l_max)


def _ingest_snapshots(cfg: RunConfig, snapdir) -> list:
    """Read every snapshot in snapdir, refusing header mismatches."""
    paths = sorted(Path(snapdir).glob(SNAPSHOT_PATTERN))
    if not paths:
        raise io.SnapshotFormatError(f"{snapdir}: no {SNAPSHOT_PATTERN} files found")
    states = []
    for p in paths:
        hdr = io.read_snapshot_header(p)
        if hdr.grid() != cfg.grid:
            raise io.SnapshotFormatError(
                f"{p}: grid header {hdr.grid()} does not match the configuration grid {cfg.grid}")
        if hdr.physics() != cfg.physics:
            raise io.SnapshotFormatError(
                f"{p}: physics header {hdr.physics()} does not match the configuration "
                f"{cfg.physics}")
        states.append(io.read_snapshot(p))
    return states


def _zero_series(kind: str, sep: SeparationGrid) -> DiagnosticSeries:
    z = np.zeros_like(sep.lengths)
    return DiagnosticSeries(kind, sep.lengths, z, z.copy(), 0.0, 1)


def _forcing_series(cfg: RunConfig, sep: SeparationGrid) -> dict[str, DiagnosticSeries]:
    basis = _basis_for(cfg)
    if basis is None:
        return {k: _zero_series(k, sep) for k in ("a_bar", "fraka_bar")}
    return forcing_spherical(basis, sep)


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    basis = _basis_for(cfg)
    rng = RngState(cfg.seed) if basis is not None else None
    spinup = SpinupCriterion(window_time=cfg.time.spinup_window)

    written = []

    def emit(state):
        path = out / f"snapshot_{len(written):06d}.bkhm"
        io.write_snapshot(state, cfg.physics, path)
        written.append(path)

    result = run_to_stationarity(
        rest_state(cfg.grid), cfg.physics, cfg.time.dt,
        basis=basis, rng=rng, spinup=spinup,
        n_snapshots=cfg.time.n_snapshots,
        snapshot_stride_time=cfg.time.snapshot_stride,
        max_steps=cfg.time.max_steps, on_snapshot=emit)

    n = result.norms
    io.write_csv(out / "norms.csv", [
        ("t", n["t"]),
        ("energy_total", n["u_sq"]),
        ("enstrophy_total", n["omega_sq"]),
        ("palinstrophy_total", n["grad_omega_sq"]),
    ])
    echo_config(cfg, out / "effective.ini")
    print(f"stationary at t = {result.stationary_at:.6g}, "
          f"{n.shape[0] - 1} steps, {len(written)} snapshots -> {out}")
    return 0


def cmd_budget(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    states = _ingest_snapshots(cfg, args.snapshots or cfg.output_dir)
    sep = _separations(cfg)
    corr = two_point_spherical(states, sep, beta=cfg.physics.beta,
                               kinds=CORRELATION_KINDS,
                               n_blocks=cfg.analysis.n_blocks,
                               pad_factor=cfg.analysis.pad_factor,
                               mode=cfg.analysis.mode)
    forced = _forcing_series(cfg, sep)
    struct = structure_function_spherical(states, sep, kinds=("D_bar", "frakD_bar"),
                                          n_blocks=cfg.analysis.n_blocks,
                                          pad_factor=cfg.analysis.pad_factor,
                                          margin=cfg.analysis.margin,
                                          mode=cfg.analysis.mode)
    vel = khm_velocity_budget(struct["D_bar"], corr["gamma_bar"], corr["ctheta_bar"],
                              forced["a_bar"], cfg.physics.nu, cfg.physics.alpha)
    vor = khm_vorticity_budget(struct["frakD_bar"], corr["frakC_bar"], corr["frakQ_bar"],
                               forced["fraka_bar"], cfg.physics.nu, cfg.physics.alpha)
    io.write_budget_csv(out / "velocity_budget.csv", vel, struct["D_bar"].stderr)
    io.write_budget_csv(out / "vorticity_budget.csv", vor, struct["frakD_bar"].stderr)
    lo, hi = args.range if args.range else (cfg.analysis.fit_lo, cfg.analysis.fit_hi)
    window = (sep.lengths >= lo) & (sep.lengths <= hi)
    if not window.any():
        raise ValueError(f"range [{lo}, {hi}] holds no separation lengths")
    for name, budget in (("velocity", vel), ("vorticity", vor)):
        worst = float(np.max(np.abs(budget.residual_rel[window])))
        print(f"{name} budget over {len(states)} snapshots: "
              f"max |residual_rel| = {worst:.3e} on [{lo:.6g}, {hi:.6g}] "
              f"-> {out / (name + '_budget.csv')}")
    return 0


def _structure_kind_groups(kinds: list[str]) -> tuple[list[str], list[str], list[str]]:
    bad = [k for k in kinds
           if k not in STRUCTURE_KINDS + CORRELATION_KINDS + FORCING_KINDS]
    if bad:
        raise ValueError(
            f"unknown kinds {bad}; valid: "
            f"{', '.join(STRUCTURE_KINDS + CORRELATION_KINDS + FORCING_KINDS)}")
    return ([k for k in kinds if k in STRUCTURE_KINDS],
            [k for k in kinds if k in CORRELATION_KINDS],
            [k for k in kinds if k in FORCING_KINDS])


def cmd_structure(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    kinds = [k.strip() for k in args.kinds.split(",")] if args.kinds else list(STRUCTURE_KINDS)
    struct_kinds, corr_kinds, forcing_kinds = _structure_kind_groups(kinds)
    states = _ingest_snapshots(cfg, args.snapshots or cfg.output_dir)
    sep = _separations(cfg)
    series: dict[str, DiagnosticSeries] = {}
    if struct_kinds:
        series.update(structure_function_spherical(
            states, sep, kinds=struct_kinds, n_blocks=cfg.analysis.n_blocks,
            pad_factor=cfg.analysis.pad_factor, margin=cfg.analysis.margin,
            mode=cfg.analysis.mode))
    if corr_kinds:
        series.update(two_point_spherical(
            states, sep, beta=cfg.physics.beta, kinds=corr_kinds,
            n_blocks=cfg.analysis.n_blocks, pad_factor=cfg.analysis.pad_factor,
            mode=cfg.analysis.mode))
    if forcing_kinds:
        forced = _forcing_series(cfg, sep)
        series.update({k: forced[k] for k in forcing_kinds})
    for kind in kinds:
        path = out / f"{kind}.csv"
        io.write_series_csv(path, series[kind])
        print(f"{kind}: {sep.lengths.size} separations from "
              f"{len(states)} snapshots -> {path}")
    lo, hi = args.range if args.range else (cfg.analysis.fit_lo, cfg.analysis.fit_hi)
    for kind in kinds:
        nominal = _NOMINAL_EXPONENT.get(kind, 0.0)
        try:
            fit = cascade_fit(series[kind], lo, hi, nominal)
        except ValueError as e:
            print(f"fit {kind}: skipped ({e})")
            continue
        print(f"fit {kind} on [{lo:.6g}, {hi:.6g}]: exponent = "
              f"{fit.exponent:.4f} +- {fit.exponent_stderr:.4f}, sign = "
              f"{fit.sign:+.0f}, prefactor(l^{nominal:g}) = {fit.prefactor:.6g}")
    return 0


def cmd_balance(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    basis = _basis_for(cfg)
    if basis is None:
        raise ConfigError("forcing.eps_total",
                          "balance needs a forced run; input rates are zero otherwise")
    norms_path = Path(args.norms) if args.norms else Path(cfg.output_dir) / "norms.csv"
    if not norms_path.exists():
        raise ConfigError("output.directory", f"no norm record at {norms_path}")
    norms = _read_norms_csv(norms_path)
    # average over the snapshot-collection span: it starts at the detected
    # stationarity time, so the trailing window holds post-spinup samples only
    if cfg.time.n_snapshots > 1:
        window = (cfg.time.n_snapshots - 1) * cfg.time.snapshot_stride
    else:
        window = SpinupCriterion(window_time=cfg.time.spinup_window).resolve_window(basis.eta_area)
    report = balance_residuals(norms, window, basis, cfg.physics.nu, cfg.physics.alpha,
                               n_blocks=cfg.analysis.n_blocks)
    io.write_csv(out / "balance.csv", [
        ("energy_estimate", [report.energy_estimate]),
        ("energy_expected", [report.energy_expected]),
        ("energy_rel_error", [report.energy_rel_error]),
        ("energy_stderr", [report.energy_stderr]),
        ("enstrophy_estimate", [report.enstrophy_estimate]),
        ("enstrophy_expected", [report.enstrophy_expected]),
        ("enstrophy_rel_error", [report.enstrophy_rel_error]),
        ("enstrophy_stderr", [report.enstrophy_stderr]),
        ("window_time", [report.window_time]),
        ("n_samples", [report.n_samples]),
    ])
    print(f"energy balance: {report.energy_estimate:.6g} vs {report.energy_expected:.6g} "
          f"({100 * report.energy_rel_error:.2f}%), "
          f"enstrophy balance: {report.enstrophy_estimate:.6g} vs "
          f"{report.enstrophy_expected:.6g} ({100 * report.enstrophy_rel_error:.2f}%) "
          f"-> {out / 'balance.csv'}")
    return 0


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    states = _ingest_snapshots(cfg, args.snapshots or cfg.output_dir)
    spec = energy_spectrum(states)
    io.write_csv(out / "spectrum.csv", [("kappa", spec.kappa), ("E", spec.energy)])
    print(f"{spec.kappa.size} shells from {len(states)} snapshots -> {out / 'spectrum.csv'}")
    return 0


def cmd_oracle_check(args) -> int:
    report = run_oracle_suite(n_instances=args.instances, seed=args.seed, tol=args.tol)
    for family in sorted(report.families):
        err = report.families[family]
        mark = "ok  " if err <= report.tol else "FAIL"
        print(f"{mark} {family}: max deviation {err:.3e} (tol {report.tol:.1e})")
    if report.passed:
        print(f"all {len(report.families)} families agree over "
              f"{report.n_instances} random instances")
        return 0
    print("oracle mismatch: fast estimators disagree with the brute-force reference",
          file=sys.stderr)
    return 4


def _read_norms_csv(path) -> np.ndarray:
    from .dynamics import _NORMS_DTYPE
    raw = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    needed = ("t", "energy_total", "enstrophy_total", "palinstrophy_total")
    for name in needed:
        if name not in (raw.dtype.names or ()):
            raise io.SnapshotFormatError(f"{path}: missing column {name!r}")
    norms = np.zeros(raw.shape, dtype=_NORMS_DTYPE)
    norms["t"] = raw["t"]
    norms["u_sq"] = raw["energy_total"]
    norms["omega_sq"] = raw["enstrophy_total"]
    norms["grad_omega_sq"] = raw["palinstrophy_total"]
    return norms


def _range_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected l_lo,l_hi, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two numbers, got {text!r}")
    if not 0.0 < lo < hi:
        raise argparse.ArgumentTypeError(f"need 0 < l_lo < l_hi, got {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bkhm", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, config=True, snapshots=False, rng=False):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", required=True, help="run configuration file")
            p.add_argument("--out", default=None,
                           help="write outputs here instead of the configured directory")
        if snapshots:
            p.add_argument("--snapshots", default=None,
                           help="directory of snapshot files (default: output directory)")
        if rng:
            p.add_argument("--range", type=_range_pair, default=None, metavar="L_LO,L_HI",
                           help="fit window l_lo,l_hi (default: the configured fit range)")
        p.set_defaults(func=func)
        return p

    add("simulate", cmd_simulate, "run the dynamics and write snapshots")
    add("budget", cmd_budget, "energy and enstrophy scale budgets",
        snapshots=True, rng=True)
    p = add("structure", cmd_structure, "third-order structure functions",
            snapshots=True, rng=True)
    p.add_argument("--kinds", default=None,
                   help="comma list of series kinds (default: the structure-function kinds)")
    p = add("balance", cmd_balance, "stationary input-output balance")
    p.add_argument("--norms", default=None,
                   help="norm record CSV (default: norms.csv in the output directory)")
    add("spectrum", cmd_spectrum, "shell-summed energy spectrum", snapshots=True)
    p = add("oracle-check", cmd_oracle_check,
            "verify estimators against the brute-force reference", config=False)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as e:
        # ConfigError, snapshot format errors, separation grid and band
        # problems: anything wrong with inputs rather than with arithmetic
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CFLViolationError, NumericalBlowupError, NonConvergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
