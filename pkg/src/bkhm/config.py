"""Run configuration: sectioned key-value files.

A run file is standard INI text with sections [grid], [physics], [forcing],
[time], [analysis], [rng], [output].  Parsing is strict: missing required
keys, malformed values, out-of-range values, and unrecognized keys all
raise ConfigError whose message starts with the offending ``section.key``.

``eps_total = 0`` in [forcing] switches the noise off entirely; since the
spin-up and snapshot cadences are normally derived from the injection time
scale, a zero-forcing run must state ``time.spinup_window`` and
``time.snapshot_stride`` explicitly.

The effective configuration is echoed into the output directory and the
echo parses back to an identical RunConfig (floats are written with
shortest round-trip formatting).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

from .dynamics import PhysicsParams
from .fields import ChannelGrid

ANALYSIS_MODES = ("bilinear", "trig")


class ConfigError(ValueError):
    """A configuration problem, tagged with the offending section.key."""

    def __init__(self, key: str, msg: str):
        self.key = key
        super().__init__(f"{key}: {msg}")


@dataclass(frozen=True)
class ForcingConfig:
    kappa_lo: float
    kappa_hi: float
    eps_total: float    # total energy injection rate; 0 disables forcing

    @property
    def enabled(self) -> bool:
        return self.eps_total > 0.0


@dataclass(frozen=True)
class TimeConfig:
    dt: float
    max_steps: int
    n_snapshots: int = 16
    snapshot_stride: float | None = None    # None: one injection time per snapshot
    spinup_window: float | None = None      # None: twenty injection times


@dataclass(frozen=True)
class AnalysisConfig:
    n_l: int
    n_dirs: int
    l_min: float
    l_max: float
    fit_lo: float
    fit_hi: float
    n_blocks: int = 8
    pad_factor: int = 2
    mode: str = "bilinear"
    margin: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    grid: ChannelGrid
    physics: PhysicsParams
    forcing: ForcingConfig
    time: TimeConfig
    analysis: AnalysisConfig
    seed: int
    output_dir: str


_MISSING = object()


class _Section:
    """Typed, consumption-tracked access to one INI section."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.raw = dict(parser[name]) if parser.has_section(name) else {}
        self.seen: set[str] = set()

    def _raw(self, key: str):
        """Returns the raw string, or None when the key is absent."""
        self.seen.add(key)
        if key not in self.raw:
            return None
        return self.raw[key]

    def get_float(self, key: str, default=_MISSING):
        v = self._raw(key)
        if v is None:
            if default is _MISSING:
                raise ConfigError(f"{self.name}.{key}", "missing required key")
            return default
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}", f"not a number: {v!r}") from None

    def get_int(self, key: str, default=_MISSING):
        v = self._raw(key)
        if v is None:
            if default is _MISSING:
                raise ConfigError(f"{self.name}.{key}", "missing required key")
            return default
        try:
            return int(v, 10)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}", f"not an integer: {v!r}") from None

    def get_str(self, key: str, default=_MISSING):
        v = self._raw(key)
        if v is None:
            if default is _MISSING:
                raise ConfigError(f"{self.name}.{key}", "missing required key")
            return default
        return v

    def unknown(self):
        return sorted(set(self.raw) - self.seen)


def _require(cond: bool, key: str, msg: str):
    if not cond:
        raise ConfigError(key, msg)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str    # keys are case sensitive (N1, N2, L)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError("<syntax>", str(e)) from None

    known = ("grid", "physics", "forcing", "time", "analysis", "rng", "output")
    for sec in parser.sections():
        if sec not in known:
            raise ConfigError(sec, "unknown section")

    g = _Section(parser, "grid")
    L = g.get_float("L")
    a = g.get_float("a")
    b = g.get_float("b")
    n1 = g.get_int("N1")
    n2 = g.get_int("N2")
    _require(L > 0, "grid.L", f"must be positive, got {L}")
    _require(b > a, "grid.b", f"must exceed grid.a = {a}, got {b}")
    _require(n1 >= 4 and n1 % 2 == 0, "grid.N1", f"must be even and >= 4, got {n1}")
    _require(n2 >= 2, "grid.N2", f"must be >= 2, got {n2}")
    grid = ChannelGrid(L=L, a=a, b=b, N1=n1, N2=n2)

    p = _Section(parser, "physics")
    nu = p.get_float("nu")
    alpha = p.get_float("alpha")
    beta = p.get_float("beta", 0.0)
    f0 = p.get_float("f0", 0.0)
    _require(nu >= 0, "physics.nu", f"must be >= 0, got {nu}")
    _require(alpha >= 0, "physics.alpha", f"must be >= 0, got {alpha}")
    physics = PhysicsParams(nu=nu, alpha=alpha, beta=beta, f0=f0)

    f = _Section(parser, "forcing")
    kappa_lo = f.get_float("kappa_lo")
    kappa_hi = f.get_float("kappa_hi")
    eps_total = f.get_float("eps_total")
    _require(kappa_lo > 0, "forcing.kappa_lo", f"must be positive, got {kappa_lo}")
    _require(kappa_hi >= kappa_lo, "forcing.kappa_hi",
             f"must be >= forcing.kappa_lo = {kappa_lo}, got {kappa_hi}")
    _require(eps_total >= 0, "forcing.eps_total", f"must be >= 0, got {eps_total}")
    forcing = ForcingConfig(kappa_lo=kappa_lo, kappa_hi=kappa_hi, eps_total=eps_total)

    t = _Section(parser, "time")
    dt = t.get_float("dt")
    max_steps = t.get_int("max_steps")
    n_snapshots = t.get_int("n_snapshots", 16)
    stride = t.get_float("snapshot_stride", None)
    window = t.get_float("spinup_window", None)
    _require(dt > 0, "time.dt", f"must be positive, got {dt}")
    _require(max_steps >= 1, "time.max_steps", f"must be >= 1, got {max_steps}")
    _require(n_snapshots >= 0, "time.n_snapshots", f"must be >= 0, got {n_snapshots}")
    if stride is not None:
        _require(stride > 0, "time.snapshot_stride", f"must be positive, got {stride}")
    if window is not None:
        _require(window > 0, "time.spinup_window", f"must be positive, got {window}")
    if not forcing.enabled:
        _require(window is not None, "time.spinup_window",
                 "required when forcing.eps_total = 0 (no injection time scale)")
        _require(stride is not None or n_snapshots == 0, "time.snapshot_stride",
                 "required when forcing.eps_total = 0 (no injection time scale)")
    time = TimeConfig(dt=dt, max_steps=max_steps, n_snapshots=n_snapshots,
                      snapshot_stride=stride, spinup_window=window)

    s = _Section(parser, "analysis")
    n_l = s.get_int("n_l")
    n_dirs = s.get_int("n_dirs")
    l_min = s.get_float("l_min")
    l_max = s.get_float("l_max")
    fit_lo = s.get_float("fit_lo")
    fit_hi = s.get_float("fit_hi")
    n_blocks = s.get_int("n_blocks", 8)
    pad_factor = s.get_int("pad_factor", 2)
    mode = s.get_str("mode", "bilinear")
    margin = s.get_float("margin", 0.0)
    _require(n_l >= 2, "analysis.n_l", f"must be >= 2, got {n_l}")
    _require(n_dirs >= 8 and n_dirs % 2 == 0, "analysis.n_dirs",
             f"must be even and >= 8, got {n_dirs}")
    spacing = min(grid.dx1, grid.dx2)
    _require(l_min >= 2.0 * spacing - 1e-12, "analysis.l_min",
             f"must be >= 2 grid spacings = {2.0 * spacing}, got {l_min}")
    _require(l_max <= grid.height / 4.0 + 1e-12, "analysis.l_max",
             f"must be <= h/4 = {grid.height / 4.0}, got {l_max}")
    _require(l_min < l_max, "analysis.l_max",
             f"must exceed analysis.l_min = {l_min}, got {l_max}")
    _require(fit_lo > 0, "analysis.fit_lo", f"must be positive, got {fit_lo}")
    _require(fit_hi > fit_lo, "analysis.fit_hi",
             f"must exceed analysis.fit_lo = {fit_lo}, got {fit_hi}")
    _require(n_blocks >= 1, "analysis.n_blocks", f"must be >= 1, got {n_blocks}")
    _require(pad_factor >= 2, "analysis.pad_factor", f"must be >= 2, got {pad_factor}")
    _require(mode in ANALYSIS_MODES, "analysis.mode",
             f"must be one of {ANALYSIS_MODES}, got {mode!r}")
    _require(0.0 <= margin < grid.height / 2.0, "analysis.margin",
             f"must lie in [0, h/2), got {margin}")
    analysis = AnalysisConfig(n_l=n_l, n_dirs=n_dirs, l_min=l_min, l_max=l_max,
                              fit_lo=fit_lo, fit_hi=fit_hi, n_blocks=n_blocks,
                              pad_factor=pad_factor, mode=mode, margin=margin)

    r = _Section(parser, "rng")
    seed = r.get_int("seed")
    _require(seed >= 0, "rng.seed", f"must be >= 0, got {seed}")

    o = _Section(parser, "output")
    out_dir = o.get_str("directory")
    _require(bool(str(out_dir).strip()), "output.directory", "must be a non-empty path")

    for sec in (g, p, f, t, s, r, o):
        bad = sec.unknown()
        if bad:
            raise ConfigError(f"{sec.name}.{bad[0]}", "unknown key")

    return RunConfig(grid=grid, physics=physics, forcing=forcing, time=time,
                     analysis=analysis, seed=seed, output_dir=str(out_dir))


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(), source=str(path))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_text(cfg: RunConfig) -> str:
    """Render a RunConfig as INI text; parse_config inverts this exactly."""
    lines = []

    def section(name, pairs):
        lines.append(f"[{name}]")
        for k, v in pairs:
            if v is not None:
                lines.append(f"{k} = {_fmt(v)}")
        lines.append("")

    section("grid", [("L", cfg.grid.L), ("a", cfg.grid.a), ("b", cfg.grid.b),
                     ("N1", cfg.grid.N1), ("N2", cfg.grid.N2)])
    section("physics", [("nu", cfg.physics.nu), ("alpha", cfg.physics.alpha),
                        ("beta", cfg.physics.beta), ("f0", cfg.physics.f0)])
    section("forcing", [("kappa_lo", cfg.forcing.kappa_lo),
                        ("kappa_hi", cfg.forcing.kappa_hi),
                        ("eps_total", cfg.forcing.eps_total)])
    section("time", [("dt", cfg.time.dt), ("max_steps", cfg.time.max_steps),
                     ("n_snapshots", cfg.time.n_snapshots),
                     ("snapshot_stride", cfg.time.snapshot_stride),
                     ("spinup_window", cfg.time.spinup_window)])
    section("analysis", [("n_l", cfg.analysis.n_l), ("n_dirs", cfg.analysis.n_dirs),
                         ("l_min", cfg.analysis.l_min), ("l_max", cfg.analysis.l_max),
                         ("fit_lo", cfg.analysis.fit_lo), ("fit_hi", cfg.analysis.fit_hi),
                         ("n_blocks", cfg.analysis.n_blocks),
                         ("pad_factor", cfg.analysis.pad_factor),
                         ("mode", cfg.analysis.mode), ("margin", cfg.analysis.margin)])
    section("rng", [("seed", cfg.seed)])
    section("output", [("directory", cfg.output_dir)])
    return "\n".join(lines)


def echo_config(cfg: RunConfig, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(config_text(cfg))
    os.replace(tmp, path)
