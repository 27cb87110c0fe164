"""Command-line front end.

Every option can also come from a YAML file given with ``--config``; keys use
the long option names with dashes or underscores. Command-line flags win over
the file. Exit codes: 0 success, 1 user error (config or domain), 2 numeric or
capacity failure. Errors are printed as ``error[<category>]: <message>``.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import math
import operator
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
import yaml

from .errors import CapacityError, ConfigError, LatticeShiftError
from .kernels import f_and_g, pair_energy, quadrature_coupling
from .lattice import (SR87_KAPPA, AtomSample, DensityProfile, build_six_beam_lattice, enumerate_sites,
                      sample_occupancy, write_sites_csv)
from .oracle import N_MAX, oracle_peak_shift, ramsey_experiment
from .ramsey import write_signal_csv
from .resonance import find_resonant_angles
from .shift import (BRUTE_MAX_ATOMS, RamseyParams, mean_shift_imperfect, pair_histogram, shift_brute,
                    shift_restructured_perfect, shift_restructured_sample, variance_diffuse, variance_full)

SWEEP_COLUMNS = ("theta_over_pi", "shift0_scaled", "shift1_scaled", "mean_shift_scaled", "stddev_scaled")
RESONANCE_COLUMNS = ("n_x", "n_y", "n_z", "theta0_over_pi", "residual")
VARIANCE_COLUMNS = ("theta_over_pi", "mean_shift_scaled", "stddev_diffuse_scaled", "stddev_full_scaled")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2

# diffuse variance is used above this number of sites or below this filling
_FULL_VARIANCE_SITES = 2_000_000
_DIFFUSE_FILLING = 0.2


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one subcommand. ``theta*`` are in units of pi."""

    command: str
    theta: Optional[float] = None
    theta_min: float = 0.05
    theta_max: float = 0.25
    points: int = 200
    kappa: float = SR87_KAPPA
    n: Optional[float] = None
    filling: float = 1.0
    eps: float = 0.1
    gt: float = 0.0
    gamma: float = 0.0
    seed: Optional[int] = 0
    threads: int = 1
    out: Optional[str] = None
    method: str = "auto"
    max_index: int = 4
    sep: Optional[str] = None
    positions: Optional[str] = None
    v: Optional[str] = None
    delta_points: int = 101

    def __post_init__(self):
        def bad(field_, msg):
            raise ConfigError(f"{field_}: {msg}")
        for name in ("theta", "theta_min", "theta_max"):
            val = getattr(self, name)
            if val is not None and not 0.0 < val < 0.5:
                bad(name, f"must lie in (0, 0.5) (units of pi), got {val}")
        if self.theta_min > self.theta_max or (self.theta_min == self.theta_max and self.points > 1):
            bad("theta_min", "sweep range is empty")
        if self.points < 1:
            bad("points", f"must be >= 1, got {self.points}")
        if not self.kappa > 0:
            bad("kappa", f"must be positive, got {self.kappa}")
        if self.n is not None and not self.n >= 1:
            bad("n", f"must be >= 1, got {self.n}")
        if not 0.0 < self.filling <= 1.0:
            bad("filling", f"must satisfy 0 < P <= 1, got {self.filling}")
        if not abs(self.eps) <= 1.0:
            bad("eps", f"must satisfy |eps| <= 1, got {self.eps}")
        if not self.gt >= 0:
            bad("gt", f"must be >= 0, got {self.gt}")
        if not self.gamma >= 0:
            bad("gamma", f"must be >= 0, got {self.gamma}")
        if self.threads < 1:
            bad("threads", f"must be >= 1, got {self.threads}")
        if self.method not in ("auto", "brute", "restructured"):
            bad("method", f"must be auto, brute or restructured, got {self.method!r}")
        if self.max_index < 1:
            bad("max_index", f"must be >= 1, got {self.max_index}")
        if self.delta_points < 5:
            bad("delta_points", f"must be >= 5, got {self.delta_points}")

    @property
    def mean_atoms(self) -> float:
        return 1e4 if self.n is None else self.n

    @property
    def params(self) -> RamseyParams:
        return RamseyParams(pulse_error=self.eps, interrogation=self.gt, dephasing=self.gamma)

    def thetas(self) -> np.ndarray:
        """Sweep angles in units of pi; a single ``theta`` wins outside ``sweep``."""
        if self.theta is not None and self.command != "sweep":
            return np.array([self.theta])
        if self.points == 1:
            return np.array([self.theta_min])
        return np.linspace(self.theta_min, self.theta_max, self.points)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command"}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(text: str) -> float:
    """Arithmetic with numbers and ``pi``, e.g. ``"pi/2"`` or ``"1.5e-3"``."""
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")
    try:
        return float(ev(ast.parse(str(text).strip(), mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse number {text!r}: {exc}") from None


def parse_vector(text: str) -> np.ndarray:
    parts = str(text).split(",")
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated components, got {text!r}")
    return np.array([parse_number(p) for p in parts])


def load_config_file(path: str) -> dict:
    """Read a YAML mapping, reporting unknown keys with their line numbers."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    out = {}
    for key, val in data.items():
        name = str(key).replace("-", "_")
        if name not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lines.get(key, '?')}: unknown field {key!r}")
        out[name] = val
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in _CONFIG_KEYS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    types = {f.name: f.type for f in fields(RunConfig)}
    clean = {}
    for name, val in values.items():
        if val is None:
            continue
        t = types[name]
        try:
            if "int" in str(t) and not isinstance(val, bool):
                clean[name] = int(val)
            elif "float" in str(t):
                clean[name] = parse_number(val) if isinstance(val, str) else float(val)
            else:
                clean[name] = str(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from None
    return RunConfig(command=args.command, **clean)


# --------------------------------------------------------------------------
# computations behind the subcommands

def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.17g}"


def sweep_row(cfg: RunConfig, theta_over_pi: float) -> tuple[float, ...]:
    """One ``SWEEP_COLUMNS`` row. Scaled columns are ``2 delta / eps`` (``eps=1`` if zero)."""
    eps = cfg.eps if cfg.eps != 0 else 1.0
    scale = 2.0 / eps
    geom = build_six_beam_lattice(theta_over_pi * math.pi, cfg.kappa)
    prof = DensityProfile.for_geometry(geom, cfg.mean_atoms, cfg.filling)
    params = RamseyParams(pulse_error=eps, interrogation=cfg.gt, dephasing=cfg.gamma)
    hist = pair_histogram(geom, prof)
    P = cfg.filling
    if P == 1.0:
        sites = enumerate_sites(geom, prof)
        sample = AtomSample.from_sites(sites)
    else:
        sample = sample_occupancy(enumerate_sites(geom, prof), P, cfg.seed)
    n_atoms = sample.n_atoms
    use_brute = cfg.method == "brute" or (cfg.method == "auto" and n_atoms <= BRUTE_MAX_ATOMS)
    first = math.nan
    if n_atoms == 0:
        zeroth = 0.0
    elif use_brute:
        res = shift_brute(sample, params, max_atoms=n_atoms if cfg.method == "brute" else BRUTE_MAX_ATOMS)
        zeroth, first = res.zeroth, res.first
    elif P == 1.0:
        zeroth = shift_restructured_perfect(geom, prof, eps, hist=hist).zeroth
    else:
        zeroth = shift_restructured_sample(sample, eps).zeroth
    mean = mean_shift_imperfect(geom, prof, eps, hist=hist)
    if P == 1.0:
        std = 0.0
    elif P <= _DIFFUSE_FILLING or hist.n_sites > _FULL_VARIANCE_SITES:
        std = math.sqrt(variance_diffuse(geom, prof, eps, hist=hist))
    else:
        std = math.sqrt(variance_full(geom, prof, eps, hist=hist))
    return (theta_over_pi, scale * zeroth, scale * first, scale * mean, scale * std)


def sweep_table(cfg: RunConfig) -> list[tuple[float, ...]]:
    thetas = cfg.thetas()
    if cfg.threads > 1 and len(thetas) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(lambda th: sweep_row(cfg, float(th)), thetas))
    return [sweep_row(cfg, float(th)) for th in thetas]


def _write_rows(cfg: RunConfig, header, rows, footer: str = "") -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, (int, np.integer)) else _fmt(v) for v in r])
    buf.write(footer)
    text = buf.getvalue()
    if cfg.out:
        try:
            with open(cfg.out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"out: cannot write {cfg.out}: {exc}") from None
    else:
        sys.stdout.write(text)


def cmd_sweep(cfg: RunConfig) -> None:
    _write_rows(cfg, SWEEP_COLUMNS, sweep_table(cfg))


def cmd_shift(cfg: RunConfig) -> None:
    theta = cfg.theta if cfg.theta is not None else cfg.theta_min
    _write_rows(cfg, SWEEP_COLUMNS, [sweep_row(cfg, theta)])


def cmd_variance(cfg: RunConfig) -> None:
    eps = cfg.eps if cfg.eps != 0 else 1.0
    rows = []
    for th in cfg.thetas():
        geom = build_six_beam_lattice(th * math.pi, cfg.kappa)
        prof = DensityProfile.for_geometry(geom, cfg.mean_atoms, cfg.filling)
        hist = pair_histogram(geom, prof)
        mean = mean_shift_imperfect(geom, prof, eps, hist=hist)
        diffuse = math.sqrt(variance_diffuse(geom, prof, eps, hist=hist)) if cfg.filling < 1 else 0.0
        full = math.nan
        if hist.n_sites <= _FULL_VARIANCE_SITES:
            full = math.sqrt(variance_full(geom, prof, eps, hist=hist))
        rows.append((float(th), 2 * mean / eps, 2 * diffuse / eps, 2 * full / eps))
    _write_rows(cfg, VARIANCE_COLUMNS, rows)


def cmd_resonances(cfg: RunConfig) -> None:
    sols = find_resonant_angles(cfg.kappa, (cfg.theta_min * math.pi, cfg.theta_max * math.pi), cfg.max_index)
    rows = [(s.n[0], s.n[1], s.n[2], s.theta_over_pi, s.residual) for s in sols]
    _write_rows(cfg, RESONANCE_COLUMNS, rows)


def _oracle_sample(cfg: RunConfig) -> AtomSample:
    if cfg.positions:
        pos = np.array([parse_vector(p) for p in cfg.positions.split(";") if p.strip()])
    else:
        sep = parse_vector(cfg.sep or "0,0,pi")
        n = 2 if cfg.n is None else int(cfg.n)
        pos = np.arange(n)[:, None] * sep[None, :]
    if len(pos) > N_MAX:
        raise CapacityError(f"oracle limited to {N_MAX} atoms (got {len(pos)})")
    return AtomSample(positions=pos)


def cmd_oracle(cfg: RunConfig) -> None:
    sample = _oracle_sample(cfg)
    params = cfg.params
    if not params.interrogation > 0:
        raise ConfigError("gt: the oracle needs a positive interrogation time")
    closed = shift_brute(sample, params).total
    oracle = oracle_peak_shift(sample, params)
    rel = abs(oracle - closed) / abs(oracle) if oracle != 0 else math.inf
    span = math.pi / params.interrogation
    grid = np.linspace(-span, span, cfg.delta_points)
    curve = ramsey_experiment(sample, params, grid).effective
    footer = f"# eq18={closed:.17g} oracle={oracle:.17g} rel_err={rel:.6g}\n"
    if cfg.out:
        write_signal_csv(cfg.out, curve, peak=oracle)
        with open(cfg.out, "a") as fh:
            fh.write(footer)
    else:
        buf = io.StringIO()
        buf.write("delta_over_gamma,signal\n")
        for d, s in zip(curve.detuning, curve.signal):
            buf.write(f"{d:.17g},{s:.17g}\n")
        buf.write(f"# delta_p_over_gamma={oracle:.17g}\n")
        sys.stdout.write(buf.getvalue())
    sys.stdout.write(footer)


def cmd_kernels(cfg: RunConfig) -> None:
    if not cfg.v:
        raise ConfigError("v: give a separation vector, e.g. --v 0,0,pi")
    v = parse_vector(cfg.v)
    f, g = f_and_g(v)
    sys.stdout.write(f"f={f:.17g}\ng={g:.17g}\nU={pair_energy(v):.17g}\nD={quadrature_coupling(v):.17g}\n")


def cmd_sites(cfg: RunConfig) -> None:
    theta = cfg.theta if cfg.theta is not None else 0.125
    geom = build_six_beam_lattice(theta * math.pi, cfg.kappa)
    prof = DensityProfile.for_geometry(geom, cfg.mean_atoms, cfg.filling)
    sample = sample_occupancy(enumerate_sites(geom, prof), cfg.filling, cfg.seed)
    if cfg.out:
        write_sites_csv(cfg.out, sample.indices, geom)
    else:
        buf = io.StringIO()
        buf.write("ix,iy,iz,x,y,z\n")
        for i, r in zip(sample.indices, sample.positions):
            buf.write(f"{i[0]},{i[1]},{i[2]},{r[0]:.17g},{r[1]:.17g},{r[2]:.17g}\n")
        sys.stdout.write(buf.getvalue())


COMMANDS = {"sweep": cmd_sweep, "shift": cmd_shift, "variance": cmd_variance,
            "resonances": cmd_resonances, "oracle": cmd_oracle, "kernels": cmd_kernels, "sites": cmd_sites}


class _Parser(argparse.ArgumentParser):
    """Argument errors are user errors: exit 1 with the config category."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"error[config]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with option values; flags override it")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--seed", type=int, help="occupancy RNG seed (Philox)")
    common.add_argument("--threads", type=int, help="worker threads for sweeps")
    common.add_argument("--kappa", type=parse_number, help="k0/k_L (default 1.07)")

    lattice = argparse.ArgumentParser(add_help=False)
    lattice.add_argument("--n", type=parse_number, help="mean atom number <N>")
    lattice.add_argument("--filling", type=parse_number, help="filling fraction P")
    lattice.add_argument("--eps", type=parse_number, help="pulse error cos(2 Omega tau)")
    lattice.add_argument("--gt", type=parse_number, help="interrogation time Gamma t")
    lattice.add_argument("--gamma", type=parse_number, help="dephasing gamma/Gamma")
    lattice.add_argument("--method", choices=("auto", "brute", "restructured"))

    angles = argparse.ArgumentParser(add_help=False)
    angles.add_argument("--theta-min", dest="theta_min", type=parse_number, help="sweep start (units of pi)")
    angles.add_argument("--theta-max", dest="theta_max", type=parse_number, help="sweep end (units of pi)")
    angles.add_argument("--points", type=int, help="number of sweep angles")

    single = argparse.ArgumentParser(add_help=False)
    single.add_argument("--theta", type=parse_number, help="beam angle (units of pi)")

    p = _Parser(prog="latticeshift", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common, lattice, angles], help="shift versus beam angle")
    sub.add_parser("shift", parents=[common, lattice, single], help="shift at one angle")
    sub.add_parser("variance", parents=[common, lattice, angles, single], help="ensemble mean and spread")
    r = sub.add_parser("resonances", parents=[common, angles], help="resonant beam angles")
    r.add_argument("--max-index", dest="max_index", type=int, help="bound on |n_i| (default 4)")
    o = sub.add_parser("oracle", parents=[common], help="exact few-atom check of the shift formula")
    o.add_argument("--n", type=parse_number, help="number of atoms in a chain (default 2)")
    o.add_argument("--sep", help="chain spacing vector, e.g. 0,0,pi")
    o.add_argument("--positions", help="explicit positions 'x,y,z;x,y,z;...'")
    o.add_argument("--eps", type=parse_number)
    o.add_argument("--gt", type=parse_number)
    o.add_argument("--gamma", type=parse_number)
    o.add_argument("--delta-points", dest="delta_points", type=int, help="detuning grid size")
    k = sub.add_parser("kernels", help="print f, g, U and D for one separation")
    k.add_argument("--v", required=True, help="separation k0*r as x,y,z")
    s = sub.add_parser("sites", parents=[common, single], help="list occupied sites as CSV")
    s.add_argument("--n", type=parse_number)
    s.add_argument("--filling", type=parse_number)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        COMMANDS[cfg.command](cfg)
    except LatticeShiftError as exc:
        sys.stderr.write(f"error[{exc.category}]: {exc}\n")
        return EXIT_USER if exc.category in ("config", "domain") else EXIT_NUMERIC
    except ArithmeticError as exc:
        sys.stderr.write(f"error[numeric]: {exc}\n")
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
