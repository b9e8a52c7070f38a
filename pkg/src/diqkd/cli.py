"""Command-line front end.

Commands::

    keyrate    one operating point
    sweep      1-D scan of one parameter
    boundary   largest t_m/tau with a positive key rate, per kappa/kappa_s
    grid       kappa/kappa_s x t_m/tau cartesian grid

Rows go to ``--out`` (default stdout) as CSV; a summary goes to stderr.
Distances in km, times in seconds, rates in Hz.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .cavity import CavityParams
from .protocol import VARIANTS, ProtocolConfig, decoherence_boundary, evaluate

COLUMNS = (
    "variant", "strategy", "kappa_ratio", "t_over_tau", "L_km", "eta_her", "eta_d",
    "p_opt", "p_herald", "mu", "S", "Q", "R", "key_per_use", "key_per_second",
)
BOUNDARY_COLUMNS = ("variant", "strategy", "eta_her", "eta_d", "kappa_ratio", "t_over_tau_max")
SWEEP_PARAMS = ("L", "t_over_tau", "kappa_ratio", "eta_her", "eta_d", "p")
STRATEGY_FLAGS = {"free": "communication_free", "adaptive": "adaptive", "auto": "auto"}
NOCLICK_FLAGS = {"assign": "assign_plus", "discard": "discard"}


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    return "%.12g" % x


# -- argument types ---------------------------------------------------------

def _number(lo: float = -math.inf, hi: float = math.inf, lo_open: bool = False) -> Callable:
    def convert(text: str) -> float:
        try:
            x = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if math.isnan(x) or x > hi or x < lo or (lo_open and x == lo):
            left = "(" if lo_open else "["
            raise argparse.ArgumentTypeError(f"must lie in {left}{lo:g}, {hi:g}], got {text}")
        return x
    return convert


def _p_value(text: str):
    if text == "auto":
        return None
    return _number(0.0, 0.5)(text)


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


@dataclass(frozen=True)
class SweepSpec:
    """Grid over one parameter: ``steps >= 2`` points from ``start`` to
    ``stop`` on a linear or logarithmic scale."""

    name: str
    start: float
    stop: float
    steps: int
    scale: str = "linear"

    def __post_init__(self):
        if self.name not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.name!r}; choose from {SWEEP_PARAMS}")
        if self.steps < 2:
            raise ValueError(f"steps must be >= 2, got {self.steps}")
        if not self.start < self.stop:
            raise ValueError(f"need from < to, got {self.start:g} >= {self.stop:g}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"scale must be linear or log, got {self.scale!r}")
        if self.scale == "log" and self.start <= 0:
            raise ValueError("log scale needs positive endpoints")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.steps)
        return np.linspace(self.start, self.stop, self.steps)


def _range(name: str) -> Callable:
    """Parse ``FROM:TO:STEPS[:linear|log]`` into a SweepSpec for ``name``."""
    def convert(text: str) -> SweepSpec:
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise argparse.ArgumentTypeError(f"expected FROM:TO:STEPS[:SCALE], got {text!r}")
        try:
            start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
            return SweepSpec(name, start, stop, steps, parts[3] if len(parts) == 4 else "linear")
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return convert


# -- parser ----------------------------------------------------------------

def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("model")
    g.add_argument("--variant", choices=VARIANTS, default="symmetric")
    g.add_argument("--strategy", choices=tuple(STRATEGY_FLAGS), default="free",
                   help="symmetric only; asymmetric is always communication-free")
    g.add_argument("--kappa-ratio", type=_number(0, lo_open=True), default=6.0,
                   help="cavity outcoupling over loss rate kappa/kappa_s")
    g.add_argument("--t-over-tau", type=_number(0), default=None,
                   help="readout time over spin coherence time (default 0.01)")
    g.add_argument("--tau-s", type=_number(0, lo_open=True), default=1e-3, help="spin coherence time [s]")
    g.add_argument("--tm-s", type=_number(0), default=None, help="readout time [s] (default 1e-5)")
    g.add_argument("--L", type=_number(0), default=0.0, help="Alice-Bob distance [km]")
    g.add_argument("--Latt", type=_number(0, lo_open=True), default=22.0, help="fibre attenuation length [km]")
    g.add_argument("--eta-her", type=_number(0, 1), default=1.0, help="heralding detection efficiency")
    g.add_argument("--eta-d", type=_number(0, 1), default=1.0, help="Alice's detection efficiency")
    g.add_argument("--p", type=_p_value, default=None, metavar="{auto,VALUE}",
                   help="pair probability per source use, or auto to optimise (default)")
    g.add_argument("--order", type=int, choices=(1, 2), default=2, help="maximum number of pairs kept")
    g.add_argument("--rep-rate", type=_number(0), default=1e8, help="source repetition rate [Hz]")
    g.add_argument("--c-signal", type=_number(0, lo_open=True), default=2e5,
                   help="classical signal speed [km/s]")
    g.add_argument("--noclick", choices=tuple(NOCLICK_FLAGS), default="assign",
                   help="asymmetric: assign Alice's no-clicks to +1 or discard them from Q")
    o = parser.add_argument_group("output")
    o.add_argument("--out", default="-", help="CSV destination, '-' for stdout")
    o.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    o.add_argument("--config", default=None, help="key = value file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diqkd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keyrate", help="evaluate one operating point")
    _common(p)

    p = sub.add_parser("sweep", help="scan one parameter")
    _common(p)
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--range", dest="span", required=True, metavar="FROM:TO:STEPS[:SCALE]")

    p = sub.add_parser("boundary", help="positive-rate boundary in t_m/tau per kappa/kappa_s")
    _common(p)
    p.add_argument("--kappa-range", type=_range("kappa_ratio"), required=True, metavar="FROM:TO:STEPS[:SCALE]")

    p = sub.add_parser("grid", help="kappa/kappa_s x t_m/tau grid")
    _common(p)
    p.add_argument("--kappa-range", type=_range("kappa_ratio"), required=True, metavar="FROM:TO:STEPS[:SCALE]")
    p.add_argument("--t-range", type=_range("t_over_tau"), required=True, metavar="FROM:TO:STEPS[:SCALE]")
    return parser


def read_config(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment, keys may use - or _."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (x.strip() for x in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        entries = read_config(args.config)
    except (OSError, ValueError) as exc:
        parser.error(f"argument --config: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, text in entries.items():
        action = actions.get(key)
        if action is None:
            parser.error(f"argument --config: unknown key {key!r}")
        flag = action.option_strings[-1] if action.option_strings else key
        try:
            value = action.type(text) if action.type else text
        except argparse.ArgumentTypeError as exc:
            parser.error(f"argument {flag} (from --config): {exc}")
        if action.choices is not None and value not in action.choices:
            parser.error(f"argument {flag} (from --config): invalid choice {value!r}")
        defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def config_from_args(args: argparse.Namespace, parser: argparse.ArgumentParser) -> ProtocolConfig:
    if args.t_over_tau is not None and args.tm_s is not None:
        parser.error("argument --t-over-tau: give either --t-over-tau or --tm-s, not both")
    if args.tm_s is not None:
        t_m = args.tm_s
    else:
        t_m = (0.01 if args.t_over_tau is None else args.t_over_tau) * args.tau_s
    return ProtocolConfig(
        variant=args.variant,
        strategy=STRATEGY_FLAGS[args.strategy],
        cavity=CavityParams(args.kappa_ratio),
        p=args.p,
        order=args.order,
        L=args.L,
        L_att=args.Latt,
        eta_her=args.eta_her,
        eta_d=args.eta_d,
        t_m=t_m,
        tau=args.tau_s,
        c_signal=args.c_signal,
        rep_rate=args.rep_rate,
        noclick_mode=NOCLICK_FLAGS[args.noclick],
    )


# -- evaluation --------------------------------------------------------------

def result_row(cfg: ProtocolConfig) -> list:
    p, res = evaluate(cfg)
    return [
        cfg.variant, res.strategy, cfg.cavity.kappa_ratio, cfg.t_over_tau, cfg.L, cfg.eta_her, cfg.eta_d,
        p, res.p_herald, res.mu, res.S, res.Q, res.R, res.key_per_use, res.key_per_second,
    ]


def boundary_row(cfg: ProtocolConfig) -> list:
    return [cfg.variant, cfg.strategy, cfg.eta_her, cfg.eta_d, cfg.cavity.kappa_ratio, decoherence_boundary(cfg)]


def _run(fn: Callable, configs: list, jobs: int) -> list:
    if jobs <= 1 or len(configs) <= 1:
        return [fn(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, configs))


def render_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    return buf.getvalue()


def _sweep_config(cfg: ProtocolConfig, name: str, value: float) -> ProtocolConfig:
    value = float(value)
    if name == "eta_her" or name == "eta_d":
        if not 0 <= value <= 1:
            raise ValueError(f"{name} value {value:g} outside [0, 1]")
    return cfg.replace(**{name: value})


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _summary(rows: list) -> str:
    if len(rows) == 1:
        return "\n".join(f"{k:>15}: {fmt(v)}" for k, v in zip(COLUMNS, rows[0]))
    kps = [r[-1] for r in rows]
    best = int(np.argmax(kps))
    return f"{len(rows)} points, {sum(k > 0 for k in kps)} with positive key; best {fmt(kps[best])} bits/s at row {best + 1}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
    try:
        cfg = config_from_args(args, parser)
    except ValueError as exc:
        parser.error(str(exc))

    try:
        if args.command == "keyrate":
            rows = [result_row(cfg)]
            header = COLUMNS
        elif args.command == "sweep":
            try:
                spec = _range(args.param)(args.span)
            except argparse.ArgumentTypeError as exc:
                parser.error(f"argument --range: {exc}")
            configs = [_sweep_config(cfg, spec.name, x) for x in spec.values()]
            rows = _run(result_row, configs, args.jobs)
            header = COLUMNS
        elif args.command == "boundary":
            configs = [cfg.replace(kappa_ratio=float(k)) for k in args.kappa_range.values()]
            rows = _run(boundary_row, configs, args.jobs)
            header = BOUNDARY_COLUMNS
        else:
            configs = [
                cfg.replace(kappa_ratio=float(k), t_over_tau=float(t))
                for k, t in itertools.product(args.kappa_range.values(), args.t_range.values())
            ]
            rows = _run(result_row, configs, args.jobs)
            header = COLUMNS
    except ValueError as exc:
        parser.error(str(exc))

    _emit(render_csv(header, rows), args.out)
    if args.command == "boundary":
        found = [r for r in rows if r[-1] is not None]
        print(f"{len(rows)} kappa values, boundary found for {len(found)}", file=sys.stderr)
    else:
        print(_summary(rows), file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
