"""Command-line front end: ``classify``, ``echo``, ``sweep`` and ``extract``.

Exit codes: 0 success, 2 invalid parameters or input, 3 point on a phase
boundary, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .errors import (
    CutoffTooSmall,
    DickeLabError,
    InvalidParams,
    MalformedCSV,
    OnBoundary,
    UnsupportedParams,
)
from .extraction import extract
from .model import PRESETS, ModelParams, classify_phase, effective_frequencies, region_kinds
from .sweep import ENGINES, SweepConfig, atomic_write, echo_csv, echo_run, read_echo_csv, run_sweep, sweep_csv

EXIT_OK, EXIT_INVALID, EXIT_BOUNDARY, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("dicke_phase_lab")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, OnBoundary):
        return EXIT_BOUNDARY
    if isinstance(exc, (InvalidParams, UnsupportedParams, CutoffTooSmall, MalformedCSV)):
        return EXIT_INVALID
    return EXIT_NUMERIC


def parse_point(text: str) -> tuple[str, float, float]:
    """A preset name (``a``..``d``) or ``g1,g2`` in units of omega."""
    if text in PRESETS:
        return (text, *PRESETS[text])
    try:
        g1, g2 = (float(x) for x in text.split(","))
    except ValueError:
        raise InvalidParams(f"point must be one of {sorted(PRESETS)} or 'g1,g2', got {text!r}") from None
    return text, g1, g2


def _emit(text: str, output: Optional[str]) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(output, text)


def cmd_classify(args) -> int:
    params = ModelParams(omega=args.omega, g1=args.g1 * args.omega, g2=args.g2 * args.omega)
    region = classify_phase(params)
    if region.on_boundary:
        print(str(region))
        raise OnBoundary(region.boundary_detail)
    w1, w2 = effective_frequencies(params)
    kinds = ",".join(k.value for k in region_kinds(region.tag))
    print(f"{region.tag.value}  Ω1={w1:.6f} Ω2={w2:.6f} kinds={kinds}")
    return EXIT_OK


def cmd_echo(args) -> int:
    name, g1, g2 = parse_point(args.point)
    params = ModelParams(omega=args.omega, g1=g1 * args.omega, g2=g2 * args.omega, n_atoms=args.n_atoms)
    series, overlay, validity = echo_run(params, args.engine, args.horizon, args.dt, args.n_max,
                                         check=not args.no_check)
    meta = [f"point={name} g1={g1:g} g2={g2:g} omega={args.omega:g} engine={args.engine}"]
    if args.engine != "analytic":
        meta.append(f"n_atoms={args.n_atoms} n_max={args.n_max}")
    if validity is not None:
        size = "" if validity.size_horizon is None else f" t_n={validity.size_horizon:g}"
        meta.append(f"t_star={validity.cutoff_horizon:g}{size}")
    _emit(echo_csv(series, overlay, meta), args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = SweepConfig.load(args.config)
    overrides = {k: v for k, v in (("workers", args.workers), ("output", args.output)) if v is not None}
    if overrides:
        config = SweepConfig(**{**config.__dict__, **overrides})
    rows = run_sweep(config)
    _emit(sweep_csv(rows), config.output)
    failed = sum(r["status"].startswith("error") for r in rows)
    if failed:
        log.warning("%d of %d points failed", failed, len(rows))
    return EXIT_OK


def cmd_extract(args) -> int:
    try:
        with open(args.csv, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise MalformedCSV(f"cannot read {args.csv}: {exc}") from None
    obs = extract(read_echo_csv(text)).observables

    def fmt(x):
        return "" if x is None else f"{x:.6f}"

    print(f"lambda={obs.lam:.6f} f={obs.f:.6f} f1={fmt(obs.f1)} f2={fmt(obs.f2)} "
          f"balance={obs.balance:.6f} behavior={obs.behavior}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dicke-phase-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="phase region, mode frequencies and oscillator kinds")
    c.add_argument("g1", type=float, help="rotating coupling in units of omega")
    c.add_argument("g2", type=float, help="counter-rotating coupling in units of omega")
    c.add_argument("--omega", type=float, default=1.0)
    c.set_defaults(func=cmd_classify)

    e = sub.add_parser("echo", help="Loschmidt echo time series as CSV")
    e.add_argument("point", help="preset a-d or 'g1,g2' (units of omega)")
    e.add_argument("--engine", choices=ENGINES, default="analytic")
    e.add_argument("--horizon", type=float, default=20.0, help="final time in units of 1/omega")
    e.add_argument("--dt", type=float, default=0.01)
    e.add_argument("--omega", type=float, default=1.0)
    e.add_argument("--n-atoms", type=int, default=100)
    e.add_argument("--n-max", type=int, default=140)
    e.add_argument("--no-check", action="store_true",
                   help="skip the convergence companion runs (no validity flags)")
    e.add_argument("-o", "--output", help="CSV path (default: stdout)")
    e.set_defaults(func=cmd_echo)

    s = sub.add_parser("sweep", help="grid sweep driven by a config file")
    s.add_argument("config")
    s.add_argument("--workers", type=int)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sweep)

    x = sub.add_parser("extract", help="decay rate and frequencies from an echo CSV")
    x.add_argument("csv")
    x.set_defaults(func=cmd_extract)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except DickeLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
