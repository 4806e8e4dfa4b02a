"""Grid sweeps over the coupling plane and the versioned CSV formats.

Config files are INI-style with a single ``[sweep]`` section::

    [sweep]
    g1_start = 0.0
    g1_stop = 2.0
    g1_step = 0.0125
    g2_start = 0.0
    g2_stop = 2.0
    g2_step = 0.0125
    omega = 1.0
    n_atoms = 100
    n_max = 140
    horizon = 20.0
    dt = 0.01
    engine = analytic
    workers = 1
    output = sweep.csv

Every key is optional (defaults as above) and unknown keys are rejected.
Couplings are given in units of omega, times in units of 1/omega.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .echo import (
    EchoSeries,
    Provenance,
    analytic_observables,
    analytic_series,
    log_derivative,
    time_grid,
)
from .errors import DickeLabError, InvalidParams, MalformedCSV
from .extraction import extract
from .model import ModelParams, classify_phase
from .quench import BasisSpec, Validity, run_quench, validated_run

FORMAT_TAG = "# dicke-phase-lab v1"
ENGINES = ("analytic", "effective", "finite")
SWEEP_COLUMNS = ("g1", "g2", "region", "lambda", "f", "f1", "f2", "t_star", "engine", "status")


@dataclass(frozen=True)
class SweepConfig:
    g1_start: float = 0.0
    g1_stop: float = 2.0
    g1_step: float = 0.0125
    g2_start: float = 0.0
    g2_stop: float = 2.0
    g2_step: float = 0.0125
    omega: float = 1.0
    n_atoms: int = 100
    n_max: int = 140
    horizon: float = 20.0
    dt: float = 0.01
    engine: str = "analytic"
    workers: int = 1
    output: str = "sweep.csv"

    def __post_init__(self):
        for axis in ("g1", "g2"):
            start, stop, step = (getattr(self, f"{axis}_{k}") for k in ("start", "stop", "step"))
            if not step > 0:
                raise InvalidParams(f"{axis}_step must be positive")
            if start < 0 or stop < start:
                raise InvalidParams(f"{axis} range must satisfy 0 <= start <= stop")
        if not self.omega > 0:
            raise InvalidParams("omega must be positive")
        if not (self.horizon > 0 and self.dt > 0 and self.dt <= self.horizon):
            raise InvalidParams("need 0 < dt <= horizon")
        if self.engine not in ENGINES:
            raise InvalidParams(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.n_atoms < 1 or self.n_max < 1:
            raise InvalidParams("n_atoms and n_max must be >= 1")
        if self.workers < 1:
            raise InvalidParams("workers must be >= 1")

    @staticmethod
    def axis(start: float, stop: float, step: float) -> np.ndarray:
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return np.round(start + step * np.arange(count), 12)

    def points(self) -> list[tuple[float, float]]:
        """Grid points in row-major order (g1 outer, g2 inner)."""
        g1s = self.axis(self.g1_start, self.g1_stop, self.g1_step)
        g2s = self.axis(self.g2_start, self.g2_stop, self.g2_step)
        return [(float(a), float(b)) for a in g1s for b in g2s]

    def to_text(self) -> str:
        out = io.StringIO()
        parser = configparser.ConfigParser()
        parser["sweep"] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in asdict(self).items()}
        parser.write(out)
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "SweepConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise InvalidParams(f"unreadable config: {exc}") from None
        extra = set(parser.sections()) - {"sweep"}
        if extra:
            raise InvalidParams(f"unknown config sections: {sorted(extra)}")
        if not parser.has_section("sweep"):
            return cls()
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in parser["sweep"].items():
            if key not in types:
                raise InvalidParams(f"unknown config key {key!r}")
            kind = {"float": float, "int": int, "str": str}[types[key]]
            try:
                values[key] = kind(raw.strip())
            except ValueError:
                raise InvalidParams(f"bad value for {key}: {raw!r}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str) -> "SweepConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InvalidParams(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.10g}"


def evaluate_point(config: SweepConfig, g1: float, g2: float) -> dict:
    """Observables of one grid point; failures are reported in ``status``."""
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row.update(g1=_fmt(g1), g2=_fmt(g2), engine=config.engine)
    params = ModelParams(omega=config.omega, g1=g1 * config.omega, g2=g2 * config.omega,
                         n_atoms=config.n_atoms)
    region = classify_phase(params)
    row["region"] = region.tag.value
    if region.on_boundary:
        row["status"] = "boundary"
        return row
    try:
        if config.engine == "analytic":
            obs = analytic_observables(params)
            t_star = config.horizon
        else:
            mode_count = 1 if config.engine == "finite" else 2
            spec = BasisSpec(config.n_atoms, config.n_max, mode_count)
            series, validity = validated_run(params, spec, time_grid(config.horizon, config.dt))
            obs = extract(series).observables
            t_star = validity.horizon
    except DickeLabError as exc:
        row["status"] = f"error: {type(exc).__name__}"
        return row
    row.update({"lambda": _fmt(obs.lam), "f": _fmt(obs.f), "f1": _fmt(obs.f1), "f2": _fmt(obs.f2),
                "t_star": _fmt(t_star), "status": "ok"})
    return row


def _evaluate(args):
    return evaluate_point(*args)


def run_sweep(config: SweepConfig) -> list[dict]:
    """Evaluate every grid point; row order is independent of ``workers``."""
    jobs = [(config, g1, g2) for g1, g2 in config.points()]
    if config.workers == 1:
        return [_evaluate(j) for j in jobs]
    chunk = max(1, len(jobs) // (8 * config.workers))
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_evaluate, jobs, chunksize=chunk))


def atomic_write(path: str, text: str) -> None:
    """Write via a temporary file in the same directory and rename it into place."""
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns: Sequence[str], rows: Iterable[Sequence], meta: Sequence[str] = ()) -> str:
    out = io.StringIO()
    out.write(FORMAT_TAG + "\n")
    for line in meta:
        out.write(f"# {line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return out.getvalue()


def sweep_csv(rows: Sequence[dict]) -> str:
    return _csv_text(SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows))


def read_sweep_csv(text: str) -> list[dict]:
    columns, body, _ = _parse(text)
    if tuple(columns) != SWEEP_COLUMNS:
        raise MalformedCSV(f"unexpected sweep columns {columns}")
    return [dict(zip(columns, r)) for r in body]


# -- echo CSV ----------------------------------------------------------------

def echo_csv(series: EchoSeries, overlay: Optional[EchoSeries] = None, meta: Sequence[str] = ()) -> str:
    """CSV with columns ``t, L, D, valid`` (+ ``L_analytic, D_analytic`` with an overlay).

    The series provenance is recorded in a ``provenance=`` comment line.
    """
    meta = [f"provenance={series.provenance.value}", *meta]
    d = log_derivative(series, strict=False)
    columns = ["t", "L", "D", "valid"]
    cols = [series.times, series.values, d, series.valid.astype(int)]
    if overlay is not None:
        columns += ["L_analytic", "D_analytic"]
        cols += [overlay.values, log_derivative(overlay, strict=False)]
    rows = ([_fmt(float(x)) if not isinstance(x, (np.integer, int)) else str(int(x)) for x in row]
            for row in zip(*cols))
    return _csv_text(columns, rows, meta)


def _parse(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_TAG:
        raise MalformedCSV(f"missing header line {FORMAT_TAG!r}")
    meta = [ln[1:].strip() for ln in lines[1:] if ln.startswith("#")]
    data = [ln for ln in lines[1:] if not ln.startswith("#")]
    reader = csv.reader(data)
    try:
        columns = next(reader)
    except StopIteration:
        raise MalformedCSV("no column header") from None
    body = list(reader)
    if any(len(r) != len(columns) for r in body):
        raise MalformedCSV("ragged rows")
    return columns, body, meta


def read_echo_csv(text: str) -> EchoSeries:
    """Parse an echo CSV back into an :class:`EchoSeries` (times, L, validity)."""
    columns, body, meta = _parse(text)
    if columns[:2] != ["t", "L"]:
        raise MalformedCSV(f"expected leading columns t, L; got {columns[:2]}")
    if not body:
        raise MalformedCSV("no data rows")
    try:
        t = np.array([float(r[0]) for r in body])
        values = np.array([float(r[1]) for r in body])
        valid = None
        if "valid" in columns:
            k = columns.index("valid")
            valid = np.array([int(r[k]) for r in body], dtype=bool)
    except ValueError as exc:
        raise MalformedCSV(f"non-numeric entry: {exc}") from None
    provenance = Provenance.ANALYTIC
    for line in meta:
        if line.startswith("provenance="):
            provenance = Provenance(line.split("=", 1)[1])
    try:
        return EchoSeries(t, values, provenance, valid)
    except ValueError as exc:
        raise MalformedCSV(str(exc)) from None


def echo_run(params: ModelParams, engine: str, horizon: float, dt: float, n_max: int = 140,
             check: bool = True) -> tuple[EchoSeries, Optional[EchoSeries], Optional[Validity]]:
    """Echo of one point with the chosen engine.

    Returns ``(series, overlay, validity)``; the overlay is the analytic echo
    (finite engine only) and ``validity`` is None for the analytic engine or
    when ``check`` is off.
    """
    if engine not in ENGINES:
        raise InvalidParams(f"engine must be one of {ENGINES}, got {engine!r}")
    grid = time_grid(horizon, dt)
    if engine == "analytic":
        return analytic_series(params, grid), None, None
    spec = BasisSpec(params.n_atoms, n_max, 1 if engine == "finite" else 2)
    if check:
        series, validity = validated_run(params, spec, grid)
    else:
        series, validity = run_quench(params, spec, grid), None
    overlay = None
    if engine == "finite" and params.resonant and not classify_phase(params).on_boundary:
        overlay = analytic_series(params, grid)
    return series, overlay, validity
