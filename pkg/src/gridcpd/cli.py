"""Command-line front end: ``gridcpd monitor|calibrate|simulate|bench|grid``.

Every detector/experiment option can also come from a flat ``key=value``
config file (``--config``); flags given on the command line win.  Exit codes:
0 on success, 2 for bad input or configuration, 1 for numerical or internal
failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence, TextIO

import numpy as np

from gridcpd import __version__
from gridcpd.calibration import CalibrationReport, CalibrationSpec, calibrate
from gridcpd.detectors import DetectorConfig, OnlineDetector
from gridcpd.errors import ChangepointError, ConfigError, DomainError, ParseError
from gridcpd.grid import dynamic_grid, static_grid
from gridcpd.kernels import sym_opnorm
from gridcpd.simharness import StreamSpec, benchmark_costs, estimate_delay

__all__ = ["main", "parse_rows", "preprocess", "read_config"]

PREPROCESS_STEPS = ("none", "baseline_normalize", "first_difference")


# ---------------------------------------------------------------------------
# input plumbing


def parse_rows(reader: Iterable[str], delimiter: str = ",", header: bool = False, id_col: Optional[int] = None):
    """Yield ``(row_number, identifier, vector)`` for each data line.

    Row numbers count data rows from 1 (the header and blank lines are not
    counted).  ``id_col`` names a column passed through untouched.
    """
    width = None
    row = 0
    skipped_header = not header
    for line_no, line in enumerate(reader, start=1):
        text = line.rstrip("\r\n")
        if not text.strip():
            continue
        if not skipped_header:
            skipped_header = True
            continue
        fields = next(csv.reader([text], delimiter=delimiter))
        ident = None
        if id_col is not None:
            if id_col >= len(fields):
                raise ParseError(f"id column {id_col} missing", line_no)
            ident = fields[id_col]
        values = []
        for col, field in enumerate(fields, start=1):
            if col - 1 == id_col:
                continue
            try:
                value = float(field)
            except ValueError:
                raise ParseError(f"not a number: {field!r}", line_no, col) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite value {field!r}", line_no, col)
            values.append(value)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"expected {width} numeric fields, found {len(values)}", line_no)
        row += 1
        yield row, ident, np.asarray(values)


def _pipeline(records: Iterable[tuple], steps: Sequence[str]) -> Iterator[tuple]:
    for step in steps:
        if step not in PREPROCESS_STEPS:
            raise ConfigError(f"unknown preprocessing step {step!r}; choose from {PREPROCESS_STEPS}")
    out: Iterable[tuple] = records
    for step in steps:
        if step == "baseline_normalize":
            out = _normalize(out)
        elif step == "first_difference":
            out = _difference(out)
    return iter(out)


def _normalize(records):
    base = None
    for meta, vec in records:
        if base is None:
            if np.any(vec == 0):
                raise DomainError("baseline_normalize: first observation has a zero entry")
            base = vec
        yield meta, vec / base


def _difference(records):
    prev = None
    for meta, vec in records:
        if prev is not None:
            yield meta, vec - prev
        prev = vec


def preprocess(rows: Iterable, steps: Sequence[str]) -> Iterator[np.ndarray]:
    """Apply preprocessing steps in the given order.

    >>> [r.tolist() for r in preprocess([[2.0, 4.0], [4.0, 8.0]], ["baseline_normalize"])]
    [[1.0, 1.0], [2.0, 2.0]]
    >>> [r.tolist() for r in preprocess([[1.0], [3.0], [6.0]], ["first_difference"])]
    [[2.0], [3.0]]
    """
    records = ((None, np.asarray(r, dtype=np.float64)) for r in rows)
    for _, vec in _pipeline(records, steps):
        yield vec


# ---------------------------------------------------------------------------
# options and config files


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _floats(text) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


@dataclass(frozen=True)
class Option:
    name: str
    kind: Callable
    default: object = None
    help: str = ""


DETECTOR_OPTIONS = [
    Option("kind", str, None, "uni_mean, chad_mean, cov_opnorm or poisson_rate"),
    Option("p", int, None, "dimension (monitor infers it from the data)"),
    Option("delta", float, 0.05, "false-alarm level in the theory-mode threshold"),
    Option("lam", float, 1.0, "leading critical constant"),
    Option("lam1", float, None, "CHAD dense-branch constant (calibrated mode)"),
    Option("lam2", float, None, "CHAD sparse-branch constant (calibrated mode)"),
    Option("sigma", float, 1.0, "noise scale for the mean detectors"),
    Option("mode", str, "theory", "theory or calibrated"),
    Option("known_pre_mean", _bool, False, "pre-change mean is known to be zero"),
    Option("grid", str, "dynamic", "dynamic, static or full"),
    Option("horizon_cap", int, None, "required with grid=full"),
    Option("sigma_cov_fixed", float, None, "fixed noise level for cov_opnorm"),
    Option("detector_id", str, None, "name used in alarm records"),
    Option("calibration", str, None, "calibration report (JSON) whose constants to use"),
]

COMMAND_OPTIONS = {
    "monitor": [
        Option("delimiter", str, ","),
        Option("header", _bool, False, "first non-blank line is a header"),
        Option("preprocess", str, "none", "comma-separated steps, applied in order"),
        Option("training_prefix", int, None, "rows used to estimate the noise level"),
        Option("auto_reset", _bool, False, "restart the detector after each alarm"),
        Option("output", str, None, "alarm file (default stdout)"),
        Option("id_col", int, None, "0-based column passed through as the alarm id"),
    ],
    "calibrate": [
        Option("N", int, 1000, "horizon"),
        Option("K", int, 1000, "null replications"),
        Option("alpha", float, 0.05, "target false-alarm probability"),
        Option("seed", int, 0),
        Option("threads", int, 1),
        Option("output", str, None),
    ],
    "simulate": [
        Option("stream_kind", str, None, "gauss_mean, gauss_cov or poisson (default from kind)"),
        Option("N", int, 1000),
        Option("tau", int, None, "changepoint (omit for null runs)"),
        Option("phi", _floats, [0.0], "comma-separated change magnitudes"),
        Option("k", int, 1, "number of shifted coordinates"),
        Option("noise", float, 1.0, "noise standard deviation of gauss_mean streams"),
        Option("cov_scale", float, None, "post-change covariance multiplier"),
        Option("rate1", float, 1.0),
        Option("rate2", float, None),
        Option("M", int, 500, "runs per magnitude"),
        Option("seed", int, 0),
        Option("threads", int, 1),
        Option("output", str, None),
        Option("emit_csv", str, None, "write (phi, mean delay) rows here"),
    ],
    "bench": [
        Option("checkpoints", _ints, [1000, 10000], "comma-separated times"),
        Option("repetitions", int, 3),
        Option("window", int, 200),
        Option("seed", int, 0),
        Option("output", str, None),
        Option("emit_csv", str, None, "write (t, seconds per update) rows here"),
    ],
}


def read_config(path: str) -> dict[str, str]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError("expected key=value", line_no)
            key, value = (s.strip() for s in text.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _add_options(parser: argparse.ArgumentParser, options: list[Option]) -> None:
    for opt in options:
        flag = "--" + opt.name.replace("_", "-")
        if opt.kind is _bool:
            parser.add_argument(flag, dest=opt.name, action="store_const", const=True, default=None, help=opt.help)
            parser.add_argument("--no-" + flag[2:], dest=opt.name, action="store_const", const=False)
        else:
            parser.add_argument(flag, dest=opt.name, default=None, help=opt.help)


def _settings(args: argparse.Namespace, options: list[Option]) -> dict:
    """Merge defaults, config file and flags (in increasing priority)."""
    from_file = read_config(args.config) if args.config else {}
    known = {o.name for o in options}
    unknown = set(from_file) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for opt in options:
        raw = getattr(args, opt.name, None)
        if raw is None:
            raw = from_file.get(opt.name)
        if raw is None:
            out[opt.name] = opt.default
            continue
        try:
            out[opt.name] = opt.kind(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {opt.name}: {raw!r} ({exc})") from None
    return out


def _detector_config(settings: dict, p: Optional[int] = None) -> DetectorConfig:
    kind = settings["kind"]
    if kind is None:
        raise ConfigError("no detector kind given (--kind or kind= in the config file)")
    fields = {o.name: settings[o.name] for o in DETECTOR_OPTIONS if o.name not in ("calibration",)}
    if fields["p"] is None:
        fields["p"] = p or 1
    elif p is not None and fields["p"] != p:
        raise ConfigError(f"config says p={fields['p']} but the data have {p} columns")
    config = DetectorConfig(**fields)
    if settings["calibration"]:
        with open(settings["calibration"], encoding="utf-8") as fh:
            report = CalibrationReport.from_json(fh.read())
        if report.kind != config.kind:
            raise ConfigError(f"calibration report is for {report.kind}, detector is {config.kind}")
        config = report.apply(config)
    return config


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def _noise_level(block: np.ndarray) -> float:
    """Operator norm of the centred sample covariance of a training block."""
    centred = block - block.mean(axis=0)
    cov = centred.T @ centred / max(block.shape[0] - 1, 1)
    return float(sym_opnorm(cov))


def cmd_monitor(args: argparse.Namespace) -> int:
    settings = _settings(args, DETECTOR_OPTIONS + COMMAND_OPTIONS["monitor"])
    steps = [s.strip() for s in settings["preprocess"].split(",") if s.strip() and s.strip() != "none"]
    stream: TextIO
    stream = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8", newline="")
    try:
        rows = parse_rows(stream, settings["delimiter"], settings["header"], settings["id_col"])
        records = _pipeline((((row, ident), vec) for row, ident, vec in rows), steps)
        lines = _monitor(records, settings)
        out = sys.stdout if settings["output"] is None else open(settings["output"], "w", encoding="utf-8", newline="\n")
        try:
            for line in lines:
                out.write(line + "\n")
                out.flush()
        finally:
            if out is not sys.stdout:
                out.close()
    finally:
        if stream is not sys.stdin:
            stream.close()
    return 0


def _monitor(records: Iterator[tuple], settings: dict) -> Iterator[str]:
    buffered: list[tuple] = []
    first = next(records, None)
    if first is None:
        return
    buffered.append(first)
    p = first[1].shape[0]
    config = _detector_config(settings, p)
    n_train = settings["training_prefix"]
    if n_train is not None:
        if n_train < 2:
            raise ConfigError("training_prefix needs at least 2 rows")
        for rec in records:
            buffered.append(rec)
            if len(buffered) == n_train:
                break
        if len(buffered) < n_train:
            raise ConfigError(f"training_prefix={n_train} is not shorter than the stream ({len(buffered)} rows)")
        level = _noise_level(np.stack([vec for _, vec in buffered]))
        if config.kind == "cov_opnorm":
            config = config.replace(sigma_cov_fixed=level)
        elif config.kind in ("uni_mean", "chad_mean"):
            config = config.replace(sigma=float(np.sqrt(level)))
        else:
            raise ConfigError(f"training_prefix does not apply to {config.kind}")
    detector = OnlineDetector(config)

    def all_records():
        yield from buffered
        yield from records

    for (row, ident), vec in all_records():
        decision = detector.step(vec)
        if not decision.alarmed:
            continue
        record = {
            "t": decision.t,
            "row": row,
            "g": decision.trigger_g,
            "stat": decision.statistic,
            "threshold": decision.threshold,
            "detector": decision.detector_id,
        }
        if ident is not None:
            record["id"] = ident
        yield json.dumps(record)
        if not settings["auto_reset"]:
            return
        detector.reset()


def cmd_calibrate(args: argparse.Namespace) -> int:
    settings = _settings(args, DETECTOR_OPTIONS + COMMAND_OPTIONS["calibrate"])
    config = _detector_config(settings)
    spec = CalibrationSpec(
        config, N=settings["N"], K=settings["K"], alpha=settings["alpha"], seed=settings["seed"],
        threads=settings["threads"],
    )
    report = calibrate(spec)
    _write(settings["output"], report.to_json() + "\n")
    return 0


_STREAM_FOR_KIND = {"uni_mean": "gauss_mean", "chad_mean": "gauss_mean", "cov_opnorm": "gauss_cov",
                    "poisson_rate": "poisson"}


def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _settings(args, DETECTOR_OPTIONS + COMMAND_OPTIONS["simulate"])
    config = _detector_config(settings)
    stream_kind = settings["stream_kind"] or _STREAM_FOR_KIND.get(config.kind)
    reports = []
    for phi in settings["phi"]:
        spec = StreamSpec(
            kind=stream_kind, N=settings["N"], p=config.p, tau=settings["tau"], phi=phi, k=settings["k"],
            sigma=settings["noise"], cov_scale=settings["cov_scale"], rate1=settings["rate1"],
            rate2=settings["rate2"],
        )
        reports.append(estimate_delay(config, spec, settings["M"], settings["seed"], threads=settings["threads"]))
    doc = {"reports": [r.to_dict() for r in reports]}
    _write(settings["output"], json.dumps(doc, sort_keys=True) + "\n")
    if settings["emit_csv"]:
        buf = io.StringIO()
        buf.write("phi,mean_delay\n")
        for phi, rep in zip(settings["phi"], reports):
            buf.write(f"{phi!r},{'' if rep.mean_delay is None else repr(rep.mean_delay)}\n")
        _write(settings["emit_csv"], buf.getvalue())
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    settings = _settings(args, DETECTOR_OPTIONS + COMMAND_OPTIONS["bench"])
    config = _detector_config(settings)
    report = benchmark_costs(config, settings["checkpoints"], settings["repetitions"],
                             window=settings["window"], seed=settings["seed"])
    _write(settings["output"], json.dumps(report.to_dict(), sort_keys=True) + "\n")
    if settings["emit_csv"]:
        lines = ["t,seconds_per_update"] + [f"{t},{s!r}" for t, s in zip(report.checkpoints, report.update_seconds)]
        _write(settings["emit_csv"], "\n".join(lines) + "\n")
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    values = static_grid(args.t) if args.static else dynamic_grid(args.t)
    sys.stdout.write("".join(f"{g}\n" for g in values))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridcpd", description="Online changepoint detection on a geometric grid.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    grid = sub.add_parser("grid", help="print the lag grid at time t")
    grid.add_argument("--t", type=int, required=True)
    grid.add_argument("--static", action="store_true", help="powers-of-two grid instead of the dynamic one")
    grid.set_defaults(func=cmd_grid)

    handlers = {"monitor": cmd_monitor, "calibrate": cmd_calibrate, "simulate": cmd_simulate, "bench": cmd_bench}
    helps = {
        "monitor": "stream a delimited file through a detector, one JSON line per alarm",
        "calibrate": "Monte Carlo calibration of the critical constants",
        "simulate": "detection delay and false alarms on synthetic streams",
        "bench": "per-update time and storage at checkpoints",
    }
    for name, func in handlers.items():
        p = sub.add_parser(name, help=helps[name])
        if name == "monitor":
            p.add_argument("input", help="input file, or - for stdin")
        p.add_argument("--config", help="flat key=value file; flags override it")
        _add_options(p, DETECTOR_OPTIONS + COMMAND_OPTIONS[name])
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, OSError) as exc:
        print(f"gridcpd: error: {exc}", file=sys.stderr)
        return 2
    except ChangepointError as exc:
        print(f"gridcpd: numerical error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort exit status
        print(f"gridcpd: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
