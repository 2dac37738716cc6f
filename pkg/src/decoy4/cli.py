"""Command-line driver: evaluate, optimize, scan and mc-validate.

Configuration files are flat UTF-8 ``key = value`` text with ``#`` comments.
Results go to a CSV file (or stdout) and a JSON run manifest is written next
to it. Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baseline3 import BASELINE_SECURITY, SourceConfig3, evaluate3
from .bounds import THREE_INTENSITY_TERMS, SecurityParams, SourceConfig, evaluate
from .channel import SystemParams, expected_counts
from .mcsim import validate_bounds
from .optimizer import DEFAULT_OMEGA, OptProblem, OptResult, ScanRow, optimize, scan

CSV_COLUMNS = [
    "distance_km",
    "protocol",
    "omega",
    "R",
    "l",
    "mu",
    "v1",
    "v2",
    "p_mu",
    "p_v1",
    "p_v2",
    "p_omega",
    "p_z",
    "e1_pz",
    "s_z0",
    "s_z1",
    "s_x1",
    "v_x1",
    "lambda_ec",
    "eps_sec",
    "feasible",
    "flags",
]

SYSTEM_KEYS = {f.name for f in fields(SystemParams)}
SECURITY_KEYS = {"eps_cor", "kappa", "f_ec", "sampling_factor", "cap_v_x1"}
FOUR_KEYS = {"mu", "v1", "v2", "p_mu", "p_v1", "p_v2", "p_z", "omega", "p_z_given_omega"}
THREE_KEYS = {"mu", "v", "p_mu", "p_v", "p_z", "omega"}
RUN_KEYS = {"protocol", "seed", "restarts"}


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        allowed = SYSTEM_KEYS | SECURITY_KEYS | FOUR_KEYS | THREE_KEYS | RUN_KEYS
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _float(cfg: dict, key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from exc


def _bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def system_from(cfg: dict, args) -> SystemParams:
    values = {k: _float(cfg, k) for k in SYSTEM_KEYS if k in cfg}
    if getattr(args, "pulses", None) is not None:
        values["n_pulses"] = args.pulses
    if getattr(args, "distance", None) is not None:
        values["length_km"] = args.distance
    return SystemParams(**values)


def security_from(cfg: dict, protocol: str) -> SecurityParams:
    base = SecurityParams() if protocol == "four" else BASELINE_SECURITY
    values = {}
    for key in ("eps_cor", "kappa", "f_ec", "sampling_factor"):
        if key in cfg:
            values[key] = _float(cfg, key)
    if "cap_v_x1" in cfg:
        values["cap_v_x1"] = _bool(cfg["cap_v_x1"])
    return replace(base, **values)


def source_from(cfg: dict, protocol: str):
    omega = _float(cfg, "omega") if "omega" in cfg else DEFAULT_OMEGA
    if protocol == "four":
        need = ["mu", "v1", "v2", "p_mu", "p_v1", "p_v2", "p_z"]
        missing = [k for k in need if k not in cfg]
        if missing:
            raise ConfigError(f"four-intensity config is missing {missing}")
        src = SourceConfig.from_free(*(_float(cfg, k) for k in need), omega=omega)
        if "p_z_given_omega" in cfg:
            src = replace(src, p_z_given_omega=_float(cfg, "p_z_given_omega"))
        return src
    need = ["mu", "v", "p_mu", "p_v", "p_z"]
    missing = [k for k in need if k not in cfg]
    if missing:
        raise ConfigError(f"three-intensity config is missing {missing}")
    return SourceConfig3.from_free(*(_float(cfg, k) for k in need), omega=omega)


def parse_grid(spec: str) -> list[float]:
    """``a:b:step`` (inclusive), ``a:b:log`` / ``a:b:logN`` or a comma list."""
    spec = spec.strip()
    if ":" not in spec:
        return [float(x) for x in spec.split(",") if x.strip()]
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be start:stop:step, got {spec!r}")
    start, stop = float(parts[0]), float(parts[1])
    step = parts[2].strip().lower()
    if step.startswith("log"):
        n = int(step[3:]) if step[3:] else 5
        if start <= 0 or stop <= 0 or n < 2:
            raise ConfigError(f"log grid needs positive bounds and >= 2 points: {spec!r}")
        return [float(x) for x in np.geomspace(start, stop, n)]
    h = float(step)
    if h <= 0 or stop < start:
        raise ConfigError(f"bad linear grid {spec!r}")
    count = int(math.floor((stop - start) / h + 1e-9)) + 1
    return [start + i * h for i in range(count)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def result_row(distance: float, protocol: str, cfg, report) -> dict[str, str]:
    row = dict.fromkeys(CSV_COLUMNS, "")
    row.update(distance_km=_fmt(float(distance)), protocol=protocol)
    if cfg is not None:
        if isinstance(cfg, SourceConfig):
            params = dict(mu=cfg.mu, v1=cfg.v1, v2=cfg.v2, p_mu=cfg.p_mu, p_v1=cfg.p_v1,
                          p_v2=cfg.p_v2, p_omega=cfg.p_omega, p_z=cfg.p_z_bob)
        else:
            params = dict(mu=cfg.mu, v1=cfg.v, p_mu=cfg.p_mu, p_v1=cfg.p_v,
                          p_omega=cfg.p_omega, p_z=cfg.p_z_bob)
        row.update({k: _fmt(float(v)) for k, v in params.items()})
        row["omega"] = _fmt(float(cfg.omega))
    row.update(
        R=_fmt(float(report.rate)),
        l=str(report.l),
        e1_pz=_fmt(float(report.e1_pz)),
        s_z0=_fmt(float(report.s_z0)),
        s_z1=_fmt(float(report.s_z1)),
        s_x1=_fmt(float(report.s_x1)),
        v_x1=_fmt(float(report.v_x1)),
        lambda_ec=_fmt(float(report.lambda_ec)),
        eps_sec=_fmt(float(report.eps_sec)),
        feasible=_fmt(report.feasible),
        flags=";".join(report.flags),
    )
    return row


def _sort_key(row: dict) -> tuple:
    omega = float(row["omega"]) if row["omega"] else -1.0
    return (row["protocol"], float(row["distance_km"]), omega)


def write_csv(rows: list[dict], columns: list[str], out) -> None:
    writer = csv.DictWriter(out, fieldnames=columns, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def _protocols(choice: str) -> list[str]:
    return ["four", "three"] if choice == "both" else [choice]


def _emit(args, rows, columns, manifest: dict) -> None:
    buf = io.StringIO(newline="")
    write_csv(rows, columns, buf)
    if args.output == "-":
        sys.stdout.write(buf.getvalue())
    else:
        path = Path(args.output)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    manifest_path = args.manifest
    if manifest_path is None and args.output != "-":
        manifest_path = str(Path(args.output).with_suffix(".manifest.json"))
    if manifest_path:
        Path(manifest_path).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _manifest(args, system: SystemParams, securities: dict, extra: dict | None = None) -> dict:
    out = {
        "tool": "decoy4",
        "version": __version__,
        "mode": args.command,
        "seed": getattr(args, "seed", None),
        "system": asdict(system),
        "security": {p: asdict(s) for p, s in securities.items()},
        "float_format": "repr (shortest round-trip, up to 17 significant digits)",
        "csv_columns": None,
    }
    if extra:
        out.update(extra)
    return out


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    protocol = args.protocol or cfg.get("protocol", "four")
    if protocol not in ("four", "three"):
        raise ConfigError("evaluate needs protocol four or three")
    system = system_from(cfg, args)
    sec = security_from(cfg, protocol)
    src = source_from(cfg, protocol)
    counts = expected_counts(src, system)
    if protocol == "four":
        report = evaluate(src, counts, system.n_pulses, sec)
    else:
        report = evaluate3(src, counts, system.n_pulses, sec)
    rows = [result_row(system.length_km, protocol, src, report)]
    manifest = _manifest(args, system, {protocol: sec})
    manifest["csv_columns"] = CSV_COLUMNS
    _emit(args, rows, CSV_COLUMNS, manifest)
    return 0


def _template(cfg: dict, args, protocol: str) -> OptProblem:
    system = system_from(cfg, args)
    omega = args.omega_value if getattr(args, "omega_value", None) is not None else None
    if omega is None:
        omega = _float(cfg, "omega") if "omega" in cfg else DEFAULT_OMEGA
    restarts = args.restarts or int(cfg.get("restarts", 20))
    return OptProblem(
        sys=system,
        sec=security_from(cfg, protocol),
        protocol=protocol,
        omega=omega,
        restarts=restarts,
    )


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    rows, secs = [], {}
    for protocol in _protocols(args.protocol):
        prob = _template(cfg, args, protocol)
        res: OptResult = optimize(prob, seed=args.seed, workers=args.workers)
        rows.append(result_row(prob.sys.length_km, protocol, res.cfg, res.report))
        secs[protocol] = prob.security
        system = prob.sys
    rows.sort(key=_sort_key)
    manifest = _manifest(args, system, secs, {"restarts": prob.restarts})
    manifest["csv_columns"] = CSV_COLUMNS
    _emit(args, rows, CSV_COLUMNS, manifest)
    return 0


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    distances = parse_grid(args.distances)
    omegas = parse_grid(args.omega) if args.omega else None
    rows, secs = [], {}
    for protocol in _protocols(args.protocol):
        template = _template(cfg, args, protocol)
        secs[protocol] = template.security
        result: list[ScanRow] = scan(
            template, distances, omegas=omegas, seed=args.seed, workers=args.workers
        )
        for r in result:
            row = result_row(r.distance_km, protocol, r.result.cfg, r.result.report)
            if r.omega is not None and not row["omega"]:
                row["omega"] = _fmt(float(r.omega))
            if r.error:
                row["flags"] = ";".join(filter(None, [row["flags"], "error"]))
            rows.append(row)
    rows.sort(key=_sort_key)
    manifest = _manifest(
        args,
        template.sys,
        secs,
        {"distances_km": distances, "omegas": omegas, "restarts": template.restarts},
    )
    manifest["csv_columns"] = CSV_COLUMNS
    _emit(args, rows, CSV_COLUMNS, manifest)
    return 0


def cmd_mc_validate(args) -> int:
    cfg = load_config(args.config)
    if cfg.get("protocol", "four") != "four":
        raise ConfigError("mc-validate simulates the four-intensity protocol only")
    system = system_from(cfg, args)
    src = source_from(cfg, "four")
    sec = security_from(cfg, "four")
    report = validate_bounds(
        src, system, args.eps_sec, args.trials, args.seed, sampling_factor=sec.sampling_factor
    )
    columns = ["bound", "violations", "trials", "frequency", "eps_sec", "passed"]
    rows = [
        {
            "bound": name,
            "violations": str(count),
            "trials": str(report.trials),
            "frequency": _fmt(count / report.trials),
            "eps_sec": _fmt(float(report.eps_sec)),
            "passed": _fmt(count / report.trials <= report.eps_sec),
        }
        for name, count in report.violations.items()
    ]
    manifest = _manifest(
        args, system, {"four": sec}, {"trials": args.trials, "degenerate": report.degenerate}
    )
    manifest["csv_columns"] = columns
    _emit(args, rows, columns, manifest)
    return 0 if report.passed() else 1


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decoy4",
        description="Finite-key key rates for efficient four- and three-intensity decoy BB84.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, protocols):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--pulses", type=_positive_float, help="pulses sent by Alice (N)")
        p.add_argument("-o", "--output", default="-", help="CSV output path, '-' for stdout")
        p.add_argument("--manifest", help="manifest path (default: next to the CSV)")
        if protocols:
            p.add_argument("--protocol", choices=protocols)

    p = sub.add_parser("evaluate", help="key rate of a fixed source configuration")
    common(p, ["four", "three"])
    p.add_argument("--distance", type=_nonneg_float, help="fiber length in km")
    p.set_defaults(func=cmd_evaluate)

    def search_options(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, help="optimizer restarts (default 20)")
        p.add_argument("--workers", type=int, default=1, help="parallel restarts")

    p = sub.add_parser("optimize", help="optimise source parameters at one distance")
    common(p, ["four", "three", "both"])
    p.set_defaults(protocol="four")
    p.add_argument("--distance", type=_nonneg_float, default=0.0)
    p.add_argument("--omega", dest="omega_value", type=_nonneg_float)
    search_options(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("scan", help="optimise over a distance (and omega) grid")
    common(p, ["four", "three", "both"])
    p.set_defaults(protocol="both")
    p.add_argument("--distances", default="0:100:10", help="start:stop:step or a,b,c")
    p.add_argument("--omega", help="omega grid, e.g. 1e-5:1e-3:log")
    search_options(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("mc-validate", help="Monte Carlo check of the statistical bounds")
    common(p, [])
    p.add_argument("--distance", type=_nonneg_float)
    p.add_argument("--eps-sec", type=_positive_float, default=1e-3)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mc_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.error(str(exc))
    except ValueError as exc:
        print(f"decoy4: invalid parameters: {exc}", file=sys.stderr)
        return 2
    return 0
