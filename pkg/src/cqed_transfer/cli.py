"""Command-line front end.

    cqed-transfer bell [--theta X]
    cqed-transfer teleport --payload 0.6,0.8
    cqed-transfer transfer --n 1 --hops 2 --payload random:5:7
    cqed-transfer network --schedule chain.json --payload 0.6,0.8i
    cqed-transfer validate --sweep detuning --values 10,20,30,40

Every command writes ``<prefix>.summary.json`` and, depending on
``--format``, ``<prefix>.data.csv`` and/or ``<prefix>.data.json``. A JSON
config file (``--config``) supplies the same fields; explicit flags win.

Exit status: 0 success, 2 invalid input, 3 numerical convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import network, protocols, validation
from .dynamics import BELL_THETA, FullModelParams, TRANSFER_THETA
from .errors import ConvergenceError, CqedError, LabelLookupError, ValidationError
from .payload import Payload

log = logging.getLogger("cqed_transfer")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONVERGENCE = 3

COMMANDS = ("bell", "teleport", "transfer", "network", "validate")
FORMATS = ("csv", "json", "both")
SWEEP_ALIASES = {
    "detuning": "detuning_ratio", "detuning_ratio": "detuning_ratio",
    "decay": "kappa_over_g", "kappa": "kappa_over_g", "kappa_over_g": "kappa_over_g",
    "cutoff": "fock_cutoff", "fock_cutoff": "fock_cutoff",
}


class ConfigError(ValidationError):
    """Invalid run configuration; ``key`` is the dotted path of the culprit."""

    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{key}: {message}")


@dataclass(frozen=True)
class SweepConfig:
    parameter: str = "detuning_ratio"
    values: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0)
    protocol: str = "single_gate"
    payloads: int = validation.DEFAULT_PAYLOADS
    ratio: float = validation.DEFAULT_RATIO
    kappa_over_g: float = 0.0
    fock_cutoff: int = 5
    steps: int = 4000


@dataclass(frozen=True)
class RunConfig:
    command: str
    payload: str | tuple[complex, ...] | None = None
    n_qubits: int | None = None
    hops: int = 1
    theta: float | None = None
    schedule_file: str | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: str | None = None
    format: str = "both"
    seed: int = 0
    jobs: int | None = None

    @property
    def prefix(self) -> str:
        return self.output or self.command


_TOP_KEYS = {f.name for f in fields(RunConfig)}
_SWEEP_KEYS = {f.name for f in fields(SweepConfig)}


def parse_complex(token: str) -> complex:
    """``re``, ``imi``, ``re+imi`` or ``re-imi`` (``j`` also accepted)."""
    t = token.strip().replace(" ", "").replace("i", "j")
    if not t:
        raise ValueError("empty coefficient")
    if t.endswith("j") and re.fullmatch(r"[+-]?j", t):
        t = t.replace("j", "1j")
    return complex(t)


def parse_payload_spec(value) -> str | tuple[complex, ...]:
    """Normalize a payload spec to ``"random:<count>:<seed>"`` or a coefficient tuple."""
    if isinstance(value, str):
        v = value.strip()
        if v.startswith("random"):
            parts = v.split(":")
            if len(parts) not in (1, 2, 3) or parts[0] != "random":
                raise ValueError(f"expected random:<count>:<seed>, got {value!r}")
            try:
                [int(p) for p in parts[1:]]
            except ValueError:
                raise ValueError(f"random payload count and seed must be integers, got {value!r}") from None
            return v
        return tuple(parse_complex(tok) for tok in v.split(","))
    if isinstance(value, (list, tuple)):
        out = []
        for item in value:
            if isinstance(item, (list, tuple)) and len(item) == 2:
                out.append(complex(float(item[0]), float(item[1])))
            elif isinstance(item, str):
                out.append(parse_complex(item))
            elif isinstance(item, (int, float)) and not isinstance(item, bool):
                out.append(complex(item))
            else:
                raise ValueError(f"cannot read coefficient {item!r}")
        return tuple(out)
    raise ValueError(f"payload must be a string or list, got {type(value).__name__}")


def _parse_values(value) -> tuple[float, ...]:
    if isinstance(value, str):
        return tuple(float(v) for v in value.split(",") if v.strip())
    return tuple(float(v) for v in value)


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    leaf = key.split(".")[-1]
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{leaf}"' in line:
            return i
    return None


def _coerce(raw: dict, text: str | None = None) -> RunConfig:
    """Validate a merged raw mapping into a RunConfig."""

    def fail(key, msg):
        raise ConfigError(key, msg, _line_of(text, key))

    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        fail(unknown[0], f"unknown key(s) {unknown}; allowed: {sorted(_TOP_KEYS)}")
    command = raw.get("command")
    if command not in COMMANDS:
        fail("command", f"must be one of {list(COMMANDS)}, got {command!r}")

    kw: dict = {"command": command}
    try:
        if raw.get("payload") is not None:
            kw["payload"] = parse_payload_spec(raw["payload"])
    except (ValueError, TypeError) as exc:
        fail("payload", str(exc))
    for key in ("n_qubits", "hops", "seed", "jobs"):
        if raw.get(key) is not None:
            v = raw[key]
            if isinstance(v, bool) or not isinstance(v, (int, str)) or not str(v).lstrip("-").isdigit():
                fail(key, f"must be an integer, got {v!r}")
            kw[key] = int(v)
    if kw.get("n_qubits") is not None and kw["n_qubits"] < 1:
        fail("n_qubits", f"must be >= 1, got {kw['n_qubits']}")
    if kw.get("hops", 1) < 1:
        fail("hops", f"must be >= 1, got {kw['hops']}")
    if kw.get("jobs") is not None and kw["jobs"] < 1:
        fail("jobs", f"must be >= 1, got {kw['jobs']}")
    if raw.get("theta") is not None:
        try:
            kw["theta"] = float(raw["theta"])
        except (TypeError, ValueError):
            fail("theta", f"must be a number, got {raw['theta']!r}")
    for key in ("schedule_file", "output"):
        if raw.get(key) is not None:
            kw[key] = str(raw[key])
    fmt = raw.get("format", "both")
    if fmt not in FORMATS:
        fail("format", f"must be one of {list(FORMATS)}, got {fmt!r}")
    kw["format"] = fmt

    sweep_raw = raw.get("sweep") or {}
    if not isinstance(sweep_raw, dict):
        fail("sweep", "must be an object")
    unknown = sorted(set(sweep_raw) - _SWEEP_KEYS)
    if unknown:
        fail(f"sweep.{unknown[0]}", f"unknown key(s) {unknown}; allowed: {sorted(_SWEEP_KEYS)}")
    skw = {}
    if "parameter" in sweep_raw:
        if sweep_raw["parameter"] not in SWEEP_ALIASES:
            fail("sweep.parameter", f"must be one of {sorted(set(SWEEP_ALIASES))}, got {sweep_raw['parameter']!r}")
        skw["parameter"] = SWEEP_ALIASES[sweep_raw["parameter"]]
    if "values" in sweep_raw:
        try:
            skw["values"] = _parse_values(sweep_raw["values"])
        except (TypeError, ValueError):
            fail("sweep.values", f"must be a list of numbers, got {sweep_raw['values']!r}")
    if "protocol" in sweep_raw:
        if sweep_raw["protocol"] not in {p.value for p in validation.Protocol}:
            fail("sweep.protocol", f"must be single_gate or transfer_single, got {sweep_raw['protocol']!r}")
        skw["protocol"] = sweep_raw["protocol"]
    for key, cast in (("payloads", int), ("fock_cutoff", int), ("steps", int),
                      ("ratio", float), ("kappa_over_g", float)):
        if key in sweep_raw:
            try:
                skw[key] = cast(sweep_raw[key])
            except (TypeError, ValueError):
                fail(f"sweep.{key}", f"must be a number, got {sweep_raw[key]!r}")
    kw["sweep"] = SweepConfig(**skw)
    cfg = RunConfig(**kw)
    _cross_check(cfg, fail)
    return cfg


def _cross_check(cfg: RunConfig, fail) -> None:
    if isinstance(cfg.payload, tuple):
        k = len(cfg.payload)
        if cfg.n_qubits is not None and k != 2 ** cfg.n_qubits:
            fail("payload", f"has {k} coefficients but n_qubits={cfg.n_qubits} needs {2 ** cfg.n_qubits}")
        if k < 2 or k & (k - 1):
            fail("payload", f"has {k} coefficients; need a power of two >= 2")
        norm = math.sqrt(sum(abs(c) ** 2 for c in cfg.payload))
        if abs(norm - 1.0) > 1e-6:
            fail("payload", f"norm {norm:.12g} is not within 1e-06 of 1")
    if cfg.command in ("teleport",) and cfg.n_qubits not in (None, 1):
        fail("n_qubits", f"teleport moves one qubit, got n_qubits={cfg.n_qubits}")
    if cfg.command in ("teleport", "transfer", "network") and cfg.payload is None:
        fail("payload", f"required for {cfg.command}")
    if cfg.command == "network" and not cfg.schedule_file:
        fail("schedule_file", "network needs --schedule FILE")
    if cfg.command == "validate":
        s = cfg.sweep
        if not s.values:
            fail("sweep.values", "must be nonempty")
        if any(b <= a for a, b in zip(s.values, s.values[1:])):
            fail("sweep.values", f"must be strictly ascending, got {list(s.values)}")
        if s.payloads < 1:
            fail("sweep.payloads", f"must be >= 1, got {s.payloads}")
        if s.steps < 1:
            fail("sweep.steps", f"must be >= 1, got {s.steps}")
        if s.fock_cutoff < 1:
            fail("sweep.fock_cutoff", f"must be >= 1, got {s.fock_cutoff}")
        if s.ratio <= 0:
            fail("sweep.ratio", f"must be > 0, got {s.ratio}")


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config file; ``overrides`` (e.g. from flags) take precedence."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigError("<file>", "config must be a JSON object", 1)
    return _coerce(merge(doc, overrides or {}), text)


def merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if key == "sweep":
            out["sweep"] = {**(base.get("sweep") or {}), **value}
        else:
            out[key] = value
    return out


def resolve_payloads(cfg: RunConfig, n_qubits: int | None = None) -> list[Payload]:
    n = cfg.n_qubits or n_qubits or 1
    if isinstance(cfg.payload, tuple):
        return [Payload.from_coefficients(cfg.payload, cfg.n_qubits)]
    parts = cfg.payload.split(":")
    count = int(parts[1]) if len(parts) > 1 else 1
    seed = int(parts[2]) if len(parts) > 2 else cfg.seed
    if count < 1:
        raise ConfigError("payload", f"random payload count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    return [Payload.random(n, rng) for _ in range(count)]


# ---------------------------------------------------------------- commands

def _num(x: float) -> str:
    return f"{x:.12g}"


def _cplx(z: complex | None):
    return None if z is None else [float(z.real), float(z.imag)]


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, float) else ("" if v is None else v) for v in r])
    return buf.getvalue()


@dataclass
class Outputs:
    summary: dict
    header: Sequence[str] = ()
    rows: list = field(default_factory=list)
    csv_text: str | None = None
    data_json: dict | None = None
    lines: list[str] = field(default_factory=list)


def run_bell(cfg: RunConfig) -> Outputs:
    theta = BELL_THETA if cfg.theta is None else cfg.theta
    state = protocols.prepare_bell(theta)
    basis = ["00", "01", "10", "11"]
    rows = [(b, float(a.real), float(a.imag)) for b, a in zip(basis, state.amplitudes)]
    summary = {"command": "bell", "theta": theta, "atoms": list(state.names),
               "amplitudes": {b: _cplx(a) for b, a in zip(basis, state.amplitudes)}}
    lines = [f"bell state on atoms 2,3 at theta={theta:.6g}"]
    lines += [f"  |{b}>  {a.real:+.12f} {a.imag:+.12f}i" for b, a in zip(basis, state.amplitudes)]
    return Outputs(summary, ("basis", "re", "im"), rows, lines=lines)


def run_teleport(cfg: RunConfig) -> Outputs:
    payloads = resolve_payloads(cfg, 1)
    rows, runs, succ = [], [], []
    for k, pl in enumerate(payloads):
        res = protocols.ye_guo_teleport(pl)
        succ.append(res.success_probability)
        runs.append({"payload": [_cplx(c) for c in pl.coefficients], **res.summary()})
        for (a1, a2), rec in res.outcomes.items():
            rows.append((k, a1, a2, float(rec.probability), res.corrections[(a1, a2)],
                         res.corrected_fidelities[(a1, a2)]))
    summary = {"command": "teleport", "success_probability": float(np.mean(succ)),
               "success_probability_min": float(np.min(succ)),
               "success_probability_max": float(np.max(succ)), "runs": runs}
    lines = [f"teleport: {len(payloads)} payload(s), success_probability {np.mean(succ):.12g}"]
    for row in runs[0]["outcomes"]:
        fa = "fail" if row["fidelity_after"] is None else f"{row['fidelity_after']:.12g}"
        lines.append(f"  outcome ({row['atom1']},{row['atom2']})  p={row['probability']:.6f}  "
                     f"{row['correction']:<10}  fidelity={fa}")
    return Outputs(summary, ("payload_index", "atom1", "atom2", "probability", "correction", "fidelity_after"),
                   rows, lines=lines)


def _transfer_outputs(command: str, results, extra: dict) -> Outputs:
    rows = []
    for k, r in enumerate(results):
        ph = r.global_phase
        rows.append((k, float(r.payload_fidelity), None if ph is None else float(ph.real),
                     None if ph is None else float(ph.imag), int(r.carrier_atoms_final)))
    fids = [r.payload_fidelity for r in results]
    phases = [r.global_phase for r in results]
    phase = phases[0] if all(p is not None for p in phases) else None
    summary = {"command": command, **extra, "payloads": len(results),
               "fidelity": float(min(fids)), "fidelity_min": float(min(fids)), "fidelity_mean": float(np.mean(fids)),
               "global_phase": _cplx(phase), "carriers_restored": all(r.carrier_atoms_final for r in results),
               "destination": list(results[0].destination)}
    if phase is not None:
        summary["phase_spread"] = protocols.phase_deviation(phases)
    lines = [f"{command}: {len(results)} payload(s) -> {','.join(results[0].destination)}",
             f"  fidelity min {min(fids):.12g}",
             f"  global phase {'n/a' if phase is None else f'{phase.real:+.6f}{phase.imag:+.6f}i'}",
             f"  carriers restored: {summary['carriers_restored']}"]
    return Outputs(summary, ("payload_index", "fidelity", "phase_re", "phase_im", "carriers_ok"), rows, lines=lines)


def run_transfer(cfg: RunConfig) -> Outputs:
    payloads = resolve_payloads(cfg, cfg.n_qubits)
    n = payloads[0].n_qubits
    if cfg.hops == 1:
        results = [protocols.transfer_n_qubit(p, n) for p in payloads]
    else:
        results = [protocols.multi_hop_transfer(p, cfg.hops) for p in payloads]
    return _transfer_outputs("transfer", results, {"n_qubits": n, "hops": cfg.hops,
                                                   "expected_phase": _cplx(protocols.expected_phase(n, cfg.hops))})


def run_network(cfg: RunConfig) -> Outputs:
    try:
        schedule = network.load_schedule(cfg.schedule_file)
    except OSError as exc:
        raise ConfigError("schedule_file", f"cannot read {cfg.schedule_file!r}: {exc.strerror}") from None
    diags = network.validate_schedule(schedule)
    errors = [d for d in diags if d.level == "error"]
    if errors:
        raise ConfigError("schedule_file", "; ".join(f"{d.code}: {d.message}" for d in errors))
    payloads = resolve_payloads(cfg, len(schedule.payload_slot))
    results = [network.execute(schedule, p) for p in payloads]
    out = _transfer_outputs("network", results, {
        "schedule_file": cfg.schedule_file,
        "diagnostics": [{"level": d.level, "code": d.code, "message": d.message} for d in diags]})
    out.lines += [f"  {d.level}: {d.message}" for d in diags]
    return out


def _sweep_spec(cfg: RunConfig) -> validation.SweepSpec:
    s = cfg.sweep
    base = FullModelParams.for_gate(1.0, s.ratio, TRANSFER_THETA, kappa=s.kappa_over_g, fock_cutoff=s.fock_cutoff)
    return validation.SweepSpec(s.parameter, s.values, base, s.protocol, s.payloads, cfg.seed, s.steps)


def run_validate(cfg: RunConfig) -> Outputs:
    spec = _sweep_spec(cfg)
    rows = validation.run_sweep(spec, cfg.jobs)
    means = [r.mean_infidelity for r in rows]
    trend = {
        "strictly_decreasing": all(b < a for a, b in zip(means, means[1:])),
        "nondecreasing": all(b >= a for a, b in zip(means, means[1:])),
    }
    data = validation.rows_to_json(spec, rows)
    summary = {"command": "validate", **{k: v for k, v in data.items() if k != "rows"}, "trend": trend,
               "rows": [{k: v for k, v in r.items() if k != "wall_time_s"} for r in data["rows"]]}
    lines = [f"validate: {spec.parameter.value} sweep, protocol {spec.protocol.value}, "
             f"{spec.payloads} payloads, seed {spec.seed}"]
    lines += [f"  {r.parameter_value:>10.6g}  mean {r.mean_infidelity:.6e}  max {r.max_infidelity:.6e}"
              for r in rows]
    return Outputs(summary, csv_text=validation.rows_to_csv(spec, rows), data_json=data, lines=lines)


RUNNERS = {"bell": run_bell, "teleport": run_teleport, "transfer": run_transfer,
           "network": run_network, "validate": run_validate}


def write_outputs(cfg: RunConfig, out: Outputs) -> list[Path]:
    """Write all files for a run; nothing is left behind if any write fails."""
    prefix = cfg.prefix
    files: dict[Path, str] = {Path(f"{prefix}.summary.json"): json.dumps(out.summary, indent=2) + "\n"}
    if cfg.format in ("csv", "both"):
        files[Path(f"{prefix}.data.csv")] = out.csv_text if out.csv_text is not None else _table(out.header, out.rows)
    if cfg.format in ("json", "both"):
        doc = out.data_json if out.data_json is not None else {
            "columns": list(out.header), "rows": [list(r) for r in out.rows]}
        files[Path(f"{prefix}.data.json")] = json.dumps(doc, indent=2) + "\n"
    written: list[Path] = []
    try:
        for path, text in files.items():
            if path.parent != Path(""):
                path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text(text)
            os.replace(tmp, path)
            written.append(path)
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def run(cfg: RunConfig) -> int:
    out = RUNNERS[cfg.command](cfg)
    paths = write_outputs(cfg, out)
    for line in out.lines:
        print(line)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


# ---------------------------------------------------------------- argparse

def _common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON config file; flags override its values")
    p.add_argument("--output", default=S, metavar="PREFIX", help="output path prefix")
    p.add_argument("--format", default=S, choices=FORMATS, help="data file format (default both)")
    p.add_argument("--seed", default=S, type=int, help="seed for random payloads and sweeps")
    p.add_argument("--jobs", default=S, type=int, help="worker processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true", default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="cqed-transfer", description=__doc__.split("\n\n")[0])
    _common(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("bell", help="prepare the two-atom entangled state")
    _common(p)
    p.add_argument("--theta", type=float, default=S, help="gate angle lambda*t (default pi/4)")

    for name, help_ in (("teleport", "probabilistic teleportation baseline"),
                        ("transfer", "deterministic n-qubit transfer chain"),
                        ("network", "execute a JSON gate schedule")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--payload", default=S,
                       help="comma list of coefficients (re, imi, re+imi) or random:<count>:<seed>")
        if name == "transfer":
            p.add_argument("--n", "--n-qubits", dest="n_qubits", type=int, default=S)
            p.add_argument("--hops", type=int, default=S)
        if name == "network":
            p.add_argument("--schedule", dest="schedule_file", default=S, metavar="FILE")

    p = sub.add_parser("validate", help="full-model sweeps against the dispersive gate")
    _common(p)
    p.add_argument("--sweep", dest="sweep_parameter", default=S, choices=sorted(SWEEP_ALIASES))
    p.add_argument("--values", dest="sweep_values", default=S, help="comma list, strictly ascending")
    p.add_argument("--protocol", dest="sweep_protocol", default=S, choices=[x.value for x in validation.Protocol])
    p.add_argument("--payloads", dest="sweep_payloads", type=int, default=S)
    p.add_argument("--ratio", dest="sweep_ratio", type=float, default=S, help="base detuning ratio delta/g")
    p.add_argument("--kappa", dest="sweep_kappa_over_g", type=float, default=S, help="base kappa/g")
    p.add_argument("--fock-cutoff", dest="sweep_fock_cutoff", type=int, default=S)
    p.add_argument("--steps", dest="sweep_steps", type=int, default=S, help="integrator steps per gate")
    return parser


def _flag_overrides(ns: argparse.Namespace) -> dict:
    raw = {k: v for k, v in vars(ns).items() if k not in ("config", "verbose") and v is not None}
    sweep = {k[len("sweep_"):]: raw.pop(k) for k in list(raw) if k.startswith("sweep_")}
    if "parameter" in sweep:
        sweep["parameter"] = SWEEP_ALIASES[sweep["parameter"]]
    if sweep:
        raw["sweep"] = sweep
    return raw


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    overrides = _flag_overrides(ns)
    try:
        if getattr(ns, "config", None):
            if not Path(ns.config).is_file():
                raise ConfigError("config", f"file not found: {ns.config}")
            cfg = load_config(ns.config, overrides)
        else:
            if "command" not in overrides:
                parser.print_usage(sys.stderr)
                raise ConfigError("command", f"must be one of {list(COMMANDS)}")
            cfg = _coerce(overrides)
        return run(cfg)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (CqedError, LabelLookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
