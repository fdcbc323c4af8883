"""Command line front end: ``kvnlab run <config>``, ``kvnlab presets``.

A config is a JSON object::

    {"scenario": "kvn_qp", "seed": 0, "out": "runs/harmonic",
     "parameters": {"hamiltonian": "harmonic", "t": 6.283185307179586, ...}}

Exit codes: 0 all checks passed, 1 a check or numeric invariant failed,
2 configuration error, 3 I/O error.  ``KVNLAB_THREADS`` sets the number of
FFT worker threads.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from scipy import fft

from . import __version__
from .errors import ConfigurationError, KvnLabError
from .scenarios import RUNNERS

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "KVNLAB_THREADS"
REQUIRED = object()


@dataclass(frozen=True)
class Field:
    kind: str                      # float, int, bool, str, floats, optional_int
    default: Any = REQUIRED
    check: Optional[Callable[[Any], Optional[str]]] = None
    choices: Optional[tuple] = None
    length: Optional[int] = None


def _positive(v):
    return None if v > 0 else "must be > 0"


def _at_least(n, name):
    return lambda v: None if v >= n else f"{name} ≥ {n} required"


def _unit_interval(v):
    return None if 0 <= v <= 1 else "must lie in [0, 1]"


def _grid_fields(n_default=None):
    n = REQUIRED if n_default is None else n_default
    return {
        "q_min": Field("float"), "q_max": Field("float"), "n_q": Field("int", n, _at_least(4, "n_q")),
        "p_min": Field("float"), "p_max": Field("float"), "n_p": Field("int", n, _at_least(4, "n_p")),
    }


def _hamiltonian_fields(choices=("free", "harmonic", "quartic")):
    return {"hamiltonian": Field("str", "harmonic", choices=choices),
            "m": Field("float", 1.0, _positive), "omega": Field("float", 1.0),
            "lam4": Field("float", 1.0)}


def _gaussian_fields(sigma=0.7):
    return {"q0": Field("float", 0.0), "p0": Field("float", 0.0),
            "sigma_q": Field("float", sigma, _positive), "sigma_p": Field("float", sigma, _positive)}


def _beam_fields():
    return {"state": Field("str", "bell", choices=("bell", "schmidt", "product", "amplitudes")),
            "concurrence": Field("float", 1.0, _unit_interval),
            "pol_angle": Field("float", 0.0), "path_angle": Field("float", 0.0),
            "amplitudes": Field("floats", [1.0, 0.0, 0.0, 0.0], length=4)}


SCHEMAS: Dict[str, Dict[str, Field]] = {
    "kvn_qp": {**_hamiltonian_fields(), **_grid_fields(), **_gaussian_fields(),
               "t": Field("float"), "steps": Field("optional_int", None),
               "samples": Field("int", 5, _at_least(2, "samples")),
               "check_return": Field("bool", False),
               "norm_tol": Field("float", 1e-8, _positive), "return_tol": Field("float", 1e-4, _positive),
               "superselection_tol": Field("float", 1e-6, _positive)},
    "kvn_lambda": {**_hamiltonian_fields(("free", "harmonic")), **_grid_fields(), **_gaussian_fields(0.6),
                   "t": Field("float"), "steps": Field("optional_int", None),
                   "samples": Field("int", 5, _at_least(2, "samples")),
                   "roundtrip_tol": Field("float", 1e-12, _positive),
                   "intertwining_tol": Field("float", 1e-3, _positive),
                   "norm_tol": Field("float", 1e-10, _positive)},
    "moyal_gap": {**_hamiltonian_fields(("harmonic", "quartic")), **_grid_fields(),
                  "q0": Field("float", 0.0), "p0": Field("float", 0.0),
                  "sigma_q": Field("float", math.sqrt(0.5), _positive),
                  "sigma_p": Field("float", math.sqrt(0.5), _positive),
                  "hbars": Field("floats", [0.1, 0.2, 0.4],
                                 lambda v: None if v and all(h > 0 for h in v) else "needs positive values"),
                  "t": Field("float"), "harmonic_tol": Field("float", 1e-6, _positive),
                  "ratio_tol": Field("float", 0.25, _positive)},
    "em_wave": {"n": Field("int", 64, _at_least(4, "n")), "length": Field("float", 2 * math.pi, _positive),
                "axis": Field("str", "z", choices=("x", "y", "z")),
                "mode": Field("int", 1, lambda v: None if v != 0 else "mode must be nonzero"),
                "polarization": Field("str", "linear", choices=("linear", "circular")),
                "t_end": Field("float", 100.0, _positive), "dt": Field("float", 1e-3, _positive),
                "samples": Field("int", 11, _at_least(2, "samples")),
                "period_tol": Field("float", 1e-10, _positive), "energy_tol": Field("float", 1e-10, _positive),
                "continuity_tol": Field("float", 1e-4, _positive)},
    "chsh_scan": {**_beam_fields(), "grid_n": Field("int", 64, _at_least(8, "grid_n")),
                  "angles": Field("floats", [0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8], length=4)},
    "mermin_peres": _beam_fields(),
    "stern_gerlach": {**_grid_fields(), "gamma": Field("float", 1.0), "m": Field("float", 1.0, _positive),
                      "sigma_q": Field("float", 0.25, _positive), "sigma_p": Field("float", 0.25, _positive),
                      "c_plus_sq": Field("float", 0.5, _unit_interval), "t": Field("float"),
                      "samples": Field("int", 9, _at_least(2, "samples")), "threshold": Field("float", 0.0)},
    "momentum_meter": {"g": Field("float", 1.0), "m": Field("float", 1.0, _positive),
                       "M": Field("float", 1.0, _positive), "omega": Field("float", 1.0),
                       "q0": Field("float", 0.0), "p0": Field("float", 0.0), "qA0": Field("float", 0.0),
                       "pA0": Field("float", 0.0), "chiA0": Field("float", 0.0), "piA0": Field("float", 0.0),
                       "variances": Field("floats", [0.0] * 6, length=6), "t": Field("float"),
                       "samples": Field("int", 21, _at_least(2, "samples"))},
}

TOP_LEVEL = {"scenario", "parameters", "seed", "out"}


@dataclass
class ScenarioConfig:
    scenario: str
    parameters: Dict[str, Any]
    seed: int = 0
    out: Optional[str] = None

    def echo(self):
        return {"scenario": self.scenario, "seed": self.seed, "parameters": self.parameters}


def _type_error(path, expected, value):
    return ConfigurationError(f"{path}: expected {expected}, got {value!r}", field=path.split(".")[-1])


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(path, spec: Field, value):
    kind = spec.kind
    if kind == "float":
        if not _is_number(value) or not math.isfinite(value):
            raise _type_error(path, "finite number", value)
        value = float(value)
    elif kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise _type_error(path, "integer", value)
    elif kind == "optional_int":
        if value is not None:
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise _type_error(path, "null or integer >= 1", value)
    elif kind == "bool":
        if not isinstance(value, bool):
            raise _type_error(path, "true/false", value)
    elif kind == "str":
        if not isinstance(value, str):
            raise _type_error(path, "string", value)
    elif kind == "floats":
        if not isinstance(value, list) or not all(_is_number(v) and math.isfinite(v) for v in value):
            raise _type_error(path, "list of finite numbers", value)
        value = [float(v) for v in value]
        if spec.length is not None and len(value) != spec.length:
            raise _type_error(path, f"list of {spec.length} numbers", value)
    if spec.choices is not None and value not in spec.choices:
        raise _type_error(path, "one of " + ", ".join(spec.choices), value)
    if spec.check is not None and value is not None:
        problem = spec.check(value)
        if problem:
            raise ConfigurationError(f"{path}: {problem}, got {value!r}", field=path.split(".")[-1])
    return value


def config_from_dict(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise _type_error("config", "JSON object", data)
    unknown = sorted(set(data) - TOP_LEVEL)
    if unknown:
        raise ConfigurationError(f"config: unknown key {unknown[0]!r}", field=unknown[0])
    if "scenario" not in data:
        raise ConfigurationError("config.scenario: required key missing", field="scenario")
    scenario = data["scenario"]
    if scenario not in SCHEMAS:
        raise _type_error("config.scenario", "one of " + ", ".join(SCHEMAS), scenario)
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise _type_error("config.seed", "non-negative integer", seed)
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise _type_error("config.out", "string path", out)
    raw = data.get("parameters", {})
    if not isinstance(raw, dict):
        raise _type_error("config.parameters", "JSON object", raw)
    schema = SCHEMAS[scenario]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigurationError(f"parameters.{unknown[0]}: unknown key for scenario {scenario}",
                                 field=unknown[0])
    params = {}
    for name, spec in schema.items():
        path = f"parameters.{name}"
        if name in raw:
            params[name] = _coerce(path, spec, raw[name])
        elif spec.default is REQUIRED:
            raise ConfigurationError(f"{path}: required key missing", field=name)
        else:
            params[name] = copy.deepcopy(spec.default)
    for lo, hi in (("q_min", "q_max"), ("p_min", "p_max")):
        if lo in params and not params[lo] < params[hi]:
            raise ConfigurationError(f"parameters.{hi}: must exceed {lo}", field=hi)
    return ScenarioConfig(scenario, params, seed, out)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate JSON config text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


PRESETS: Dict[str, Dict[str, Any]] = {
    "harmonic_period_return": {
        "description": "KvN Gaussian returns to itself after one oscillator period (256^2 grid)",
        "scenario": "kvn_qp",
        "parameters": {"hamiltonian": "harmonic", "m": 1.0, "omega": 1.0,
                       "q_min": -8.0, "q_max": 8.0, "n_q": 256, "p_min": -8.0, "p_max": 8.0, "n_p": 256,
                       "q0": 1.0, "p0": 0.0, "sigma_q": 0.7, "sigma_p": 0.7,
                       "t": 2 * math.pi, "samples": 9, "check_return": True}},
    "quartic_superselection": {
        "description": "density evolution ignores a random initial phase field under quartic flow",
        "scenario": "kvn_qp",
        "parameters": {"hamiltonian": "quartic", "m": 1.0, "omega": 0.0, "lam4": 1.0,
                       "q_min": -6.0, "q_max": 6.0, "n_q": 192, "p_min": -6.0, "p_max": 6.0, "n_p": 192,
                       "q0": 0.5, "p0": 0.0, "sigma_q": 0.5, "sigma_p": 0.5, "t": 1.0, "samples": 3,
                       # spline interpolation under a nonlinear flow is not exactly norm preserving
                       "norm_tol": 1e-6}},
    "lambda_intertwining_free": {
        "description": "(q, lambda_p) propagation agrees with (q, p) propagation, free particle, t = 2",
        "scenario": "kvn_lambda",
        "parameters": {"hamiltonian": "free", "q_min": -10.0, "q_max": 10.0, "n_q": 256,
                       "p_min": -6.0, "p_max": 6.0, "n_p": 256, "q0": 1.0, "p0": 0.5,
                       "sigma_q": 0.6, "sigma_p": 0.6, "t": 2.0}},
    "lambda_intertwining_harmonic": {
        "description": "(q, lambda_p) propagation agrees with (q, p) propagation, oscillator, t = 2",
        "scenario": "kvn_lambda",
        "parameters": {"hamiltonian": "harmonic", "q_min": -10.0, "q_max": 10.0, "n_q": 256,
                       "p_min": -6.0, "p_max": 6.0, "n_p": 256, "q0": 1.0, "p0": 0.5,
                       "sigma_q": 0.6, "sigma_p": 0.6, "t": 2.0}},
    "moyal_quartic_gap": {
        "description": "Moyal vs Liouville gap scales as hbar^2 for V = q^4/4",
        "scenario": "moyal_gap",
        "parameters": {"hamiltonian": "quartic", "m": 1.0, "omega": 0.0, "lam4": 1.0,
                       "q_min": -4.0, "q_max": 4.0, "n_q": 128, "p_min": -8.0, "p_max": 8.0, "n_p": 128,
                       "q0": 0.5, "p0": 0.0, "hbars": [0.1, 0.2, 0.4], "t": 1.0}},
    "moyal_harmonic_gap": {
        "description": "Moyal and Liouville evolution coincide for the oscillator at every hbar",
        "scenario": "moyal_gap",
        "parameters": {"hamiltonian": "harmonic", "m": 1.0, "omega": 1.0,
                       "q_min": -6.0, "q_max": 6.0, "n_q": 160, "p_min": -6.0, "p_max": 6.0, "n_p": 160,
                       "q0": 0.5, "p0": 0.0, "hbars": [0.1, 0.2, 0.4], "t": 1.0}},
    "em_plane_wave": {
        "description": "linearly polarized plane wave: period return, energy, Poynting continuity",
        "scenario": "em_wave",
        "parameters": {"n": 64, "length": 2 * math.pi, "axis": "z", "mode": 1, "polarization": "linear",
                       "t_end": 100.0, "dt": 1e-3}},
    "em_circular_wave": {
        "description": "circularly polarized plane wave along z advances its phase by exactly t",
        "scenario": "em_wave",
        "parameters": {"n": 64, "length": 2 * math.pi, "axis": "z", "mode": 1, "polarization": "circular",
                       "t_end": 100.0, "dt": 1e-3}},
    "chsh_bell": {
        "description": "Bell-like polarization x path beam reaches S = 2 sqrt 2",
        "scenario": "chsh_scan", "parameters": {"state": "bell", "grid_n": 64}},
    "chsh_partial": {
        "description": "partially non-separable beam (C = 0.8): S_max = 2 sqrt(1 + C^2)",
        "scenario": "chsh_scan", "parameters": {"state": "schmidt", "concurrence": 0.8, "grid_n": 64}},
    "chsh_product": {
        "description": "separable beam never exceeds S = 2",
        "scenario": "chsh_scan",
        "parameters": {"state": "product", "pol_angle": 0.3, "path_angle": 1.1, "grid_n": 64}},
    "mermin_peres_square": {
        "description": "Mermin-Peres square: witness 6 against the noncontextual bound 4",
        "scenario": "mermin_peres", "parameters": {"state": "bell"}},
    "stern_gerlach": {
        "description": "two KvN pointer branches follow +-Gamma t^2/2 and decohere (c+^2 = 0.5)",
        "scenario": "stern_gerlach",
        "parameters": {"q_min": -6.0, "q_max": 6.0, "n_q": 256, "p_min": -6.0, "p_max": 6.0, "n_p": 256,
                       "gamma": 1.0, "m": 1.0, "c_plus_sq": 0.5, "t": 2.0}},
    "stern_gerlach_biased": {
        "description": "Stern-Gerlach with c+^2 = 0.8: outcome statistics (0.8, 0.2)",
        "scenario": "stern_gerlach",
        "parameters": {"q_min": -6.0, "q_max": 6.0, "n_q": 256, "p_min": -6.0, "p_max": 6.0, "n_p": 256,
                       "gamma": 1.0, "m": 1.0, "c_plus_sq": 0.8, "t": 2.0}},
    "momentum_meter": {
        "description": "oscillator momentum read by a classical pointer; closed form vs ODE oracle",
        "scenario": "momentum_meter",
        "parameters": {"g": 0.7, "m": 1.3, "M": 2.1, "omega": 0.9, "q0": 0.3, "p0": -0.7, "qA0": 0.1,
                       "pA0": 0.2, "chiA0": 0.4, "piA0": -0.2,
                       "variances": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "t": 10.0}},
}


def preset_config(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; run 'kvnlab presets'", field="preset")
    entry = PRESETS[name]
    return config_from_dict({"scenario": entry["scenario"], "seed": entry.get("seed", 0),
                             "parameters": entry["parameters"]})


def list_presets() -> List[tuple]:
    """(name, scenario, description) for every built-in preset."""
    return [(name, e["scenario"], e["description"]) for name, e in PRESETS.items()]


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", field=THREADS_ENV)
    return n


def _write_manifest(out: Path, manifest):
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_scenario(cfg: ScenarioConfig, out=None, stream=None) -> int:
    """Run one scenario, write its CSVs and manifest.json, return the exit code."""
    stream = sys.stderr if stream is None else stream
    out = Path(out if out is not None else (cfg.out or f"kvnlab_output/{cfg.scenario}"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"kvnlab: cannot write to output directory {out}: {exc}", file=stream)
        return EXIT_IO
    manifest = {"tool": "kvnlab", "version": __version__, "config": cfg.echo(), "checks": [],
                "status": "error", "failed": [], "error": None}
    start = time.perf_counter()
    code = EXIT_CHECK
    try:
        threads = _threads()
        with fft.set_workers(threads):
            checks = RUNNERS[cfg.scenario](cfg.parameters, cfg.seed, out)
        manifest["checks"] = [c.as_dict() for c in checks]
        manifest["failed"] = [c.name for c in checks if not c.passed]
        manifest["status"] = "fail" if manifest["failed"] else "pass"
        code = EXIT_CHECK if manifest["failed"] else EXIT_OK
    except ConfigurationError as exc:
        manifest["error"] = f"configuration: {exc}"
        manifest["failed"] = [getattr(exc, "field", None) or "configuration"]
        code = EXIT_CONFIG
    except OSError as exc:
        manifest["error"] = f"I/O: {exc}"
        manifest["failed"] = ["io"]
        code = EXIT_IO
    except (KvnLabError, ArithmeticError, ValueError) as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["failed"] = [type(exc).__name__]
        code = EXIT_CHECK
    manifest["wall_clock_seconds"] = round(time.perf_counter() - start, 3)
    manifest["outputs"] = sorted(p.name for p in out.iterdir() if p.suffix == ".csv")
    try:
        _write_manifest(out, manifest)
    except OSError as exc:
        print(f"kvnlab: cannot write manifest: {exc}", file=stream)
        return EXIT_IO
    for c in manifest["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.6g} {c['relation']} "
              f"{c['tolerance']:.6g}", file=stream)
    if manifest["error"]:
        print(f"kvnlab: {manifest['error']}", file=stream)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvnlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kvnlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario from a config file or a preset")
    run.add_argument("config", nargs="?", help="path to a JSON config")
    run.add_argument("--preset", help="name of a built-in preset")
    run.add_argument("--out", help="output directory (overrides the config)")
    sub.add_parser("presets", help="list built-in presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name, scenario, description in list_presets():
            print(f"{name:30s} {scenario:15s} {description}")
        return EXIT_OK
    if (args.config is None) == (args.preset is None):
        print("kvnlab: give exactly one of a config path or --preset", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.preset is not None:
            cfg = preset_config(args.preset)
        else:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                print(f"kvnlab: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
            cfg = parse_config(text)
    except ConfigurationError as exc:
        print(f"kvnlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_scenario(cfg, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
