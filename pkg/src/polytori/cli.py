"""Command-line entry point.

Every subcommand reads its structured input from JSON (complex numbers as
[re, im] arrays) and its run parameters from flags or a strict INI file
with a single ``[run]`` section.  Artifacts embed the effective
configuration and the library version.

Exit codes: 0 success, 1 verification failure, 2 parse or configuration
error, 3 invariant violation, 4 computation failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from .errors import InvariantError, LatticeProximityError, PolytoriError

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_COMPUTE = 4

COMMANDS = ("periods", "tau", "det-formula", "troyanov", "verify", "spectrum", "det-ratio", "polyakov")


class ConfigError(Exception):
    """Malformed command line, configuration or input file."""


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    input2: str | None = None
    output: str | None = None
    suite: str | None = None
    tolerance: float = 1e-5
    step: float = 1e-4
    resolution: int = 128
    eigenvalues: int = 20
    area: float | None = None
    grid: int = 64
    seed: int = 0

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if not self.step > 0:
            raise ConfigError("step must be positive")
        r = self.resolution
        if r < 16 or r > 1024 or r & (r - 1):
            raise ConfigError("resolution must be a power of two between 16 and 1024")
        if self.eigenvalues < 1:
            raise ConfigError("eigenvalues must be at least 1")
        if self.area is not None and not self.area > 0:
            raise ConfigError("area must be positive")
        if self.grid < 2:
            raise ConfigError("grid must be at least 2")
        if self.command == "verify" and not self.suite:
            raise ConfigError("verify needs a suite name")
        if self.command in ("periods", "tau", "det-formula", "troyanov", "verify", "spectrum", "det-ratio") and not self.input:
            raise ConfigError(f"{self.command} needs --input")
        if self.command == "det-ratio" and not self.input2:
            raise ConfigError("det-ratio needs --input2")

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"tolerance": float, "step": float, "area": float, "resolution": int, "eigenvalues": int, "grid": int, "seed": int}


def read_config_file(path: str) -> dict:
    """Parse a strict INI file; only the [run] section and known keys are accepted."""
    parser = configparser.ConfigParser(strict=True, interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    extra = set(parser.sections()) - {"run"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    if "run" not in parser:
        return {}
    out = {}
    for key, value in parser["run"].items():
        if key not in _TYPES or key == "command":
            raise ConfigError(f"unknown config key {key!r}")
        cast = _CASTS.get(key, str)
        try:
            out[key] = cast(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="polytori", description="Determinants and tau-functions of genus-one polyhedral surfaces.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("suite", nargs="?", help="suite name for verify (rauch, v0, fh, tau, omega-closed, q-grad, all)")
    p.add_argument("--config", help="INI file with a [run] section")
    p.add_argument("--input", help="spec or divisor JSON")
    p.add_argument("--input2", help="second spec JSON (det-ratio)")
    p.add_argument("--output", help="artifact path (default: stdout)")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--resolution", type=int)
    p.add_argument("--eigenvalues", type=int)
    p.add_argument("--area", type=float)
    p.add_argument("--grid", type=int)
    p.add_argument("--seed", type=int)
    return p


def parse_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for key in _TYPES:
        if key == "command":
            continue
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(command=args.command, **values)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# inputs
# --------------------------------------------------------------------------

def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _check_shape(d):
    if not isinstance(d, dict):
        raise ConfigError("input JSON must be an object")
    try:
        for key, val in d.items():
            if key in ("sigma", "scale", "center"):
                _pair(val)
            elif key in ("zeros", "poles", "points"):
                for v in val:
                    _pair(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed value for {key!r}: complex numbers are [re, im] arrays") from exc


def _pair(v):
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v)):
        raise ValueError


def load_spec(path: str):
    from .qdiff import QuadDiffSpec

    d = _load_json(path)
    _check_shape(d)
    return QuadDiffSpec.from_dict(d)


def load_divisor(path: str):
    """(Modulus, ConicalDivisor) from a divisor file or from a spec file (orders +-1/2)."""
    from .conical import ConicalDivisor, divisor_of_spec
    from .qdiff import QuadDiffSpec

    d = _load_json(path)
    _check_shape(d)
    if "zeros" in d or "poles" in d:
        spec = QuadDiffSpec.from_dict(d)
        return spec.sigma, divisor_of_spec(spec)
    return ConicalDivisor.from_dict(d)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _c(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


def _cmd_periods(cfg):
    from .cover import build_cycle_basis, period_coordinates

    spec = load_spec(cfg.input)
    basis = build_cycle_basis(spec)
    return {"periods": period_coordinates(basis).to_dict(), "basis": basis.to_dict()}, EXIT_OK


def _cmd_tau(cfg):
    from .conical import tau

    spec = load_spec(cfg.input)
    t24, modulus = tau(spec)
    return {"tau24": _c(t24), "abs_tau": modulus}, EXIT_OK


def _cmd_det_formula(cfg):
    from .conical import det_formula

    mod, div = load_divisor(cfg.input)
    area = mod.sigma.imag if cfg.area is None else cfg.area
    return {"sigma": _c(mod.sigma), "area": area, "det_formula": det_formula(mod, div, area)}, EXIT_OK


def _cmd_troyanov(cfg):
    from .conical import cone_f_values, troyanov_metric

    mod, div = load_divisor(cfg.input)
    area = 1.0 if cfg.area is None else cfg.area
    metric = troyanov_metric(mod, div, area)
    f = cone_f_values(metric)
    rows = metric.sample_grid(cfg.grid)
    cones = [
        {"point": _c(p), "beta": b, "abs_f": abs(fk)} for (p, b), fk in zip(zip(div.points, div.orders), f)
    ]
    return {"log_scale": metric.log_scale, "area": area, "cones": cones}, rows


def _cmd_verify(cfg):
    from .variational import verify_suite

    spec = load_spec(cfg.input)
    try:
        reports = verify_suite(cfg.suite, spec, step=cfg.step, tol=cfg.tolerance)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    for r in reports:
        print(r.table(), file=sys.stderr)
    ok = all(r.passed for r in reports)
    return [r.to_dict() for r in reports], EXIT_OK if ok else EXIT_VERIFY


def _spectral_metric(cfg):
    from .conical import troyanov_metric
    from .spectral import DensityField

    d = _load_json(cfg.input)
    _check_shape(d)
    if "zeros" in d or "poles" in d:
        spec = load_spec(cfg.input)
        return DensityField.from_spec(spec, cfg.area)
    mod, div = load_divisor(cfg.input)
    if len(div) == 0:
        return DensityField.flat(mod, 1.0 if cfg.area is None else cfg.area)
    return DensityField.from_metric(troyanov_metric(mod, div, 1.0 if cfg.area is None else cfg.area))


def _cmd_spectrum(cfg):
    from .spectral import spectrum

    res = spectrum(_spectral_metric(cfg), cfg.resolution, cfg.eigenvalues, seed=cfg.seed)
    return res, None


def _cmd_det_ratio(cfg):
    from .spectral import det_ratio_conical

    s1, s2 = load_spec(cfg.input), load_spec(cfg.input2)
    res = det_ratio_conical(s1, s2, n=max(cfg.eigenvalues, 50), resolution=cfg.resolution, area=1.0 if cfg.area is None else cfg.area)
    return res.to_dict(), EXIT_OK


def _cmd_polyakov(cfg):
    from .elliptic import Modulus
    from .qdiff import complex_from_json
    from .spectral import DensityField, bump_density, polyakov_check

    d = _load_json(cfg.input) if cfg.input else {}
    _check_shape(d)
    unknown = set(d) - {"sigma", "amplitude", "width", "center"}
    if unknown:
        raise ConfigError(f"unknown polyakov keys: {sorted(unknown)}")
    sigma = Modulus(complex_from_json(d.get("sigma", [0.0, 1.0])))
    area = 1.0 if cfg.area is None else cfg.area
    center = complex_from_json(d["center"]) if "center" in d else None
    bump = bump_density(sigma, float(d.get("amplitude", 1.0)), center, float(d.get("width", 0.15)))
    rep = polyakov_check(DensityField.flat(sigma, area), bump, cfg.resolution, max(cfg.eigenvalues, 50), tol=cfg.tolerance)
    print(rep.table(), file=sys.stderr)
    return rep.to_dict(), EXIT_OK if rep.passed else EXIT_VERIFY


def _artifact(cfg, result) -> str:
    return json.dumps({"version": __version__, "config": cfg.to_dict(), "result": result}, indent=1, sort_keys=True)


def _csv_header(cfg) -> str:
    return f"# polytori {__version__}\n# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n"


def _emit(cfg, text: str):
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration and write its artifact."""
    if cfg.command == "spectrum":
        res, _ = _cmd_spectrum(cfg)
        _emit(cfg, _csv_header(cfg) + res.to_csv())
        return EXIT_OK
    if cfg.command == "troyanov":
        meta, rows = _cmd_troyanov(cfg)
        lines = [_csv_header(cfg).rstrip("\n"), "# cones: " + json.dumps(meta, sort_keys=True), "x,y,density"]
        lines += [f"{x!r},{y!r},{m!r}" for x, y, m in rows.tolist()]
        _emit(cfg, "\n".join(lines) + "\n")
        return EXIT_OK
    handler = {
        "periods": _cmd_periods,
        "tau": _cmd_tau,
        "det-formula": _cmd_det_formula,
        "verify": _cmd_verify,
        "det-ratio": _cmd_det_ratio,
        "polyakov": _cmd_polyakov,
    }[cfg.command]
    result, code = handler(cfg)
    _emit(cfg, _artifact(cfg, result))
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InvariantError, LatticeProximityError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except PolytoriError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
