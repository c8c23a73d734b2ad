"""Command-line front end.

Every subcommand reads its parameters from flags and, optionally, from a flat
``key = value`` config file given with ``--config``; flags win over the file.
Output goes to stdout or ``--out``. Exit codes: 0 success, 2 config error,
3 budget error, 4 precondition violation.
"""

import argparse
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from importlib import resources

import numpy as np

from . import counting, gowers, linear_systems, nilsequences, prime_sets, sieve_weights
from .arith import primorial, primes_up_to
from .errors import AlmostTwinError, ConfigError, PreconditionError

GOLDEN = (1 + math.sqrt(5)) / 2


# ---------------------------------------------------------------------------
# value parsing

def fmt(x):
    """12 significant digits; floats always show a decimal point or exponent."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, Fraction):
        return str(x)
    s = f"{float(x):.12g}"
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def round12(obj):
    """Round every float in a JSON-able structure to 12 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if not math.isfinite(x) else float(f"{x:.12g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round12(v) for v in obj]
    return obj


def dump_json(obj):
    return json.dumps(round12(obj), indent=2, sort_keys=True) + "\n"


def parse_int(text):
    """Integers, also written as 1e6 or 10^6."""
    text = str(text).strip().replace("_", "")
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    try:
        return int(text)
    except ValueError:
        x = float(text)
        if not x.is_integer():
            raise ValueError(f"{text!r} is not an integer") from None
        return int(x)


def parse_fraction(text):
    return Fraction(str(text).strip())


def parse_real(text):
    text = str(text).strip().lower()
    named = {"sqrt2": math.sqrt(2), "sqrt3": math.sqrt(3), "golden": GOLDEN, "phi": GOLDEN, "pi": math.pi}
    if text in named:
        return named[text]
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def parse_int_list(text):
    return tuple(parse_int(v) for v in str(text).split(",") if v.strip())


def parse_real_list(text):
    return tuple(parse_real(v) for v in str(text).split(",") if v.strip())


def parse_bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def parse_box(text):
    """'1:1000' or '1:100,1:100'."""
    out = []
    for part in str(text).split(","):
        lo, hi = part.split(":")
        out.append((parse_int(lo), parse_int(hi)))
    return tuple(out)


def parse_system(text):
    """A named system (twin, prime, ap3, ...), inline JSON, or a JSON file path."""
    text = str(text).strip()
    if text in linear_systems.NAMED_SYSTEMS:
        return linear_systems.NAMED_SYSTEMS[text]()
    if text.startswith("{"):
        return linear_systems.AffineSystem.from_json(text)
    if os.path.exists(text):
        with open(text) as fh:
            return linear_systems.AffineSystem.from_json(fh.read())
    raise ValueError(f"unknown system {text!r}; use one of {sorted(linear_systems.NAMED_SYSTEMS)} or JSON")


def parse_matrix(text):
    """Rows separated by ';', entries by ','."""
    return [list(parse_int_list(row)) for row in str(text).split(";") if row.strip()]


def read_config(path):
    """Flat key = value file; '#' starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------------------
# parameter tables: name -> (parser, default, help)

KIND_PARAMS = {
    "kind": (str, "log_prime", "weight kind: theta1, theta2, theta3, log_prime, prime"),
    "shifts": (parse_int_list, (0, 2), "shift tuple H, comma separated"),
    "rho": (parse_fraction, Fraction(1, 20), "roughness exponent of theta2"),
    "k": (parse_int, 2, "number of primes required by theta2"),
    "indicator": (parse_bool, False, "use 0/1 weights on the same support"),
}

COMMANDS = {
    "sieve": {
        "help": "enumerate theta weights to CSV (or .npy)",
        "params": {**KIND_PARAMS, "N": (parse_int, 10**4, "upper end of [1, N]")},
    },
    "singular-series": {
        "help": "singular series of Psi_H as JSON",
        "params": {
            "system": (parse_system, "twin", "system name or JSON"),
            "shifts": (parse_int_list, (0,), "shift tuple H"),
            "cutoff": (parse_int, 10**4, "largest prime in the truncated product"),
        },
    },
    "count": {
        "help": "density report CSV (N, T, prediction, ratio, pred_error)",
        "params": {
            "system": (parse_system, "twin", "system name or JSON"),
            **KIND_PARAMS,
            "N": (parse_int, None, "single scale"),
            "scales": (parse_int_list, (10**4, 10**5, 10**6), "comma separated scales"),
            "cutoff": (parse_int, 10**4, "singular series cutoff"),
        },
    },
    "wtrick-check": {
        "help": "exact W-trick identity verdict",
        "params": {
            "system": (parse_system, "prime", "system name or JSON"),
            **{**KIND_PARAMS, "kind": (str, "theta2", KIND_PARAMS["kind"][2]), "indicator": (parse_bool, True, KIND_PARAMS["indicator"][2])},
            "w": (parse_int, 3, "W is the product of primes <= w"),
            "box": (parse_box, ((1, 1000),), "region, e.g. 1:1000 or 1:100,1:100"),
        },
    },
    "gowers": {
        "help": "Gowers norm table (k, method, value)",
        "params": {
            "const": (parse_real, None, "use the constant function with this value"),
            "input": (str, None, "file with one value per line, or .npy"),
            "random": (parse_int, None, "use a random +-1 function of this length"),
            "seed": (parse_int, 0, "seed for --random"),
            "N": (parse_int, 16, "length for --const"),
            "k": (parse_int_list, (2,), "norm orders, comma separated"),
            "method": (str, None, "direct, recursive or fft"),
            "interval": (parse_bool, False, "interval norm U^k[N] instead of cyclic"),
        },
    },
    "majorant": {
        "help": "majorization scan and correlation report for nu_b as JSON",
        "params": {
            # the scan needs gamma < rho / 2
            **{**KIND_PARAMS, "kind": (str, "theta2", KIND_PARAMS["kind"][2]), "rho": (parse_fraction, Fraction(1, 8), KIND_PARAMS["rho"][2])},
            "N": (parse_int, 10**5, "scale N"),
            "gamma": (parse_fraction, Fraction(1, 20), "level exponent, R = N^gamma"),
            "w": (parse_int, 3, "W is the product of primes <= w"),
            "b": (parse_int, 5, "residue b"),
            "chi": (str, "cos2", "cutoff function: cos2 or bump"),
            "scan_c": (parse_fraction, Fraction(1, 2), "scan n in [N^c, N]"),
        },
    },
    "bohr": {
        "help": "Bohr-set density table",
        "params": {
            **{**KIND_PARAMS, "kind": (str, "theta2", KIND_PARAMS["kind"][2])},
            "N": (parse_int, 10**6, "scale N"),
            "W": (parse_int, 6, "modulus W"),
            "b": (parse_int, 5, "residue b"),
            "alpha": (parse_real_list, (math.sqrt(2), GOLDEN), "frequencies, e.g. sqrt2,golden,0.3"),
            "center": (parse_real, 0.0, "window center"),
            "width": (parse_real, 0.2, "window width"),
            "margin": (parse_real, 0.05, "ramp length"),
        },
    },
    "solve": {
        "help": "kernel parametrization, local solvability and density report for A x = 0",
        "params": {
            "matrix": (parse_matrix, [[1, 1, -1]], "rows separated by ';', entries by ','"),
            **KIND_PARAMS,
            "scales": (parse_int_list, (100, 300, 1000), "comma separated scales"),
            "local_bound": (parse_int, 50, "check local solvability for p <= this bound"),
            "cutoff": (parse_int, 10**3, "singular series cutoff"),
        },
    },
}


def build_parser():
    parser = argparse.ArgumentParser(prog="almosttwin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"])
        p.add_argument("--config", help="flat key = value config file, or 'demo' for the bundled W-trick demo")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--workers", type=int, default=1, help="worker threads; output does not depend on it")
        p.add_argument("--cache-dir", help="factor table cache directory (default $ALMOSTTWIN_CACHE)")
        p.add_argument("--json", action="store_true", help="machine-readable JSON where a table is the default")
        for key, (_, default, help_) in spec["params"].items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None, help=f"{help_} (default {default})")
    return parser


def resolve(command, args):
    """Merge flags, config file and defaults, parsing each value; errors name the field."""
    params = COMMANDS[command]["params"]
    path = demo_config_path() if args.config == "demo" else args.config
    config = read_config(path) if path else {}
    config.pop("command", None)
    unknown = sorted(set(config) - set(params) - {"out", "workers", "cache_dir"})
    if unknown:
        raise ConfigError(f"unknown config field(s) for {command}: {', '.join(unknown)}")
    out = {}
    for key, (parser, default, _) in params.items():
        raw = getattr(args, key)
        if raw is None:
            raw = config.get(key)
        if raw is None:
            out[key] = parser(default) if isinstance(default, str) and parser is not str else default
            continue
        try:
            out[key] = parser(raw)
        except (ValueError, ZeroDivisionError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"field {key!r}: {exc}") from None
    for key in ("out", "cache_dir"):
        if getattr(args, key) is None and key in config:
            setattr(args, key, config[key])
    if "workers" in config and args.workers == 1:
        try:
            args.workers = parse_int(config["workers"])
        except ValueError as exc:
            raise ConfigError(f"field 'workers': {exc}") from None
    if args.workers < 1:
        raise ConfigError("field 'workers' must be positive")
    return out


def make_indicator(p):
    try:
        kind = prime_sets.Kind(p["kind"])
    except ValueError:
        raise ConfigError(f"field 'kind': unknown weight kind {p['kind']!r}") from None
    return prime_sets.WeightedIndicator(kind, shifts=p["shifts"], rho=p["rho"], k=p["k"], indicator=p["indicator"])


def table_for(limit, args):
    return prime_sets.cached_factor_table(int(limit), args.cache_dir)


def pmap(fn, items, workers):
    """Ordered map; results never depend on the worker count."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands

def cmd_sieve(p, args):
    spec = make_indicator(p)
    N = p["N"]
    table = table_for(N + spec.max_shift, args)
    weights = prime_sets.enumerate_weights(spec, N, table)
    if args.out and args.out.endswith(".npy"):
        np.save(args.out, weights)
        return dump_json({"N": N, "kind": spec.kind.value, "support": int(np.count_nonzero(weights)), "sum": math.fsum(weights), "path": args.out}), False
    buf = io.StringIO()
    buf.write("n,weight\n")
    for n in np.flatnonzero(weights):
        buf.write(f"{n},{fmt(weights[n])}\n")
    return buf.getvalue(), True


def cmd_singular_series(p, args):
    big = linear_systems.shifted_system(p["system"], p["shifts"])
    res = linear_systems.singular_series(big, p["cutoff"])
    return dump_json({"system": str(big), **res.to_dict()}), True


def _max_value(system, region):
    corners = np.array(list(itertools.product(*region.box)), dtype=np.int64)
    return int(system.evaluate(corners).max())


def cmd_count(p, args):
    spec = make_indicator(p)
    system = p["system"]
    scales = (p["N"],) if p["N"] is not None else p["scales"]
    regions = [counting.scaled_box(system, N) for N in scales]
    top = max(_max_value(system, r) for r in regions)
    table = table_for(max(top, 2) + spec.max_shift, args)

    def row(i):
        return counting.density_report(system, spec, [scales[i]], table, p["cutoff"], [regions[i]])[0]

    rows = pmap(row, range(len(scales)), args.workers)
    return counting.density_csv(rows), True


def cmd_wtrick(p, args):
    spec = make_indicator(p)
    system = p["system"]
    region = counting.LatticeRegion(p["box"])
    if region.d != system.d:
        raise ConfigError(f"field 'box': dimension {region.d} does not match the system (d = {system.d})")
    table = table_for(max(_max_value(system, region), 2) + spec.max_shift, args)
    check = counting.w_trick_identity_check(system, p["shifts"], p["w"], region, spec, table)
    if args.json:
        return dump_json(check.to_dict()), True
    mode = "rational" if check.exact else "float"
    return f"exact: {fmt(check.equal)}, residual: {fmt(check.residual)}, lhs: {fmt(check.lhs)}, rhs: {fmt(check.rhs)}, residues: {check.residues}, mode: {mode}\n", True


def _gowers_input(p):
    chosen = [k for k in ("const", "input", "random") if p[k] is not None]
    if len(chosen) != 1:
        raise ConfigError("exactly one of 'const', 'input', 'random' must be given")
    if p["const"] is not None:
        return np.full(p["N"], p["const"])
    if p["random"] is not None:
        return np.random.default_rng(p["seed"]).choice([-1.0, 1.0], size=p["random"])
    path = p["input"]
    if not os.path.exists(path):
        raise ConfigError(f"field 'input': no such file {path}")
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path, delimiter=",", ndmin=1)


def cmd_gowers(p, args):
    values = _gowers_input(p)

    def norm(k):
        if p["interval"]:
            return gowers.gowers_norm_interval(values, k, method=p["method"])
        return gowers.gowers_norm_cyclic(values, k, p["method"])

    results = pmap(norm, p["k"], args.workers)
    if args.json:
        return dump_json([{"k": r.k, "method": r.method, "value": r.value} for r in results]), True
    lines = ["k,method,value"] + [f"{r.k},{r.method},{fmt(r.value)}" for r in results]
    return "\n".join(lines) + "\n", True


def cmd_majorant(p, args):
    theta = make_indicator(p)
    W = primorial(p["w"])
    N = p["N"]
    spec = sieve_weights.MajorantSpec(p["gamma"], N, W, p["b"], linear_systems.ShiftTuple(p["shifts"]), sieve_weights.get_cutoff(p["chi"]))
    if not spec.check_residue():
        raise PreconditionError(f"(b + h, W) != 1 for some shift: b = {p['b']}, W = {W}")
    table = table_for(W * N + p["b"] + theta.max_shift, args)
    nu = sieve_weights.nu_array(spec)
    scan = sieve_weights.majorization_scan(theta, spec, N, p["scan_c"], table, nu_values=nu)
    corr = sieve_weights.correlation_estimate(spec, linear_systems.AffineSystem.from_rows([[1]]), counting.LatticeRegion.interval(1, N))
    exact_mean = sieve_weights.exact_nu_mean(spec)
    out = {
        "params": {"N": N, "gamma": spec.gamma, "R": spec.R, "W": W, "b": p["b"], "shifts": list(p["shifts"]), "chi": spec.cutoff.name, "c_chi": spec.cutoff.energy},
        "nu_mean": math.fsum(nu[1:]) / N,
        "nu_exact_mean": exact_mean,
        "nu_asymptotic_mean": spec.cutoff.energy**spec.r,
        "scan": scan.to_dict(),
        "correlation": {k: v for k, v in corr.to_dict().items() if k != "params"},
    }
    return dump_json(out), True


def cmd_bohr(p, args):
    spec = make_indicator(p)
    N, W, b = p["N"], p["W"], p["b"]
    table = table_for(W * N + b + spec.max_shift, args)

    def row(alpha):
        xi = nilsequences.trapezoid_bohr_function(alpha, p["center"], p["width"], p["margin"])
        return alpha, counting.bohr_density(spec, xi, N, W, b, table)

    rows = pmap(row, p["alpha"], args.workers)
    if args.json:
        return dump_json([{"alpha": a, **r.to_dict()} for a, r in rows]), True
    lines = ["alpha,mean_theta_xi,mean_xi,delta,mean_theta,ratio_to_mean"]
    for a, r in rows:
        lines.append(",".join(fmt(v) for v in (a, r.mean_theta_xi, r.mean_xi, r.delta, r.mean_theta, r.delta / r.mean_theta if r.mean_theta else float("nan"))))
    return "\n".join(lines) + "\n", True


def _forbidden_for(spec):
    if spec.kind is prime_sets.Kind.THETA1:
        return linear_systems.chen_forbidden
    if spec.kind is prime_sets.Kind.THETA2:
        return linear_systems.tuple_forbidden(spec.shifts)
    if spec.kind is prime_sets.Kind.THETA3:
        return lambda q: {0, 1} if q % 4 == 3 else {0}
    return lambda q: {0}


def cmd_solve(p, args):
    spec = make_indicator(p)
    mat = p["matrix"]
    system = linear_systems.kernel_parametrization(mat)
    forbidden = _forbidden_for(spec)
    obstructions = [int(q) for q in primes_up_to(p["local_bound"]) if not linear_systems.local_solution_exists(mat, int(q), forbidden)]
    out = {"matrix": mat, "parametrization": system.to_dict(), "parametrization_str": str(system), "obstructed_primes": obstructions, "rows": []}
    if not obstructions:
        regions = [counting.scaled_box(system, N) for N in p["scales"]]
        top = max(_max_value(system, r) for r in regions)
        table = table_for(max(top, 2) + spec.max_shift, args)
        rows = counting.density_report(system, spec, p["scales"], table, p["cutoff"], regions)
        out["rows"] = [r.__dict__ for r in rows]
    return dump_json(out), True


HANDLERS = {
    "sieve": cmd_sieve,
    "singular-series": cmd_singular_series,
    "count": cmd_count,
    "wtrick-check": cmd_wtrick,
    "gowers": cmd_gowers,
    "majorant": cmd_majorant,
    "bohr": cmd_bohr,
    "solve": cmd_solve,
}


def demo_config_path():
    return str(resources.files("almosttwin") / "configs" / "wtrick_demo.cfg")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = resolve(args.command, args)
        text, to_file = HANDLERS[args.command](params, args)
        if args.out and to_file:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except AlmostTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
