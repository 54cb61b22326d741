"""Command line front end.

Each subcommand builds one experiment config from defaults, an optional
key=value file and flags (flags win), runs it, writes results.csv and
manifest.json under --out, and exits 0 when every gate passes, 1 when a
statistical gate fails, 2 on usage errors and 3 on internal invariant
violations.
"""

import argparse
import cmath
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, fields
from fractions import Fraction

import numpy as np

from . import __version__, discrete, maps, montecarlo
from .montecarlo import ExperimentConfig, Kind

EXIT_OK, EXIT_GATE, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

CHORDAL = {"cardy": Kind.CARDY, "three-way": Kind.THREE_WAY, "area": Kind.AREA_PARTITION,
           "left-side": Kind.LEFT_SIDE, "half-strip": Kind.HALF_STRIP_K8,
           "kappa-rho": Kind.KAPPA_RHO, "radial": Kind.RADIAL_K2}
LATTICE = ("perc", "ust", "domino")

DEFAULTS = {
    "cardy": dict(kappa=6.0, n_replicas=5000),
    "three-way": dict(kappa=6.0, n_replicas=4000),
    "area": dict(kappa=6.0, n_replicas=1500, exit_eps=1e-6),
    "left-side": dict(kappa=4.0, n_replicas=4000),
    "half-strip": dict(kappa=8.0, n_replicas=4000),
    "kappa-rho": dict(kappa=6.0, n_replicas=4000),
    "radial": dict(kappa=2.0, n_replicas=4000, dt=1e-4, horizon_T=0.05),
    "perc": dict(mesh=256, n_replicas=10_000),
    "ust": dict(mesh=16, strip_length=4, n_replicas=20_000),
    "ust-lemma": dict(mesh=64, strip_length=4, n_replicas=4000),
    "domino": dict(mesh=16, strip_length=2, n_replicas=4000),
}

# config-file keys and flag names map onto config fields
ALIASES = {"n": "n_replicas", "horizon": "horizon_T", "grid": "grid_resolution",
           "points": "test_points", "L": "strip_length"}


class UsageError(ValueError):
    pass


def parse_number(text):
    """Float from '6', '1e-4' or a fraction such as '16/3'."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a number: {text!r}") from None


def parse_points(text):
    try:
        return tuple(complex(p.strip().replace(" ", "")) for p in text.split(",") if p.strip())
    except ValueError:
        raise UsageError(f"cannot parse points {text!r}; use e.g. 0.5+0.5j,1j") from None


def read_config_file(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[ALIASES.get(key, key.replace("-", "_"))] = value
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="slelab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def defaults(name):
        base = {} if "mesh" in DEFAULTS[name] else {
            f.name: f.default for f in fields(ExperimentConfig)
            if f.name in ("dt", "horizon_T", "grid_resolution", "exit_eps", "shards")}
        values = {**base, "seed": 1, **DEFAULTS[name]}
        return "defaults: " + ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}"
                                        for k, v in values.items())

    def common(sp):
        sp.add_argument("--config", help="key=value file; flags override its values")
        sp.add_argument("--seed", type=int, help="master seed (default 1)")
        sp.add_argument("--n", dest="n_replicas", type=int, help="number of replicas")
        sp.add_argument("--out", help="directory for results.csv and manifest.json")
        sp.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="what to print on stdout")
        sp.add_argument("--svg", action="store_true", help="also write a plot as SVG")

    for name in CHORDAL:
        sp = sub.add_parser(name, help=f"{name} experiment", description=defaults(name))
        common(sp)
        sp.add_argument("--kappa", type=parse_number)
        sp.add_argument("--rho", type=parse_number)
        sp.add_argument("--dt", type=parse_number,
                        help="coarse step (renormalized time; plain time for radial)")
        sp.add_argument("--horizon", dest="horizon_T", type=parse_number)
        sp.add_argument("--shards", type=int, help="worker processes (results do not depend on it)")
        sp.add_argument("--points", dest="test_points", type=parse_points)
        sp.add_argument("--grid", dest="grid_resolution", type=int)
        sp.add_argument("--exit-eps", dest="exit_eps", type=parse_number)
    for name in LATTICE:
        desc = defaults(name) + (f"; with --lemma: {defaults('ust-lemma').split(': ', 1)[1]}"
                                 if name == "ust" else "")
        sp = sub.add_parser(name, help=f"{name} lattice experiment", description=desc)
        common(sp)
        sp.add_argument("--q", type=parse_number, help="FK parameter (only 1 is implemented)")
        sp.add_argument("--mesh", type=int)
        sp.add_argument("--L", dest="strip_length", type=int)
        sp.add_argument("--points", dest="test_points", type=parse_points)
        if name == "ust":
            sp.add_argument("--lemma", action="store_true",
                            help="triple-point lemma instead of the walk/oracle check")
    sp = sub.add_parser("rerun", help="replay the config stored in a manifest.json")
    sp.add_argument("manifest")
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--svg", action="store_true")
    sp = sub.add_parser("map", help="triangle and region data for one kappa")
    sp.add_argument("--kappa", type=parse_number, required=True)
    sp.add_argument("--points", dest="test_points", type=parse_points, default=())
    sp.add_argument("--svg", help="write the region outline to this file")
    return p


def _coerce(cls, values):
    names = {f.name: f for f in fields(cls)}
    out = {}
    for key, value in values.items():
        if key not in names:
            raise UsageError(f"unknown configuration key {key!r}")
        if isinstance(value, str):
            if key == "test_points":
                value = parse_points(value)
            elif key == "kind":
                continue
            elif names[key].type in ("int", int):
                value = int(value)
            else:
                value = parse_number(value)
        out[key] = value
    return out


def _validate_chordal(command, cfg):
    k = cfg.kappa
    if command in ("cardy", "three-way", "area") and not 4 < k < 8:
        raise UsageError(f"{command} needs 4 < kappa < 8 (got {k})")
    if command == "left-side" and k != 4:
        raise UsageError(f"left-side needs kappa = 4 (got {k})")
    if command == "half-strip" and k != 8:
        raise UsageError(f"half-strip needs kappa = 8 (got {k})")
    if command == "radial" and k != 2:
        raise UsageError(f"radial needs kappa = 2 (got {k})")
    if command == "kappa-rho":
        if k <= 4:
            raise UsageError(f"kappa-rho needs kappa > 4 (got {k})")
        if cfg.rho is not None and abs(cfg.rho - (k / 2 - 2)) > 1e-12:
            raise UsageError(f"kappa-rho checks the exact law at rho = kappa/2 - 2 = {k / 2 - 2}")


def parse_config(argv):
    """(command, config) from argv; raises UsageError on any invalid input."""
    args = build_parser().parse_args(argv)
    command = args.command
    if command == "map":
        return command, args
    if command == "rerun":
        return config_from_manifest(args.manifest)
    if command == "ust" and args.lemma:
        command = "ust-lemma"
    values = dict(DEFAULTS[command])
    if args.config:
        values.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config", "out", "format", "svg", "lemma"):
            values[key] = value
    if "rho" in values and values["rho"] is not None and parse_number(str(values["rho"])) <= -2:
        raise UsageError("rho must satisfy rho > -2")
    if "q" in values and parse_number(str(values["q"])) != 1:
        raise UsageError("only q = 1 (site percolation, kappa = 6) is implemented; "
                         "FK percolation for q != 1 is out of scope")
    try:
        if command in CHORDAL:
            cfg = ExperimentConfig(kind=CHORDAL[command], **_coerce(ExperimentConfig, values))
            _validate_chordal(command, cfg)
        else:
            cfg = discrete.LatticeConfig(kind=command, **_coerce(discrete.LatticeConfig, values))
    except (TypeError, ValueError) as err:
        raise UsageError(str(err)) from None
    return command, cfg


def config_from_manifest(path):
    with open(path) as fh:
        data = json.load(fh)
    try:
        command, values = data["subcommand"], dict(data["config"])
    except (KeyError, TypeError):
        raise UsageError(f"{path} is not a run manifest") from None
    values.pop("kind", None)
    values["test_points"] = tuple(complex(*p) for p in values.get("test_points", ()))
    try:
        if command in CHORDAL:
            return command, ExperimentConfig(kind=CHORDAL[command], **_coerce(ExperimentConfig, values))
        if command in discrete.LATTICE_RUNNERS:
            return command, discrete.LatticeConfig(kind=command,
                                                   **_coerce(discrete.LatticeConfig, values))
    except (TypeError, ValueError) as err:
        raise UsageError(f"{path}: {err}") from None
    raise UsageError(f"{path}: unknown subcommand {command!r}")


def run_experiment(command, cfg):
    if command in CHORDAL:
        return montecarlo.run(cfg)
    return discrete.LATTICE_RUNNERS[command](cfg)


def _plain(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Kind):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def _cell(value):
    value = _plain(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def results_csv(result):
    keys = []
    for row in result.rows:
        keys += [k for k in row if k not in keys]
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(keys)
    for row in result.rows:
        out.writerow([_cell(row.get(k, "")) for k in keys])
    return buf.getvalue()


def manifest(command, result, wall):
    cfg = {k: _plain(v) for k, v in asdict(result.config).items()}
    return dict(subcommand=command, config=cfg, seed=cfg["seed"], shards=cfg.get("shards", 1),
                version=__version__, wall_time=wall,
                results=[{k: _plain(v) for k, v in row.items()} for row in result.rows],
                gates={k: bool(v) for k, v in result.gates.items()}, passed=result.passed,
                summary={k: _plain(v) for k, v in result.summary.items()
                         if not isinstance(v, np.ndarray)})


def histogram_svg(samples, bins=20, size=320):
    counts, _ = np.histogram(samples, bins=bins, range=(0.0, 1.0))
    top = max(counts.max(), 1)
    w = size / bins
    bars = "".join(f'<rect x="{i * w:.2f}" y="{size - c / top * size:.2f}" width="{w:.2f}" '
                   f'height="{c / top * size:.2f}" fill="#58a"/>' for i, c in enumerate(counts))
    return f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">{bars}</svg>'


def plot_svg(command, result):
    if "samples" in result.summary:
        return histogram_svg(result.summary["samples"])
    if command == "domino":
        cfg = result.config
        tiling = discrete.temperley_domino_sample(cfg.mesh, cfg.strip_length, "LEFT", cfg.seed)
        return discrete.domino_svg(tiling)
    return None


def write_outputs(out_dir, command, result, wall, svg):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    try:
        for name, text in (("results.csv", results_csv(result)),
                           ("manifest.json",
                            json.dumps(manifest(command, result, wall), indent=2) + "\n")):
            path = os.path.join(out_dir, name)
            with open(path, "w") as fh:
                written.append(path)
                fh.write(text)
        if svg:
            path = os.path.join(out_dir, f"{command}.svg")
            picture = plot_svg(command, result)
            if picture is not None:
                with open(path, "w") as fh:
                    written.append(path)
                    fh.write(picture)
    except OSError:
        for path in written:
            if os.path.exists(path):
                os.remove(path)
        raise


def run_map(args):
    k = args.kappa
    region = maps.region_description(k)
    print(f"kappa = {k:g}: {region.tag} ({region.note})")
    if region.tag == "TRIANGLE":
        g = maps.triangle_geometry(k)
        print(f"alpha = {g.alpha:.6g}  beta = {g.beta:.6g}")
        for name, v, ang in zip("abc", g.vertices, g.angles()):
            print(f"{name} = {v.real:.10f}{v.imag:+.10f}i  angle = {ang / math.pi:.6g} pi")
        if abs(g.beta - 0.5) < 1e-12:
            print("right angle at b")
        for z in args.test_points:
            w = maps.sc_triangle_map(g, z)
            lam = maps.barycentric(g, w)
            print(f"F({z}) = {w.real:.10f}{w.imag:+.10f}i  barycentric = "
                  + ", ".join(f"{x:.6f}" for x in lam))
    elif region.tag == "HALF_STRIP":
        for z in args.test_points:
            w = maps.halfstrip_map(z)
            print(f"F({z}) = {w.real:.10f}{w.imag:+.10f}i")
    elif region.tag == "SLIT_LOG":
        for z in args.test_points:
            print(f"arg({z})/pi = {cmath.phase(z) / math.pi:.10f}")
    else:
        print("angles: " + ", ".join(f"{a / math.pi:.6g} pi" for a in region.angles))
    if args.svg:
        with open(args.svg, "w") as fh:
            fh.write(maps.region_svg(k))
    return EXIT_OK


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, cfg = parse_config(argv)
    except UsageError as err:
        print(f"slelab: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_USAGE
    except OSError as err:
        print(f"slelab: error: cannot read {err.filename}: {err.strerror}", file=sys.stderr)
        return EXIT_USAGE
    if command == "map":
        try:
            return run_map(cfg)
        except ValueError as err:
            print(f"slelab: error: {err}", file=sys.stderr)
            return EXIT_USAGE
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        result = run_experiment(command, cfg)
    except (AssertionError, ArithmeticError) as err:
        print(f"slelab: internal invariant violated: {err}", file=sys.stderr)
        return EXIT_INTERNAL
    wall = time.perf_counter() - start
    if args.out:
        try:
            write_outputs(args.out, command, result, wall, args.svg)
        except OSError as err:
            print(f"slelab: error: cannot write {err.filename}: {err.strerror}", file=sys.stderr)
            return EXIT_INTERNAL
    if args.format == "json":
        print(json.dumps(manifest(command, result, wall), indent=2))
    else:
        sys.stdout.write(results_csv(result))
    for name, ok in result.gates.items():
        if not ok:
            print(f"gate failed: {name}", file=sys.stderr)
    return EXIT_OK if result.passed else EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
