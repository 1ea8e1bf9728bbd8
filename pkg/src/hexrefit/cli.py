"""Command-line front end: ``hexrefit {demo,refit,transfer,quality}``.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 transfer orphan queries, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RefitConfig, field_spec_from_dict, load_json, transfer_specs_from_dict
from .demos import DEMO_CONFIGS, make_demo
from .distortion import LocalizationField
from .mesh import MeshError, NormalError, gauss_points
from .quality import band_region, quality_report, sphere_region
from .solver import RefitError, refit
from .transfer import OrphanQueryError, TransferSummary, transfer_fields

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ORPHAN, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("hexrefit")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _mesh_format(path, fmt):
    if fmt:
        return fmt
    return "vtk" if str(path).lower().endswith(".vtk") else "native"


def _load(path):
    if not Path(path).is_file():
        raise CliError(f"{path}: no such file", EXIT_IO)
    return io.load_mesh(path)


def _config_arg(value):
    """``--config`` takes a JSON file path or an inline JSON object."""
    if value is None:
        return {}
    text = value.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError(f"inline config is not valid JSON ({exc})", EXIT_CONFIG) from None
    if not Path(value).is_file():
        raise CliError(f"{value}: no such config file", EXIT_IO)
    return load_json(value)


def parse_region(spec):
    """``sphere:cx,cy,cz,r`` or ``band:l_r0,r_ei,l_e,c,fmin,fmax`` (cylindrical f-band)."""
    kind, _, rest = spec.partition(":")
    try:
        vals = [float(v) for v in rest.split(",")]
    except ValueError:
        raise CliError(f"bad region spec {spec!r}", EXIT_CONFIG) from None
    if kind == "sphere" and len(vals) == 4:
        if vals[3] < 0:
            raise CliError("sphere radius must be nonnegative", EXIT_CONFIG)
        return sphere_region(vals[:3], vals[3])
    if kind == "band" and len(vals) == 6:
        l_r0, r_ei, l_e, c, fmin, fmax = vals
        lf = LocalizationField(l_r0, c=c, variant="cylindrical", r_ei=r_ei, l_e=l_e)
        return band_region(lf.f, fmin, fmax)
    raise CliError(f"bad region spec {spec!r}; use sphere:cx,cy,cz,r or band:l_r0,r_ei,l_e,c,fmin,fmax", EXIT_CONFIG)


def _report_paths(report):
    base = Path(report)
    stem = base.with_suffix("") if base.suffix == ".csv" else base
    return base if base.suffix == ".csv" else base.with_suffix(".csv"), Path(f"{stem}_quality_before.csv"), Path(f"{stem}_quality_after.csv")


def cmd_demo(args):
    seed = 0 if args.seed is None else args.seed
    try:
        mesh, config = make_demo(args.name, seed=seed)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_CONFIG) from None
    out = Path(args.out)
    fmt = _mesh_format(out, args.format)
    io.save_mesh(mesh, out, fmt=fmt, comments=[f"demo {args.name}", f"seed {seed}"])
    cfg_path = out.with_name(out.stem + ".config.json")
    cfg_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    print(f"{args.name}: {mesh.n_elements} elements, {mesh.n_nodes} nodes -> {out} (config {cfg_path})")
    return EXIT_OK


def cmd_refit(args):
    mesh = _load(args.mesh)
    try:
        cfg = RefitConfig.from_dict(_config_arg(args.config))
        problem = cfg.build_problem(mesh)
    except NormalError as exc:
        raise CliError(f"{exc}", EXIT_CONFIG) from None
    except (ConfigError, ValueError) as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    before = quality_report(mesh)
    out = Path(args.out)
    fmt = _mesh_format(out, args.format)
    code = EXIT_OK
    try:
        x, report = refit(problem)
    except RefitError as exc:
        print(f"refit failed: {exc}", file=sys.stderr)
        x, report = exc.nodes, exc.report
        code = EXIT_SOLVER
    new = mesh.with_nodes(x)
    after = quality_report(new)
    tag = "converged" if code == EXIT_OK else "NOT converged (best state so far)"
    io.save_mesh(new, out, fmt=fmt, comments=[f"refit of {args.mesh}: {tag}"])
    if args.report:
        newton_csv, q_before, q_after = _report_paths(args.report)
        if report is not None:
            report.to_csv(newton_csv)
        io.save_quality_csv(before, q_before)
        io.save_quality_csv(after, q_after)
    if report is not None:
        print(f"increments: {report.n_inc} accepted / {report.n_attempts} attempted, "
              f"{report.total_iterations} Newton iterations, {report.wall_time:.2f} s")
    print(f"before: {before.summary()}")
    print(f"after:  {after.summary()}")
    return code


def _parse_fields(items):
    fields = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep or not name:
            raise CliError(f"--field expects name=path, got {item!r}", EXIT_CONFIG)
        if not Path(path).is_file():
            raise CliError(f"{path}: no such field file", EXIT_IO)
        fields[name] = path
    if not fields:
        raise CliError("transfer needs at least one --field name=path", EXIT_CONFIG)
    return fields


def cmd_transfer(args):
    _load(args.old_mesh)  # field files carry their own sample points; the old mesh is only validated
    new = _load(args.new_mesh)
    raw = _config_arg(args.config)
    try:
        defaults, per_field = transfer_specs_from_dict(raw)
        files = _parse_fields(args.field)
        specs = {}
        fields = {}
        points = None
        for name, path in files.items():
            pts, vals = io.load_field_csv(path)
            if points is None:
                points = pts
            elif pts.shape != points.shape or not np.array_equal(pts, points):
                raise CliError(f"field {name!r} is sampled at different points than the other fields", EXIT_CONFIG)
            fields[name] = vals
            spec = dict(defaults)
            spec.update(per_field.get(name, {}))
            if "scheme" not in spec:
                spec["scheme"] = "rmls" if vals.ndim == 3 else "mls"
            specs[name] = field_spec_from_dict(spec)
            if vals.ndim == 3 and specs[name].scheme in ("mls", "logmls"):
                raise ConfigError(f"field {name!r} is a tensor; use scheme rmls or componentwise")
            if vals.ndim == 1 and specs[name].scheme in ("rmls", "componentwise"):
                raise ConfigError(f"field {name!r} is a scalar; use scheme mls or logmls")
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    query = new.nodes if args.location == "nodes" else gauss_points(new)
    summary = TransferSummary()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = transfer_fields(points, fields, query, specs, summary)
    except OrphanQueryError as exc:
        print(f"transfer failed: {exc}", file=sys.stderr)
        return EXIT_ORPHAN
    except ValueError as exc:
        raise CliError(f"transfer error: {exc}", EXIT_CONFIG) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, vals in result.items():
        path = out / f"{name}.csv"
        io.save_field_csv(path, query, vals)
        line = f"{name}: {len(vals)} values -> {path}; basis fallbacks {summary.fallbacks.get(name, 0)}"
        if name in summary.spd_violations:
            line += f"; SPD violations {summary.spd_violations[name]}"
        print(line)
    return EXIT_OK


def cmd_quality(args):
    mesh = _load(args.mesh)
    region = parse_region(args.region) if args.region else None
    rep = quality_report(mesh, region)
    if args.report:
        io.save_quality_csv(rep, args.report)
    print(rep.summary())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hexrefit", description="Refit distorted hexahedral meshes and transfer fields.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("demo", help="write a demonstration mesh and a matching refit config")
    d.add_argument("name", choices=sorted(DEMO_CONFIGS))
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--format", choices=("native", "vtk"), default=None)
    d.set_defaults(func=cmd_demo)

    r = sub.add_parser("refit", help="refit a mesh")
    r.add_argument("--mesh", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--config", help="JSON file or inline JSON object")
    r.add_argument("--report", help="Newton report CSV; quality CSVs are written next to it")
    r.add_argument("--format", choices=("native", "vtk"), default=None)
    r.set_defaults(func=cmd_refit)

    t = sub.add_parser("transfer", help="transfer sampled fields onto a new mesh")
    t.add_argument("--old-mesh", required=True)
    t.add_argument("--new-mesh", required=True)
    t.add_argument("--field", action="append", metavar="NAME=PATH", help="field CSV; repeatable")
    t.add_argument("--config", help="transfer config: JSON file or inline JSON object")
    t.add_argument("--location", choices=("nodes", "quadrature"), default="nodes", help="query points on the new mesh")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_transfer)

    q = sub.add_parser("quality", help="element quality report")
    q.add_argument("--mesh", required=True)
    q.add_argument("--region", help="sphere:cx,cy,cz,r or band:l_r0,r_ei,l_e,c,fmin,fmax")
    q.add_argument("--report", help="per-element CSV")
    q.set_defaults(func=cmd_quality)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
