"""Command line front end.

Commands: ``solve``, ``converge``, ``sweep-r``, ``sweep-n``, ``exact-disk``,
``mesh`` and ``config``.  Every config key is also a flag
``--<section>-<key>`` (underscores become hyphens) that overrides the file.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
from importlib import resources

from . import assembly, config as cfgmod, experiments, mesh as meshmod, oracle
from ._io import atomic_write_text
from .errors import ConfigError, RdtnError

log = logging.getLogger("rdtn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

MANIFEST = "manifest.json"
ORACLE_MATCH_DISTANCE = 0.1


class OverwriteError(ConfigError):
    """Existing output was produced by a different configuration."""


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def fmt(x):
    """Number to text with 17 significant digits; ``None`` becomes empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, str)):
        return str(x).lower() if isinstance(x, bool) else x
    if isinstance(x, int):
        return str(x)
    return "%.17g" % x


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(payload):
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _config_dict(run):
    return {name: {key: cfgmod.format_value(getattr(getattr(run, name), key))
                   for key in (k for s, k in cfgmod.all_keys() if s == name)}
            for name in cfgmod.SECTIONS}


# ---------------------------------------------------------------------------
# output handling
# ---------------------------------------------------------------------------

class Output:
    """Writes result files for one command, guarding against stale overwrites.

    A ``manifest.json`` in the output directory maps each result stem to the
    hash of the configuration that produced it.
    """

    def __init__(self, run, command, force=False):
        self.run = run
        self.command = command
        self.directory = run.output.directory
        self.hash = run.hash()
        self.force = force

    def _manifest_path(self):
        return os.path.join(self.directory, MANIFEST)

    def _manifest(self):
        path = self._manifest_path()
        if not os.path.exists(path):
            return {}
        with open(path) as fh:
            try:
                return json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"corrupt {path}: {exc}") from None

    def check(self, stem):
        recorded = self._manifest().get(stem)
        if recorded is not None and recorded != self.hash and not self.force:
            raise OverwriteError(
                f"{os.path.join(self.directory, stem)}.* was written by config {recorded[:12]}, "
                f"current config is {self.hash[:12]}; pass --force to overwrite")

    def provenance(self, extra=None):
        payload = {
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.run.solver.rng_seed,
            "config": _config_dict(self.run),
        }
        payload.update(extra or {})
        return payload

    def write(self, stem, header, rows, records_key="rows", extra=None, text_files=None):
        """Write ``stem.csv`` / ``stem.json`` per the configured formats."""
        self.check(stem)
        paths = []
        if "csv" in self.run.output.formats:
            paths.append(os.path.join(self.directory, f"{stem}.csv"))
            atomic_write_text(paths[-1], csv_text(header, rows))
        if "json" in self.run.output.formats:
            records = [dict(zip(header, (_json_value(v) for v in row))) for row in rows]
            paths.append(os.path.join(self.directory, f"{stem}.json"))
            atomic_write_text(paths[-1], json_text(self.provenance({records_key: records, **(extra or {})})))
        for name, text in (text_files or {}).items():
            paths.append(os.path.join(self.directory, name))
            atomic_write_text(paths[-1], text)
        manifest = self._manifest()
        manifest[stem] = self.hash
        atomic_write_text(self._manifest_path(), json_text(manifest))
        for p in paths:
            log.info("wrote %s", p)
        return paths


def _json_value(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

POLE_HEADER = ["re_k", "im_k", "multiplicity", "residual", "mesh_level"]


def _solver(run):
    return run.solver_config()


def pole_rows(poles):
    return [[p.k.real, p.k.imag, p.multiplicity, p.residual, p.mesh_level] for p in poles]


def cmd_solve(run, out):
    problem = run.build_problem()
    cfg = _solver(run)
    level = run.mesh.level
    if run.solver.strategy == "direct":
        poles = experiments.solve_direct(problem, cfg, run.mesh.h1, level)
    else:
        poles = experiments.solve_hierarchical(problem, cfg, run.mesh.h1, level)
    for p in poles:
        log.info("k = %.8f%+.8fi  m = %d  residual = %.2e", p.k.real, p.k.imag, p.multiplicity, p.residual)
    out.write("poles", POLE_HEADER, pole_rows(poles), records_key="poles")
    return poles


def _oracle_available(problem):
    return problem.shape.kind == "disk" and problem.shape.radius == 1.0


def _seeds(run, problem, cfg):
    """Seeds and exact values for tracked poles."""
    exact_poles = oracle.disk_exact_poles(problem.n_inside, problem.search_region.as_tuple()) \
        if _oracle_available(problem) else None
    seeds = list(run.sweep.poles)
    if not seeds:
        if exact_poles is not None:
            seeds = [p.k for p in exact_poles]
        else:
            seeds = [p.k for p in experiments.solve_hierarchical(problem, cfg, run.mesh.h1, 1)]
    exact = None
    if exact_poles:
        exact = []
        for s in seeds:
            best = min(exact_poles, key=lambda p: abs(p.k - s))
            exact.append(best.k if abs(best.k - s) < ORACLE_MATCH_DISTANCE else None)
    return seeds, exact


CONVERGENCE_HEADER = ["label", "level", "h", "re_k", "im_k", "multiplicity", "re_e", "im_e", "abs_e",
                      "order", "reference", "ambiguous"]


def cmd_converge(run, out):
    if run.mesh.levels < 3:
        raise ConfigError("converge needs mesh.levels >= 3")
    problem = run.build_problem()
    cfg = _solver(run)
    seeds, exact = _seeds(run, problem, cfg)
    poles = [experiments.TrackedPole(f"p{i}", s, None if exact is None else exact[i])
             for i, s in enumerate(seeds)]
    hier = experiments.Hierarchy(problem, run.mesh.h1, run.mesh.levels)
    experiments.track_hierarchy(hier, poles, cfg)
    rows, table_rows = [], []
    for pole in poles:
        for r in experiments.convergence_rows(pole, run.mesh.h1):
            table_rows.append(r)
            rows.append([r.label, r.level, r.h,
                         None if r.k is None else r.k.real, None if r.k is None else r.k.imag,
                         r.multiplicity,
                         None if r.error is None else r.error.real, None if r.error is None else r.error.imag,
                         None if r.error is None else abs(r.error), r.order, r.reference, r.ambiguous])
    table = experiments.format_table(table_rows)
    print(table)
    out.write("convergence", CONVERGENCE_HEADER, rows, text_files={"convergence.txt": table + "\n"})
    return poles


SWEEP_HEADER = ["parameter", "value", "label", "re_k", "im_k", "re_ref", "im_ref", "relative_error"]


def _sweep_rows(rows):
    return [[r.parameter, r.value, r.label,
             None if r.k is None else r.k.real, None if r.k is None else r.k.imag,
             None if r.reference is None else r.reference.real,
             None if r.reference is None else r.reference.imag, r.relative_error] for r in rows]


def _sweep_seeds(run, problem, cfg):
    if not run.sweep.poles:
        raise ConfigError("sweep.poles is empty; give the poles to follow")
    return _seeds(run, problem, cfg)


def cmd_sweep_r(run, out):
    problem = run.build_problem()
    cfg = _solver(run)
    for R in run.sweep.radii:
        # validates every radius before any work is done
        run.replace("problem", R=float(R)).build_problem()
    seeds, exact = _sweep_seeds(run, problem, cfg)
    rows = experiments.sweep_radius(problem, run.sweep.radii, seeds, cfg, run.mesh.level, run.mesh.h1, exact)
    out.write("sweep_r", SWEEP_HEADER, _sweep_rows(rows))
    return rows


def cmd_sweep_n(run, out):
    problem = run.build_problem()
    cfg = _solver(run)
    seeds, exact = _sweep_seeds(run, problem, cfg)
    rows = experiments.sweep_truncation(problem, run.sweep.orders, seeds, cfg, run.mesh.level, run.mesh.h1, exact)
    out.write("sweep_n", SWEEP_HEADER, _sweep_rows(rows))
    return rows


EXACT_HEADER = ["re_k", "im_k", "multiplicity", "angular_order"]


def cmd_exact_disk(run, out):
    p = run.problem
    poles = oracle.disk_exact_poles(p.n_inside, p.region)
    rows = [[q.k.real, q.k.imag, q.multiplicity, q.angular_order] for q in poles]
    out.write("exact_disk", EXACT_HEADER, rows, records_key="poles")
    return poles


def matrix_files(problem, mesh, k=None):
    """Triplet dumps of ``K``, ``M`` and, when ``k`` is given, ``B(k)``."""
    system = assembly.assemble(mesh, problem)
    files = {"K.mtx": assembly.format_triplets(system.K, "stiffness"),
             "M.mtx": assembly.format_triplets(system.M, "index-weighted mass")}
    if k is not None:
        files["B.mtx"] = assembly.format_triplets(assembly.OperatorFunction(system).evaluate(k), f"B(k), k = {k!r}")
    return files


def cmd_mesh(run, out, dump_matrices=False, dump_k=None):
    problem = run.build_problem()
    mesh = experiments.Hierarchy(problem, run.mesh.h1, run.mesh.level).mesh(run.mesh.level)
    stats = mesh.quality()
    header = ["level"] + list(stats)
    files = {"mesh.rdtn": meshmod.format_mesh(mesh)}
    if dump_matrices or dump_k is not None:
        files.update(matrix_files(problem, mesh, dump_k))
    out.write("mesh_stats", header, [[run.mesh.level] + list(stats.values())], text_files=files)
    for key, value in stats.items():
        log.info("%s = %s", key, value)
    return mesh


def cmd_config(run, out):
    sys.stdout.write(run.to_text())
    return run


COMMANDS = {
    "solve": (cmd_solve, "compute the poles in the search region at mesh.level"),
    "converge": (cmd_converge, "track poles over mesh levels 1..mesh.levels and report orders"),
    "sweep-r": (cmd_sweep_r, "relative errors over truncation radii sweep.radii"),
    "sweep-n": (cmd_sweep_n, "pole values over truncation orders sweep.orders"),
    "exact-disk": (cmd_exact_disk, "exact unit-disk resonances in the search region"),
    "mesh": (cmd_mesh, "write the mesh of mesh.level and its quality statistics"),
    "config": (cmd_config, "print the resolved configuration"),
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def flag_name(section, key):
    return f"--{section}-{key}".replace("_", "-")


def preset_names():
    return sorted(p.name[:-4] for p in resources.files("rdtn.presets").iterdir() if p.name.endswith(".ini"))


def preset_text(name):
    path = resources.files("rdtn.presets") / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return path.read_text()


def _complex_arg(text):
    try:
        return complex(text.replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


COMMAND_OPTIONS = ("dump_matrices", "dump_k")


def build_parser():
    parser = argparse.ArgumentParser(prog="rdtn", description="Scattering resonances of penetrable obstacles.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        src = p.add_mutually_exclusive_group()
        src.add_argument("-c", "--config", help="INI configuration file")
        src.add_argument("-p", "--preset", help="packaged preset name")
        p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more logging")
        p.add_argument("--force", action="store_true", help="overwrite results of a different config")
        if name == "mesh":
            p.add_argument("--dump-matrices", action="store_true",
                           help="also write K.mtx and M.mtx (Matrix Market triplets)")
            p.add_argument("--dump-k", type=_complex_arg, metavar="K",
                           help="also write B.mtx, the operator at wavenumber K (implies --dump-matrices)")
        group = p.add_argument_group("config overrides")
        for section, key in cfgmod.all_keys():
            group.add_argument(flag_name(section, key), dest=f"{section}.{key}", metavar="VALUE",
                               help=f"[{section}] {key}")
    return parser


def resolve_config(args):
    overrides = {}
    for section, key in cfgmod.all_keys():
        value = getattr(args, f"{section}.{key}", None)
        if value is not None:
            overrides[(section, key)] = value
    if args.config:
        return cfgmod.load_config(args.config, overrides)
    text = preset_text(args.preset) if args.preset else ""
    return cfgmod.parse_config(text, overrides)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        run = resolve_config(args)
        func = COMMANDS[args.command][0]
        options = {name: getattr(args, name) for name in COMMAND_OPTIONS if hasattr(args, name)}
        func(run, Output(run, args.command, force=args.force), **options)
    except ConfigError as exc:
        print(f"rdtn: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RdtnError, ArithmeticError, MemoryError) as exc:
        print(f"rdtn: numerical failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
