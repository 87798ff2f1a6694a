"""Run configuration: typed INI sections with lossless round trip and a hash.

File layout (all keys optional, defaults below)::

    [problem]
    shape = disk            ; disk | ellipse | square | lshape
    radius = 1.0            ; disk
    semi_major = 1.2        ; ellipse
    semi_minor = 0.8        ; ellipse
    side = 1.0              ; square
    outer_side = 1.0        ; lshape
    n_inside = 4.0
    R = 1.25
    N = 20
    region = 0.0 4.0 -4.0 0.0   ; re_min re_max im_min im_max

    [mesh]
    h1 = 0.12566370614359174
    levels = 4              ; J, number of meshes in a hierarchy
    level = 3               ; mesh used by ``solve`` and the sweeps

    [solver]
    strategy = hierarchical ; hierarchical | direct
    ... every field of :class:`rdtn.neps.SolverConfig`

    [output]
    directory = out
    formats = csv json

    [sweep]
    radii = 1.05 1.1 1.15 1.2 1.25
    orders = 5 6 ... 20
    poles = (1.9777-0.2791j)    ; seeds for tracked poles

Floats are written with ``repr`` so that reading back gives identical
values; the hash is SHA-256 of the canonical text without ``[output]``.
"""
import configparser
import dataclasses
import hashlib
import math
import typing
from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

from . import geometry, neps
from .errors import ConfigError

SHAPES = ("disk", "ellipse", "square", "lshape")
STRATEGIES = ("hierarchical", "direct")
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class ProblemSection:
    shape: str = "disk"
    radius: float = 1.0
    semi_major: float = 1.2
    semi_minor: float = 0.8
    side: float = 1.0
    outer_side: float = 1.0
    n_inside: float = 4.0
    R: float = 1.25
    N: int = 20
    region: Tuple[float, float, float, float] = (0.0, 4.0, -4.0, 0.0)

    def build_shape(self):
        if self.shape == "disk":
            return geometry.Disk(self.radius)
        if self.shape == "ellipse":
            return geometry.Ellipse(self.semi_major, self.semi_minor)
        if self.shape == "square":
            return geometry.Square(self.side)
        if self.shape == "lshape":
            return geometry.LShape(self.outer_side)
        raise ConfigError(f"unknown shape {self.shape!r}; expected one of {', '.join(SHAPES)}")

    def build(self):
        try:
            return geometry.Problem(self.build_shape(), self.n_inside, self.R, self.N,
                                    geometry.Rect(*self.region))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class MeshSection:
    h1: float = 0.04 * math.pi
    levels: int = 4
    level: int = 3


@dataclass(frozen=True)
class SolverSection:
    strategy: str = "hierarchical"
    quad_nodes_localize: int = 16
    quad_nodes_extract: int = 64
    probes: int = 24
    rank_tol: float = 1e-8
    residual_tol: float = 1e-6
    max_depth: int = 6
    indicator_threshold: float = 1e-2
    rng_seed: int = 0
    cluster_tol: Optional[float] = None
    cluster_rtol: float = 4e-3
    dedup_rtol: float = 1e-5
    track_nodes: int = 24
    track_probes: int = 8
    track_radius: float = 0.05

    def build(self):
        kwargs = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "strategy"}
        try:
            return neps.SolverConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: Tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class SweepSection:
    radii: Tuple[float, ...] = (1.05, 1.1, 1.15, 1.2, 1.25)
    orders: Tuple[int, ...] = tuple(range(5, 21))
    poles: Tuple[complex, ...] = ()


SECTIONS = {
    "problem": ProblemSection,
    "mesh": MeshSection,
    "solver": SolverSection,
    "output": OutputSection,
    "sweep": SweepSection,
}


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    mesh: MeshSection = field(default_factory=MeshSection)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def __post_init__(self):
        p, m, s, o = self.problem, self.mesh, self.solver, self.output
        if p.shape not in SHAPES:
            raise ConfigError(f"unknown shape {p.shape!r}; expected one of {', '.join(SHAPES)}")
        if m.levels < 1:
            raise ConfigError("mesh.levels must be at least 1")
        if m.level < 1:
            raise ConfigError("mesh.level must be at least 1")
        if not m.h1 > 0:
            raise ConfigError("mesh.h1 must be positive")
        if s.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        bad = [f for f in o.formats if f not in FORMATS]
        if bad or not o.formats:
            raise ConfigError(f"output.formats must be a non-empty subset of {FORMATS}")
        if any(not 1 <= n <= 60 for n in self.sweep.orders):
            raise ConfigError("sweep.orders must lie in 1..60")
        # building validates the remaining module invariants
        p.build()
        s.build()

    def build_problem(self):
        return self.problem.build()

    def solver_config(self):
        return self.solver.build()

    def replace(self, section, **changes):
        try:
            new = dataclasses.replace(getattr(self, section), **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return dataclasses.replace(self, **{section: new})

    def to_text(self):
        return format_config(self)

    def hash(self):
        """SHA-256 of the canonical text, leaving out ``[output]`` (it does not affect results)."""
        text = format_config(dataclasses.replace(self, output=OutputSection()))
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# value codecs
# ---------------------------------------------------------------------------

def _field_kind(cls, name):
    return {f.name: f.type for f in fields(cls)}[name]


def _fmt_scalar(v):
    if isinstance(v, bool):
        raise ConfigError("boolean values are not supported")
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, complex):
        return repr(v)
    return str(v)


def format_value(v):
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return " ".join(_fmt_scalar(x) for x in v)
    return _fmt_scalar(v)


def _parse_int(text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None
    if value != int(value):
        raise ConfigError(f"expected an integer, got {text!r}")
    return int(value)


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_complex(text):
    try:
        return complex(text.replace("i", "j"))
    except ValueError:
        raise ConfigError(f"expected a complex number, got {text!r}") from None


_SCALAR_PARSERS = {
    int: _parse_int,
    float: _parse_float,
    str: str,
    complex: _parse_complex,
}


def _parser_for(tp):
    origin, args = typing.get_origin(tp), typing.get_args(tp)
    if origin is typing.Union:
        scalar = _SCALAR_PARSERS[next(a for a in args if a is not type(None))]
        return lambda text: None if text.lower() == "none" else scalar(text)
    if origin is tuple:
        scalar = _SCALAR_PARSERS[args[0]]
        return lambda text: tuple(scalar(x) for x in text.replace(",", " ").split())
    return _SCALAR_PARSERS[tp]


def parse_value(section, key, text):
    """Parse the string ``text`` for ``section.key`` into its typed value."""
    cls = SECTIONS.get(section)
    if cls is None:
        raise ConfigError(f"unknown section [{section}]")
    names = {f.name for f in fields(cls)}
    if key not in names:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    try:
        return _parser_for(_field_kind(cls, key))(text.strip())
    except ConfigError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def format_config(cfg):
    """Canonical INI text: fixed section and key order, every key present."""
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        sec = getattr(cfg, name)
        for f in fields(sec):
            lines.append(f"{f.name} = {format_value(getattr(sec, f.name))}")
        lines.append("")
    return "\n".join(lines)


def parse_config(text, overrides=None):
    """Build a :class:`RunConfig` from INI ``text``.

    ``overrides`` maps ``(section, key)`` to strings applied after the file.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {name: {} for name in SECTIONS}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            values[section][key] = parse_value(section, key, raw)
    for (section, key), raw in (overrides or {}).items():
        values[section][key] = parse_value(section, key, raw)
    try:
        parts = {name: SECTIONS[name](**values[name]) for name in SECTIONS}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(**parts)


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def all_keys():
    """``(section, key)`` pairs in canonical order."""
    return [(name, f.name) for name, cls in SECTIONS.items() for f in fields(cls)]
