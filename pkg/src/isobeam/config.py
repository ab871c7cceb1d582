"""Scenario files: YAML text with a schema version and line-numbered errors.

Three kinds of file are accepted::

    schema_version: 1
    name: example
    kind: quasi_static            # or fading, or interference_channel
    n_rx: 16
    snr_db: [-5, 0, 5]
    users:
      - n_antennas: 8
        powers: {value: 1.0, streams: 4}     # or an explicit list
        role: signal                          # or interference
        path_loss: 1.0
        channel: {gaussian: {seed: 7, stream: 0}}

A quasi-static ``channel`` is ``{h: M}``, ``{gram: M}`` or ``{gaussian: ...}``;
a fading one is ``{correlations: [M, ...]}`` or
``{kronecker: {receive: S, transmit: S}}`` where ``S`` is ``identity``,
``{matrix: M}`` or ``{jakes: {theta: [lo, hi], spacing: d}}``. Matrices are
lists of rows, or ``{real: rows, imag: rows}``. Numbers may be written as
arithmetic over ``pi`` (``pi/3``, ``-pi/4``, ``1/8``).

A quasi-static file may replace ``users`` with a ``three_cell`` block
(``alpha``, ``n_streams``, ``n_antennas``, ``channel_seed``). An
``interference_channel`` file has ``transmitters`` (``n_antennas`` and a
``transmit`` side each) and a 2 x 2 ``receive`` table, ``receive[q][k]``
being the link from transmitter ``k`` to receiver ``q``.
"""

import ast
import math
import operator
from fractions import Fraction
from pathlib import Path

import yaml
from yaml.constructor import SafeConstructor

from .errors import InputError, ParseError, ValidationError
from .scenarios import (
    FADING,
    QUASI_STATIC,
    GaussianChannel,
    InterferenceChannelSpec,
    JakesRecord,
    ScenarioSpec,
    UserSpec,
    build_three_cell_sdma,
    validate_user,
)

SCHEMA_VERSION = 1
INTERFERENCE_CHANNEL = "interference_channel"
DATA_DIR = Path(__file__).with_name("data")


# ---------------------------------------------------------------------------
# YAML nodes with line numbers
# ---------------------------------------------------------------------------

class _Map(dict):
    line = 0
    lines = None

    def at(self, key):
        return self.lines.get(key, self.line)


class _Seq(list):
    line = 0
    lines = None


_scalars = SafeConstructor()


def _convert(node):
    if isinstance(node, yaml.MappingNode):
        out = _Map()
        out.line = node.start_mark.line + 1
        out.lines = {}
        for key_node, val_node in node.value:
            key = _convert(key_node)
            if key in out:
                raise ParseError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
            out[key] = _convert(val_node)
            out.lines[key] = key_node.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        out = _Seq(_convert(v) for v in node.value)
        out.line = node.start_mark.line + 1
        out.lines = [v.start_mark.line + 1 for v in node.value]
        return out
    return _scalars.construct_object(node)


def _load(text):
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ParseError(exc.problem or str(exc), line) from None
    if root is None:
        raise ParseError("empty scenario file", 1)
    data = _convert(root)
    if not isinstance(data, _Map):
        raise ParseError("top level must be a mapping", data.line if hasattr(data, "line") else 1)
    return data


# ---------------------------------------------------------------------------
# field readers
# ---------------------------------------------------------------------------

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def _eval_expr(text):
    def ev(n):
        if isinstance(n, ast.Expression):
            return ev(n.body)
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)):
            return n.value
        if isinstance(n, ast.Name) and n.id == "pi":
            return math.pi
        if isinstance(n, ast.BinOp) and type(n.op) in _OPS:
            return _OPS[type(n.op)](ev(n.left), ev(n.right))
        if isinstance(n, ast.UnaryOp) and type(n.op) in _OPS:
            return _OPS[type(n.op)](ev(n.operand))
        raise ValueError(text)

    return float(ev(ast.parse(text.strip(), mode="eval")))


def _number(value, line, what):
    if isinstance(value, bool):
        raise ParseError(f"{what}: expected a number, got {value!r}", line)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return _eval_expr(value)
        except (ValueError, SyntaxError, ZeroDivisionError):
            pass
    raise ParseError(f"{what}: expected a number, got {value!r}", line)


def _integer(value, line, what):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{what}: expected an integer, got {value!r}", line)
    return value


def _require(m, key, what="scenario"):
    if not isinstance(m, _Map):
        raise ParseError(f"{what}: expected a mapping", getattr(m, "line", None))
    if key not in m:
        raise ParseError(f"{what}: missing field {key!r}", m.line)
    return m[key]


def _check_keys(m, allowed, what):
    if not isinstance(m, _Map):
        raise ParseError(f"{what}: expected a mapping", getattr(m, "line", None))
    for key in m:
        if key not in allowed:
            raise ParseError(f"{what}: unknown field {key!r}", m.at(key))


def _matrix(value, line, what):
    if isinstance(value, _Map):
        _check_keys(value, {"real", "imag"}, what)
        re = _rows(_require(value, "real", what), value.at("real"), what)
        im = _rows(value["imag"], value.at("imag"), what) if "imag" in value else None
        if im is None:
            return re
        if len(im) != len(re) or any(len(a) != len(b) for a, b in zip(re, im)):
            raise ParseError(f"{what}: real and imag parts differ in shape", line)
        return tuple(tuple(complex(a, b) for a, b in zip(ra, rb)) for ra, rb in zip(re, im))
    return _rows(value, line, what)


def _rows(value, line, what):
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ParseError(f"{what}: a matrix is a nonempty list of rows", line)
    width = len(value[0])
    out = []
    for i, row in enumerate(value):
        row_line = value.lines[i] if isinstance(value, _Seq) else line
        if len(row) != width:
            raise ParseError(f"{what}: rows have different lengths", row_line)
        out.append(tuple(_number(v, row_line, what) for v in row))
    return tuple(out)


def _angles(value, line, what):
    if not isinstance(value, list) or len(value) != 2:
        raise ParseError(f"{what}: theta must be [min, max]", line)
    lo, hi = (_number(v, line, what) for v in value)
    if not hi > lo:
        raise ValidationError(f"{what}: theta max must exceed theta min", line)
    return lo, hi


def _side(value, line, what):
    if value == "identity":
        return "identity"
    if not isinstance(value, _Map) or len(value) != 1:
        raise ParseError(f"{what}: expected identity, {{matrix: ...}} or {{jakes: ...}}", line)
    (key, body), = value.items()
    if key == "matrix":
        return _matrix(body, value.at(key), what)
    if key == "jakes":
        _check_keys(body, {"theta", "spacing"}, what)
        lo, hi = _angles(_require(body, "theta", what), body.at("theta"), what)
        spacing = _number(_require(body, "spacing", what), body.at("spacing"), what)
        return JakesRecord(lo, hi, spacing)
    raise ParseError(f"{what}: unknown correlation type {key!r}", value.at(key))


def _powers(value, line, what):
    if isinstance(value, _Map):
        _check_keys(value, {"value", "streams"}, what)
        p = _number(_require(value, "value", what), value.at("value"), what)
        n = _integer(_require(value, "streams", what), value.at("streams"), what)
        if n < 1:
            raise ValidationError(f"{what}: streams must be >= 1", value.at("streams"))
        return (p,) * n
    if isinstance(value, list) and value:
        return tuple(_number(v, line, what) for v in value)
    raise ParseError(f"{what}: powers must be a list or {{value, streams}}", line)


def _channel(value, line, kind, what):
    if not isinstance(value, _Map) or len(value) != 1:
        raise ParseError(f"{what}: channel needs exactly one description", line)
    (key, body), = value.items()
    at = value.at(key)
    if kind == QUASI_STATIC:
        if key in ("h", "gram"):
            return {key: _matrix(body, at, what)}
        if key == "gaussian":
            _check_keys(body, {"seed", "stream", "variance"}, what)
            var = body.get("variance")
            return {"gaussian": GaussianChannel(
                seed=_integer(_require(body, "seed", what), body.at("seed"), what),
                stream=_integer(body.get("stream", 0), body.at("stream"), what),
                variance=None if var is None else _number(var, body.at("variance"), what),
            )}
    else:
        if key == "correlations":
            if not isinstance(body, list):
                raise ParseError(f"{what}: correlations must be a list of matrices", at)
            return {"correlations": tuple(_matrix(m, body.lines[i], what)
                                          for i, m in enumerate(body))}
        if key == "kronecker":
            _check_keys(body, {"receive", "transmit"}, what)
            return {s: _side(body[s], body.at(s), what) if s in body else "identity"
                    for s in ("receive", "transmit")}
    raise ParseError(f"{what}: channel type {key!r} is not valid for {kind} scenarios", at)


def _user(m, kind, index):
    what = f"user {index}"
    if not isinstance(m, _Map):
        raise ParseError(f"{what}: expected a mapping", getattr(m, "line", None))
    _check_keys(m, {"n_antennas", "powers", "role", "path_loss", "channel"}, what)
    fields = dict(
        n_antennas=_integer(_require(m, "n_antennas", what), m.at("n_antennas"), what),
        powers=_powers(_require(m, "powers", what), m.at("powers"), what),
        role=m.get("role", "signal"),
        path_loss=_number(m.get("path_loss", 1.0), m.at("path_loss"), what),
    )
    fields.update(_channel(_require(m, "channel", what), m.at("channel"), kind, what))
    return UserSpec(**fields)


def _snr(data):
    value = data.get("snr_db", [])
    if not isinstance(value, list):
        raise ParseError("snr_db must be a list", data.at("snr_db"))
    return tuple(_number(v, data.at("snr_db"), "snr_db") for v in value)


def _validated(build, line):
    try:
        return build()
    except ParseError as exc:
        if exc.line is None:
            # scalars carry no position; use the enclosing item's line
            raise type(exc)(str(exc), line) from None
        raise
    except (InputError, ValueError) as exc:
        raise ValidationError(str(exc), line) from None


def parse_text(text):
    """Parse scenario text into a `ScenarioSpec` or `InterferenceChannelSpec`."""
    data = _load(text)
    version = _require(data, "schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
                         data.at("schema_version"))
    kind = _require(data, "kind")
    name = str(data.get("name", "scenario"))
    snr = _snr(data)
    n_rx = _integer(_require(data, "n_rx"), data.at("n_rx"), "n_rx")

    if kind == INTERFERENCE_CHANNEL:
        _check_keys(data, {"schema_version", "kind", "name", "n_rx", "snr_db",
                           "transmitters", "receive"}, "scenario")
        tx = _require(data, "transmitters")
        if not isinstance(tx, list) or len(tx) != 2:
            raise ValidationError("transmitters must list exactly two entries", data.at("transmitters"))
        counts, sides = [], []
        for i, t in enumerate(tx):
            what = f"transmitter {i}"
            _check_keys(t, {"n_antennas", "transmit"}, what)
            counts.append(_integer(_require(t, "n_antennas", what), t.at("n_antennas"), what))
            sides.append(_side(_require(t, "transmit", what), t.at("transmit"), what))
        rx = _require(data, "receive")
        if not isinstance(rx, list) or len(rx) != 2 or any(
                not isinstance(r, list) or len(r) != 2 for r in rx):
            raise ValidationError("receive must be a 2 x 2 table", data.at("receive"))
        table = tuple(tuple(_side(v, rx[q].lines[k], f"receive[{q}][{k}]")
                            for k, v in enumerate(row)) for q, row in enumerate(rx))
        return _validated(lambda: InterferenceChannelSpec(name, n_rx, tuple(counts),
                                                          tuple(sides), table, snr), data.line)

    if kind not in (QUASI_STATIC, FADING):
        raise ParseError(f"unknown kind {kind!r}", data.at("kind"))
    _check_keys(data, {"schema_version", "kind", "name", "n_rx", "snr_db", "users",
                       "three_cell"}, "scenario")
    if "three_cell" in data:
        if kind != QUASI_STATIC or "users" in data:
            raise ValidationError("three_cell needs kind quasi_static and no users list",
                                  data.at("three_cell"))
        tc = data["three_cell"]
        what = "three_cell"
        _check_keys(tc, {"alpha", "n_streams", "n_antennas", "channel_seed"}, what)
        kwargs = dict(
            alpha=_number(tc.get("alpha", 0.5), tc.at("alpha"), what),
            n_streams=_integer(_require(tc, "n_streams", what), tc.at("n_streams"), what),
            n_antennas=_integer(tc.get("n_antennas", 8), tc.at("n_antennas"), what),
            seed=_integer(_require(tc, "channel_seed", what), tc.at("channel_seed"), what),
        )
        spec = _validated(lambda: build_three_cell_sdma(n_rx=n_rx, snr_db=snr, **kwargs), tc.line)
        return ScenarioSpec(name, spec.kind, spec.n_rx, spec.users, spec.snr_db)

    users_node = _require(data, "users")
    if not isinstance(users_node, list) or not users_node:
        raise ValidationError("users must be a nonempty list", data.at("users"))
    users = []
    for i, u in enumerate(users_node):
        line = users_node.lines[i]
        user = _validated(lambda: _user(u, kind, i), line)
        # check each user on its own so the error points at its entry
        _validated(lambda: validate_user(i, user, kind, n_rx), line)
        users.append(user)
    return _validated(lambda: ScenarioSpec(name, kind, n_rx, tuple(users), snr), data.line)


def resolve_path(path):
    """A file path, or the name of a bundled scenario (with or without ``.scn``)."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (DATA_DIR / p.name, DATA_DIR / f"{p.name}.scn"):
        if cand.exists():
            return cand
    raise InputError(f"scenario file not found: {path}")


def parse_scenario(path):
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {p}: {exc}") from None
    try:
        return parse_text(text)
    except ParseError as exc:
        exc.args = (f"{p}: {exc.args[0]}",)
        raise


def bundled_scenarios():
    return sorted(p.stem for p in DATA_DIR.glob("*.scn"))


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _fmt_number(x):
    """Shortest text that parses back to exactly ``x``, using pi fractions when exact."""
    x = float(x)
    if x != 0.0 and math.isfinite(x):
        frac = Fraction(x / math.pi).limit_denominator(12)
        if frac.numerator and abs(frac.numerator) <= 24:
            num = "" if abs(frac.numerator) == 1 else f"{abs(frac.numerator)}*"
            text = ("-" if frac < 0 else "") + f"{num}pi" + (
                f"/{frac.denominator}" if frac.denominator != 1 else "")
            if _eval_expr(text) == x:
                return text
    if x.is_integer() and abs(x) < 1e15:
        return int(x)
    return x


def _emit_matrix(m):
    if any(isinstance(v, complex) for row in m for v in row):
        return {"real": [[float(complex(v).real) for v in row] for row in m],
                "imag": [[float(complex(v).imag) for v in row] for row in m]}
    return [[_fmt_number(v) for v in row] for row in m]


def _emit_side(s):
    if s == "identity":
        return "identity"
    if isinstance(s, JakesRecord):
        return {"jakes": {"theta": [_fmt_number(s.theta_min), _fmt_number(s.theta_max)],
                          "spacing": _fmt_number(s.spacing)}}
    return {"matrix": _emit_matrix(s)}


def _emit_powers(p):
    if len(set(p)) == 1:
        return {"value": _fmt_number(p[0]), "streams": len(p)}
    return [_fmt_number(v) for v in p]


def _emit_user(u, kind):
    out = {"n_antennas": u.n_antennas, "powers": _emit_powers(u.powers), "role": u.role,
           "path_loss": _fmt_number(u.path_loss)}
    if kind == QUASI_STATIC:
        if u.h is not None:
            ch = {"h": _emit_matrix(u.h)}
        elif u.gram is not None:
            ch = {"gram": _emit_matrix(u.gram)}
        else:
            g = {"seed": u.gaussian.seed, "stream": u.gaussian.stream}
            if u.gaussian.variance is not None:
                g["variance"] = u.gaussian.variance
            ch = {"gaussian": g}
    elif u.correlations is not None:
        ch = {"correlations": [_emit_matrix(c) for c in u.correlations]}
    else:
        ch = {"kronecker": {"receive": _emit_side(u.receive or "identity"),
                            "transmit": _emit_side(u.transmit or "identity")}}
    out["channel"] = ch
    return out


def emit_text(spec):
    """YAML text for ``spec``; `parse_text` reads it back to an equal object."""
    if isinstance(spec, InterferenceChannelSpec):
        doc = {
            "schema_version": SCHEMA_VERSION, "name": spec.name, "kind": INTERFERENCE_CHANNEL,
            "n_rx": spec.n_rx, "snr_db": [_fmt_number(s) for s in spec.snr_db],
            "transmitters": [{"n_antennas": m, "transmit": _emit_side(t)}
                             for m, t in zip(spec.n_antennas, spec.transmit)],
            "receive": [[_emit_side(s) for s in row] for row in spec.receive],
        }
    else:
        doc = {
            "schema_version": SCHEMA_VERSION, "name": spec.name, "kind": spec.kind,
            "n_rx": spec.n_rx, "snr_db": [_fmt_number(s) for s in spec.snr_db],
            "users": [_emit_user(u, spec.kind) for u in spec.users],
        }
    return yaml.dump(doc, Dumper=yaml.SafeDumper, sort_keys=False, default_flow_style=None, width=100)


def emit_scenario(spec, path):
    Path(path).write_text(emit_text(spec), encoding="utf-8")
