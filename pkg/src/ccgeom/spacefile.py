"""Line-oriented space files and the built-in fixture catalog.

Grammar (EBNF)::

    file        = { blank | comment | section } ;
    section     = "[" name "]" newline { entry } ;
    header      : "name" "=" text | "depth" "=" integer | "anchor" "=" expr { "," expr }
    coordinates : ident { "," ident }
    fields      : ident "=" "[" expr { "," expr } "]"
    weights     : ident "=" integer
    expr        = term { ("+" | "-") term } ;
    term        = unary { ("*" | "/") unary } ;
    unary       = ("+" | "-") unary | power ;
    power       = atom [ ("^" | "**") integer ] ;
    atom        = number | ident | "(" expr ")" ;
    number      = digit { digit } [ "." digit { digit } ] ;

Comments start with ``#``.  Division is allowed by constants only and
exponents must be non-negative integers.  Generators are listed in
``[fields]``; their order must have nondecreasing weights.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .polyalg import CoordinateChart, Polynomial, PolyVectorField
from .structure import WeightedSystem

SECTIONS = ("header", "coordinates", "fields", "weights")


class SpaceFileError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        self.message = message
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


class _ExprParser:
    def __init__(self, text: str, variables: Tuple[str, ...], line: int, col0: int):
        self.text = text
        self.vars = variables
        self.line = line
        self.col0 = col0
        self.toks = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise self._err(f"unexpected character {text[pos:].strip()[0]!r}", len(text) - len(text[pos:].lstrip()))
            kind = "num" if m.group(1) else "id" if m.group(2) else "op"
            start = m.start(m.lastindex)
            self.toks.append((kind, m.group(m.lastindex), start))
            pos = m.end()
        self.i = 0

    def _err(self, msg, pos):
        return SpaceFileError(msg, self.line, self.col0 + pos + 1)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", len(self.text))

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def parse(self) -> Polynomial:
        if not self.toks:
            raise self._err("empty expression", 0)
        p = self.expr()
        kind, val, pos = self.peek()
        if kind != "eof":
            raise self._err(f"unexpected {val!r}", pos)
        return p

    def expr(self):
        p = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if not q.is_constant():
                    raise self._err("division by a non-constant expression", pos)
                c = q.constant_term()
                if c == 0:
                    raise self._err("division by zero", pos)
                p = p.scale(1 / Fraction(c))
        return p

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in ("+", "-"):
            self.take()
            p = self.unary()
            return -p if val == "-" else p
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val in ("^", "**"):
            self.take()
            k2, v2, p2 = self.take()
            if k2 != "num" or "." in v2:
                raise self._err("exponent must be a non-negative integer", p2 if k2 != "eof" else pos + 1)
            return base ** int(v2)
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Polynomial.constant(self.vars, Fraction(val))
        if kind == "id":
            if val not in self.vars:
                raise self._err(f"undeclared coordinate {val!r}", pos)
            return Polynomial.var(self.vars, val)
        if val == "(":
            p = self.expr()
            k2, v2, p2 = self.take()
            if v2 != ")":
                raise self._err("expected ')'", p2)
            return p
        raise self._err(f"unexpected {val or 'end of expression'!r}", pos)


def parse_expression(text: str, variables, line: int = 0, column: int = 0) -> Polynomial:
    return _ExprParser(text, tuple(variables), line, column).parse()


@dataclass
class SpaceSpecDocument:
    name: str
    coordinates: Tuple[str, ...]
    fields: Dict[str, List[str]]
    weights: Dict[str, int]
    depth: Optional[int] = None
    anchor: Optional[List[str]] = None
    positions: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.coordinates)

    def to_system(self) -> WeightedSystem:
        chart = CoordinateChart(tuple(self.coordinates))
        gens, weights, names = [], [], []
        for gname, exprs in self.fields.items():
            line, col = self.positions.get(("field", gname), (0, 0))
            if len(exprs) != chart.dim:
                raise SpaceFileError(
                    f"field {gname} has {len(exprs)} components, expected {chart.dim}", line, col)
            comps = [parse_expression(e, chart.names, line, col) for e in exprs]
            if gname not in self.weights:
                raise SpaceFileError(f"missing weight for field {gname}", line, col)
            gens.append(PolyVectorField(chart, comps))
            weights.append(self.weights[gname])
            names.append(gname)
        for wname in self.weights:
            if wname not in self.fields:
                line, col = self.positions.get(("weight", wname), (0, 0))
                raise SpaceFileError(f"weight given for unknown field {wname}", line, col)
        anchor = None
        if self.anchor is not None:
            line, col = self.positions.get(("anchor",), (0, 0))
            if len(self.anchor) != chart.dim:
                raise SpaceFileError(f"anchor has {len(self.anchor)} entries, expected {chart.dim}", line, col)
            anchor = []
            for e in self.anchor:
                p = parse_expression(e, chart.names, line, col)
                if not p.is_constant():
                    raise SpaceFileError("anchor entries must be constants", line, col)
                anchor.append(p.constant_term())
        return WeightedSystem(chart, gens, tuple(weights), depth=self.depth, anchor=anchor,
                              names=tuple(names), label=self.name)


def _split_top(text: str, line: int, col: int) -> List[Tuple[str, int]]:
    """Split on commas outside parentheses, keeping column offsets."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append((text[start:i], col + start))
            start = i + 1
    parts.append((text[start:], col + start))
    return parts


_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*$")


def parse_document(text: str) -> SpaceSpecDocument:
    section = None
    name, depth, anchor = "", None, None
    coords: List[str] = []
    fields: Dict[str, List[str]] = {}
    weights: Dict[str, int] = {}
    positions = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        if stripped.startswith("["):
            m = re.fullmatch(r"\[\s*([a-z]+)\s*\]", stripped)
            if not m or m.group(1) not in SECTIONS:
                raise SpaceFileError(f"unknown section {stripped}", lineno, indent + 1)
            section = m.group(1)
            if section in seen:
                raise SpaceFileError(f"duplicate section [{section}]", lineno, indent + 1)
            seen.add(section)
            continue
        if section is None:
            raise SpaceFileError("content before the first section", lineno, indent + 1)
        if section == "coordinates":
            for part, c in _split_top(line, lineno, 0):
                nm = part.strip()
                if not _IDENT.match(nm):
                    raise SpaceFileError(f"bad coordinate name {nm!r}", lineno, c + 1)
                if nm in coords:
                    raise SpaceFileError(f"duplicate coordinate {nm!r}", lineno, c + 1)
                coords.append(nm)
            continue
        if "=" not in line:
            raise SpaceFileError("expected 'key = value'", lineno, indent + 1)
        key, value = line.split("=", 1)
        key = key.strip()
        vcol = len(line) - len(value) + (len(value) - len(value.lstrip()))
        value = value.strip()
        if section == "header":
            if key == "name":
                name = value
            elif key == "depth":
                if not re.fullmatch(r"\d+", value) or int(value) < 1:
                    raise SpaceFileError("depth must be a positive integer", lineno, vcol + 1)
                depth = int(value)
            elif key == "anchor":
                anchor = [p.strip() for p, _ in _split_top(value, lineno, vcol)]
                positions[("anchor",)] = (lineno, vcol + 1)
            else:
                raise SpaceFileError(f"unknown header key {key!r}", lineno, indent + 1)
        elif section == "fields":
            if not _IDENT.match(key):
                raise SpaceFileError(f"bad field name {key!r}", lineno, indent + 1)
            if key in fields:
                raise SpaceFileError(f"duplicate field {key!r}", lineno, indent + 1)
            if not (value.startswith("[") and value.endswith("]")):
                raise SpaceFileError("field components must be written as [a, b, ...]", lineno, vcol + 1)
            inner = value[1:-1]
            comps = []
            for part, c in _split_top(inner, lineno, vcol + 1):
                if not part.strip():
                    raise SpaceFileError("empty component", lineno, c + 1)
                comps.append(part.strip())
                positions[("comp", key, len(comps) - 1)] = (lineno, c + len(part) - len(part.lstrip()))
            fields[key] = comps
            positions[("field", key)] = (lineno, vcol + 1)
        elif section == "weights":
            if key in weights:
                raise SpaceFileError(f"duplicate weight for {key!r}", lineno, indent + 1)
            if not re.fullmatch(r"\d+", value) or int(value) < 1:
                raise SpaceFileError("weight must be a positive integer", lineno, vcol + 1)
            weights[key] = int(value)
            positions[("weight", key)] = (lineno, indent + 1)
    if not coords:
        raise SpaceFileError("no [coordinates] given", 1, 1)
    if not fields:
        raise SpaceFileError("no [fields] given", 1, 1)
    doc = SpaceSpecDocument(name, tuple(coords), fields, weights, depth, anchor, positions)
    # validate expressions eagerly so errors carry exact positions
    for key, comps in fields.items():
        if len(comps) != len(coords):
            line, col = positions[("field", key)]
            raise SpaceFileError(f"field {key} has {len(comps)} components, expected {len(coords)}", line, col)
        for k, e in enumerate(comps):
            line, col = positions[("comp", key, k)]
            parse_expression(e, coords, line, col)
    for key in fields:
        if key not in weights:
            line, col = positions[("field", key)]
            raise SpaceFileError(f"missing weight for field {key}", line, col)
    return doc


def parse_space(text: str) -> WeightedSystem:
    return parse_document(text).to_system()


def _fmt_const(c) -> str:
    return str(Polynomial.constant(("_",), c))


def print_space(sys: WeightedSystem, name: Optional[str] = None) -> str:
    lines = ["[header]", f"name = {name if name is not None else sys.label or 'space'}"]
    lines.append(f"depth = {sys.depth}")
    lines.append("anchor = " + ", ".join(_fmt_const(a) for a in sys.anchor))
    lines += ["", "[coordinates]", ", ".join(sys.chart.names), "", "[fields]"]
    for nm, g in zip(sys.names, sys.generators):
        lines.append(f"{nm} = [" + ", ".join(str(c) for c in g.components) + "]")
    lines += ["", "[weights]"]
    for nm, w in zip(sys.names, sys.weights):
        lines.append(f"{nm} = {w}")
    return "\n".join(lines) + "\n"


# -- catalog ------------------------------------------------------------

def _heisenberg(n: int) -> str:
    xs = [f"x{j}" for j in range(1, n + 1)]
    ys = [f"y{j}" for j in range(1, n + 1)]
    coords = xs + ys + ["t"]
    N = len(coords)

    def row(i, last):
        v = ["0"] * N
        if i is not None:
            v[i] = "1"
        v[-1] = last
        return "[" + ", ".join(v) + "]"

    out = [f"[header]\nname = heisenberg-{n}\n", "[coordinates]", ", ".join(coords), "", "[fields]"]
    for j in range(n):
        out.append(f"X{j + 1} = " + row(j, f"-{ys[j]}/2"))
    for j in range(n):
        out.append(f"Y{j + 1} = " + row(n + j, f"{xs[j]}/2"))
    out.append("T = " + row(None, "1"))
    out += ["", "[weights]"]
    out += [f"X{j + 1} = 1" for j in range(n)] + [f"Y{j + 1} = 1" for j in range(n)] + ["T = 2"]
    return "\n".join(out) + "\n"


_FIXED = {
    "heisenberg-weighted": """[header]
name = heisenberg-weighted

[coordinates]
x, y, t

[fields]
X1 = [1, 0, -y/2]
Y1 = [0, 1, x/2]
T = [0, 0, 1]

[weights]
X1 = 1
Y1 = 2
T = 3
""",
    "weighted-euclidean": """[header]
name = weighted-euclidean

[coordinates]
x1, x2, x3

[fields]
D1 = [1, 0, 0]
D2 = [0, 1, 0]
D3 = [0, 0, 1]

[weights]
D1 = 1
D2 = 2
D3 = 3
""",
    "example3-unit": """[header]
name = example3-unit

[coordinates]
x, y, t

[fields]
X1 = [0, 1, 0]
X2 = [1, 0, y]
X3 = [1, 0, 0]

[weights]
X1 = 1
X2 = 1
X3 = 1
""",
    "example3-graded": """[header]
name = example3-graded

[coordinates]
x, y, t

[fields]
X1 = [0, 1, 0]
X2 = [1, 0, y]
X3 = [1, 0, 0]

[weights]
X1 = 1
X2 = 2
X3 = 3
""",
}

CATALOG_NAMES = ("heisenberg-n", "heisenberg-weighted", "weighted-euclidean",
                 "example3-unit", "example3-graded")
FIXTURES = ("heisenberg-1", "heisenberg-weighted", "weighted-euclidean",
            "example3-unit", "example3-graded")


class UnknownFixture(KeyError):
    def __str__(self):
        return self.args[0]


def catalog_text(name: str) -> str:
    m = re.fullmatch(r"heisenberg-(\d+)", name)
    if m and int(m.group(1)) >= 1:
        return _heisenberg(int(m.group(1)))
    if name in _FIXED:
        return _FIXED[name]
    raise UnknownFixture(
        f"unknown fixture {name!r}; available: " + ", ".join(CATALOG_NAMES) + " (heisenberg-n for n >= 1)")


def catalog(name: str) -> SpaceSpecDocument:
    return parse_document(catalog_text(name))


def catalog_system(name: str) -> WeightedSystem:
    return catalog(name).to_system()
