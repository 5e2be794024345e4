"""Boolean condition language gating step eligibility.

Expressions range over procedure parameters, the ambient procedure type and
elapsed time. Precedence, loosest first: ``or``, ``and``, ``not``,
comparisons. Unset parameters make any comparison (or bare boolean
reference) evaluate to ``False`` rather than fault, so conditions are
checkable at any moment of a procedure's life.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from decimal import Decimal, InvalidOperation
from typing import Iterator, Optional, Union


class ConditionSyntaxError(ValueError):
    """Raised on malformed condition text; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ConditionTypeError(ValueError):
    """Raised when an expression is inconsistent with parameter declarations."""


# ---------------------------------------------------------------------------
# AST

Literal = Union[bool, int, Decimal, str, date]


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Name:
    """Bare identifier: a parameter reference, or an enum label in context."""

    name: str


@dataclass(frozen=True)
class DateLit:
    value: date


@dataclass(frozen=True)
class StrLit:
    value: str


@dataclass(frozen=True)
class NumLit:
    value: Union[int, Decimal]


@dataclass(frozen=True)
class BoolLit:
    value: bool


Operand = Union[Name, DateLit, StrLit, NumLit, BoolLit]

CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: Operand
    rhs: Operand


@dataclass(frozen=True)
class ProcTypeIn:
    types: frozenset


@dataclass(frozen=True)
class Elapsed:
    duration: timedelta
    anchor: str  # "start" or a step id


@dataclass(frozen=True)
class Not:
    item: "Expr"


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


Expr = Union[Const, Name, Cmp, ProcTypeIn, Elapsed, Not, And, Or]

TRUE = Const(True)
FALSE = Const(False)


# ---------------------------------------------------------------------------
# ISO-8601 durations (day/time components; months and years are not needed
# for step deadlines and stay unsupported)

_DURATION_RE = re.compile(
    r"^P(?:(?P<weeks>\d+)W)?(?:(?P<days>\d+)D)?"
    r"(?:T(?:(?P<hours>\d+)H)?(?:(?P<minutes>\d+)M)?(?:(?P<seconds>\d+)S)?)?$"
)


def parse_duration(text: str) -> timedelta:
    m = _DURATION_RE.match(text)
    if not m or not any(m.groupdict().values()):
        raise ValueError(f"invalid ISO-8601 duration: {text!r}")
    g = {k: int(v) for k, v in m.groupdict().items() if v}
    return timedelta(
        weeks=g.get("weeks", 0),
        days=g.get("days", 0),
        hours=g.get("hours", 0),
        minutes=g.get("minutes", 0),
        seconds=g.get("seconds", 0),
    )


def format_duration(d: timedelta) -> str:
    total = int(d.total_seconds())
    days, rem = divmod(total, 86400)
    hours, rem = divmod(rem, 3600)
    minutes, seconds = divmod(rem, 60)
    out = "P"
    if days:
        out += f"{days}D"
    time_part = ""
    if hours:
        time_part += f"{hours}H"
    if minutes:
        time_part += f"{minutes}M"
    if seconds:
        time_part += f"{seconds}S"
    if time_part:
        out += "T" + time_part
    if out == "P":
        out = "PT0S"
    return out


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<date>\d{4}-\d{2}-\d{2})
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|<|>|\(|\)|\{|\}|,)
    """,
    re.VERBOSE,
)

_DATE_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> Iterator[_Token]:
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ConditionSyntaxError(f"unexpected character {text[i]!r}", i)
        i = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        yield _Token(kind, m.group(), m.start())
    yield _Token("eof", "", len(text))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.cur
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        if self.cur.text != text:
            raise ConditionSyntaxError(
                f"expected {text!r}, found {self.cur.text or 'end of input'!r}",
                self.cur.pos,
            )
        return self.advance()

    def parse(self) -> Expr:
        e = self.or_expr()
        if self.cur.kind != "eof":
            raise ConditionSyntaxError(
                f"trailing input {self.cur.text!r}", self.cur.pos
            )
        return e

    def or_expr(self) -> Expr:
        items = [self.and_expr()]
        while self.cur.text == "or":
            self.advance()
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def and_expr(self) -> Expr:
        items = [self.not_expr()]
        while self.cur.text == "and":
            self.advance()
            items.append(self.not_expr())
        return items[0] if len(items) == 1 else And(tuple(items))

    def not_expr(self) -> Expr:
        if self.cur.text == "not":
            self.advance()
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        if self.cur.text == "(":
            self.advance()
            e = self.or_expr()
            self.expect(")")
            return e
        if self.cur.text == "proc_type":
            self.advance()
            self.expect("in")
            self.expect("{")
            types = [self._ident("procedure type")]
            while self.cur.text == ",":
                self.advance()
                types.append(self._ident("procedure type"))
            self.expect("}")
            return ProcTypeIn(frozenset(types))
        if self.cur.text == "elapsed":
            self.advance()
            self.expect("(")
            dur_tok = self.advance()
            try:
                duration = parse_duration(dur_tok.text)
            except ValueError:
                raise ConditionSyntaxError(
                    f"invalid duration {dur_tok.text!r}", dur_tok.pos
                )
            self.expect(",")
            anchor = self._ident("anchor")
            self.expect(")")
            return Elapsed(duration, anchor)
        lhs = self.operand()
        if self.cur.text in CMP_OPS:
            op = self.advance().text
            rhs = self.operand()
            return Cmp(op, lhs, rhs)
        # A lone operand is only a valid expression when it can be boolean.
        if isinstance(lhs, BoolLit):
            return Const(lhs.value)
        if isinstance(lhs, Name):
            return lhs
        raise ConditionSyntaxError(
            "literal cannot stand alone as a boolean expression", self.cur.pos
        )

    def _ident(self, what: str) -> str:
        if self.cur.kind != "ident":
            raise ConditionSyntaxError(
                f"expected {what} name, found {self.cur.text!r}", self.cur.pos
            )
        return self.advance().text

    def operand(self) -> Operand:
        tok = self.cur
        if tok.kind == "string":
            self.advance()
            body = tok.text[1:-1]
            return StrLit(body.replace('\\"', '"').replace("\\\\", "\\"))
        if tok.kind == "number":
            self.advance()
            if "." in tok.text:
                return NumLit(Decimal(tok.text))
            return NumLit(int(tok.text))
        if tok.text in ("true", "false"):
            self.advance()
            return BoolLit(tok.text == "true")
        if tok.text == "date":
            self.advance()
            self.expect("(")
            raw = self.cur
            if raw.kind != "date":
                raise ConditionSyntaxError(f"invalid date {raw.text!r}", raw.pos)
            self.advance()
            self.expect(")")
            m = _DATE_RE.match(raw.text)
            try:
                value = date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
            except ValueError:
                raise ConditionSyntaxError(f"invalid date {raw.text!r}", raw.pos)
            return DateLit(value)
        if tok.kind == "ident":
            self.advance()
            return Name(tok.text)
        raise ConditionSyntaxError(f"expected operand, found {tok.text!r}", tok.pos)


def parse_condition(text: str) -> Expr:
    """Parse condition text into its AST. Raises ConditionSyntaxError."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printer (inverse of the parser up to whitespace)

_PREC = {"or": 1, "and": 2, "not": 3, "atom": 4}


def _operand_text(o: Operand) -> str:
    if isinstance(o, Name):
        return o.name
    if isinstance(o, BoolLit):
        return "true" if o.value else "false"
    if isinstance(o, NumLit):
        s = str(o.value)
        if isinstance(o.value, Decimal) and "." not in s and "E" not in s:
            s += ".0"
        return s
    if isinstance(o, StrLit):
        return '"' + o.value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(o, DateLit):
        return f"date({o.value.isoformat()})"
    raise TypeError(f"not an operand: {o!r}")


def print_condition(e: Expr) -> str:
    """Render an AST back to source text; parse(print(e)) == e."""
    return _print(e, 0)


def _print(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Const):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Cmp):
        return f"{_operand_text(e.lhs)} {e.op} {_operand_text(e.rhs)}"
    if isinstance(e, ProcTypeIn):
        return "proc_type in {" + ", ".join(sorted(e.types)) + "}"
    if isinstance(e, Elapsed):
        return f"elapsed({format_duration(e.duration)}, {e.anchor})"
    if isinstance(e, Not):
        text = "not " + _print(e.item, _PREC["not"])
        prec = _PREC["not"]
    elif isinstance(e, And):
        # children at the same precedence level get parens, otherwise a
        # nested And would flatten into its parent on reparse
        text = " and ".join(_print(x, _PREC["and"] + 1) for x in e.items)
        prec = _PREC["and"]
    elif isinstance(e, Or):
        text = " or ".join(_print(x, _PREC["or"] + 1) for x in e.items)
        prec = _PREC["or"]
    else:
        raise TypeError(f"not an expression: {e!r}")
    if prec < parent_prec:
        return "(" + text + ")"
    return text


# ---------------------------------------------------------------------------
# Evaluation

@dataclass
class ParamEnv:
    """Evaluation context for one procedure instance at one moment."""

    values: dict  # parameter name -> value, only set parameters present
    declared: dict  # parameter name -> value kind string
    proc_type: str
    clock: datetime
    start_time: datetime
    timeline: dict  # step id -> completion timestamp


_UNSET = object()


def _resolve(o: Operand, env: ParamEnv):
    if isinstance(o, Name):
        if o.name in env.declared:
            return env.values.get(o.name, _UNSET)
        return o.name  # enum label used bare
    return o.value


def eval_condition(e: Expr, env: ParamEnv) -> bool:
    """Total boolean evaluation; unset parameters gate to False."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Name):
        v = env.values.get(e.name, _UNSET)
        return v is True
    if isinstance(e, ProcTypeIn):
        return env.proc_type in e.types
    if isinstance(e, Elapsed):
        if e.anchor == "start":
            anchor_time: Optional[datetime] = env.start_time
        else:
            anchor_time = env.timeline.get(e.anchor)
        if anchor_time is None:
            return False
        return env.clock >= anchor_time + e.duration
    if isinstance(e, Cmp):
        lhs = _resolve(e.lhs, env)
        rhs = _resolve(e.rhs, env)
        if lhs is _UNSET or rhs is _UNSET:
            return False
        return _compare(e.op, lhs, rhs)
    if isinstance(e, Not):
        return not eval_condition(e.item, env)
    if isinstance(e, And):
        return all(eval_condition(x, env) for x in e.items)
    if isinstance(e, Or):
        return any(eval_condition(x, env) for x in e.items)
    raise TypeError(f"not an expression: {e!r}")


def _compare(op: str, lhs, rhs) -> bool:
    if isinstance(lhs, bool) != isinstance(rhs, bool):
        return False
    if isinstance(lhs, (int, Decimal)) and isinstance(rhs, (int, Decimal)):
        pass  # numeric cross-comparison is fine
    elif type(lhs) is not type(rhs) and not (
        isinstance(lhs, str) and isinstance(rhs, str)
    ):
        return False
    if op == "==":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">":
        return lhs > rhs
    if op == ">=":
        return lhs >= rhs
    raise ValueError(f"unknown operator {op!r}")


def free_params(e: Expr, declared: Optional[dict] = None) -> set:
    """Parameter names referenced by e.

    When declarations are given, bare identifiers that are not declared
    parameters (enum labels) are excluded.
    """
    out: set = set()
    _collect_names(e, out)
    if declared is not None:
        out &= set(declared)
    return out


def _collect_names(e: Expr, out: set) -> None:
    if isinstance(e, Name):
        out.add(e.name)
    elif isinstance(e, Cmp):
        for o in (e.lhs, e.rhs):
            if isinstance(o, Name):
                out.add(o.name)
    elif isinstance(e, Not):
        _collect_names(e.item, out)
    elif isinstance(e, (And, Or)):
        for x in e.items:
            _collect_names(x, out)


# ---------------------------------------------------------------------------
# Static validation against declarations

_NUMERIC_KINDS = {"integer", "decimal", "money"}
_ORDERED_KINDS = _NUMERIC_KINDS | {"date"}


def _operand_kind(o: Operand, decls: dict, enums: dict):
    """Value kind of an operand, or None when unknowable without context."""
    if isinstance(o, Name):
        if o.name in decls:
            return decls[o.name]
        return "enum-label"
    if isinstance(o, BoolLit):
        return "boolean"
    if isinstance(o, NumLit):
        return "integer" if isinstance(o.value, int) else "decimal"
    if isinstance(o, StrLit):
        return "text"
    if isinstance(o, DateLit):
        return "date"
    return None


def validate_condition(e: Expr, decls: dict, proc_types=None, enums=None) -> list:
    """Return a list of error strings; empty means well-typed."""
    errors: list = []
    enums = enums or {}
    _validate(e, decls, set(proc_types) if proc_types is not None else None, enums, errors)
    return errors


def _kinds_compatible(a: str, b: str) -> bool:
    if a == b:
        return True
    if a in _NUMERIC_KINDS and b in _NUMERIC_KINDS:
        return True
    pair = {a, b}
    if "enum-label" in pair:
        return "enum" in pair or "text" in pair or "reference" in pair or "enum-label" in pair
    if pair == {"text", "reference"}:
        return True
    if "enum" in pair:
        return "text" in pair
    return False


def _validate(e: Expr, decls, proc_types, enums, errors) -> None:
    if isinstance(e, Name):
        if e.name not in decls:
            errors.append(f"undeclared parameter {e.name!r}")
        elif decls[e.name] != "boolean":
            errors.append(f"parameter {e.name!r} is not boolean")
    elif isinstance(e, Cmp):
        lk = _operand_kind(e.lhs, decls, enums)
        rk = _operand_kind(e.rhs, decls, enums)
        if lk == "enum-label" and rk == "enum-label":
            errors.append(
                f"comparison {_operand_text(e.lhs)} {e.op} {_operand_text(e.rhs)}"
                " references no declared parameter"
            )
            return
        if lk and rk and not _kinds_compatible(lk, rk):
            errors.append(
                f"type mismatch: {_operand_text(e.lhs)} ({lk}) {e.op} "
                f"{_operand_text(e.rhs)} ({rk})"
            )
        if e.op not in ("==", "!=") and (
            (lk in ("boolean", "enum", "enum-label")) or (rk in ("boolean", "enum", "enum-label"))
        ):
            errors.append(f"ordering comparison {e.op} on non-ordered operands")
        for o, k in ((e.lhs, lk), (e.rhs, rk)):
            if isinstance(o, Name) and k == "enum-label":
                other = e.rhs if o is e.lhs else e.lhs
                other_kind = rk if o is e.lhs else lk
                if isinstance(other, Name) and other_kind == "enum":
                    allowed = enums.get(other.name, ())
                    if allowed and o.name not in allowed:
                        errors.append(
                            f"{o.name!r} is not a value of enum parameter {other.name!r}"
                        )
                elif other_kind not in ("enum", "text", "reference", None):
                    errors.append(f"undeclared parameter {o.name!r}")
    elif isinstance(e, ProcTypeIn):
        if proc_types is not None:
            for t in sorted(e.types - set(proc_types)):
                errors.append(f"unknown procedure type {t!r}")
    elif isinstance(e, Not):
        _validate(e.item, decls, proc_types, enums, errors)
    elif isinstance(e, (And, Or)):
        for x in e.items:
            _validate(x, decls, proc_types, enums, errors)
