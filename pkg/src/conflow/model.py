"""Process, step and field definitions: loading, validation, serialization.

A process set is authored as one YAML document (``format_version: 1``) with
four top-level sections: ``roles``, ``params``, ``steps`` (the step catalog)
and ``processes``. See schema/process_set.schema.json for the concrete
schema and docs/definition-format.md for a walkthrough.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from decimal import Decimal, InvalidOperation
from typing import Optional, Union

import yaml

from . import conditions
from .conditions import Expr, parse_condition, print_condition

VALUE_KINDS = (
    "text",
    "integer",
    "decimal",
    "date",
    "boolean",
    "enum",
    "money",
    "reference",
)


class DefinitionError(ValueError):
    """Definition document rejected; .diagnostics lists every problem found."""

    def __init__(self, diagnostics: list):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: Optional[int] = None
    path: str = ""
    severity: str = "error"

    def __str__(self) -> str:
        loc = f"line {self.line}: " if self.line else ""
        where = f"{self.path}: " if self.path else ""
        return f"{self.severity}: {loc}{where}{self.message}"


class InconsistentAnchorOrder(ValueError):
    """Two processes order a pair of common steps differently."""

    def __init__(self, step_a: str, step_b: str, proc_p: str, proc_q: str):
        self.step_a, self.step_b = step_a, step_b
        self.proc_p, self.proc_q = proc_p, proc_q
        super().__init__(
            f"common steps {step_a!r} and {step_b!r} are ordered differently "
            f"by processes {proc_p!r} and {proc_q!r}"
        )


# ---------------------------------------------------------------------------
# Domain types

@dataclass(frozen=True)
class FieldDef:
    name: str
    caption: str = ""
    description: str = ""
    value_kind: str = "text"
    enum_values: tuple = ()
    availability: bool = False  # value required to complete the step
    visible_in_view: bool = True
    visible_in_edit: bool = True


@dataclass(frozen=True)
class OutputAssign:
    """Parameter assignment applied when the owning step completes."""

    param: str
    source_field: Optional[str] = None  # copy a field value...
    literal: object = None  # ...or set a literal


@dataclass(frozen=True)
class CompletionRule:
    mode: str = "on_mandatory_fields"  # or "on_deadline"
    duration: Optional[timedelta] = None
    anchor: str = "procedure_start"  # or "previous_step_completion"


@dataclass(frozen=True)
class StepDef:
    id: str
    title: str = ""
    number: Optional[int] = None  # assigned by consolidation, never authored
    owner_types: frozenset = frozenset()
    fields: tuple = ()
    outputs: tuple = ()
    edit_roles: frozenset = frozenset()
    view_roles: frozenset = frozenset()
    editable: bool = True
    visible: bool = True
    impl_condition: Expr = conditions.TRUE
    completion: CompletionRule = CompletionRule()
    artificial: bool = False

    def mandatory_fields(self) -> tuple:
        return tuple(f for f in self.fields if f.availability)

    def field_map(self) -> dict:
        return {f.name: f for f in self.fields}


@dataclass(frozen=True)
class Branch:
    steps: tuple  # non-empty step-id sequence
    condition: Optional[Expr] = None


@dataclass(frozen=True)
class Segment:
    kind: str  # "single" | "alternatives"
    step: Optional[str] = None
    branches: tuple = ()


@dataclass(frozen=True)
class ElementaryProcessDef:
    type_id: str
    name: str
    segments: tuple

    def step_ids(self) -> list:
        out = []
        for seg in self.segments:
            if seg.kind == "single":
                out.append(seg.step)
            else:
                for br in seg.branches:
                    out.extend(br.steps)
        return out


@dataclass(frozen=True)
class ParamDecl:
    name: str
    value_kind: str
    enum_values: tuple = ()


@dataclass(frozen=True)
class ProcessSet:
    processes: tuple
    steps: dict  # step id -> StepDef, insertion-ordered (catalog order)
    roles: tuple
    params: dict  # name -> ParamDecl
    warnings: tuple = ()

    def process(self, type_id: str) -> ElementaryProcessDef:
        for p in self.processes:
            if p.type_id == type_id:
                return p
        raise KeyError(type_id)

    def type_ids(self) -> list:
        return [p.type_id for p in self.processes]

    def param_kinds(self) -> dict:
        return {name: d.value_kind for name, d in self.params.items()}

    def param_enums(self) -> dict:
        return {name: d.enum_values for name, d in self.params.items() if d.enum_values}


# ---------------------------------------------------------------------------
# Typed values shared by definitions, environments and the store

def parse_value(kind: str, raw, enum_values=()):
    """Coerce a raw (YAML/JSON) value to the declared kind; raises ValueError."""
    if kind == "boolean":
        if isinstance(raw, bool):
            return raw
        if raw in ("true", "false"):
            return raw == "true"
    elif kind == "integer":
        if isinstance(raw, bool):
            raise ValueError(f"expected integer, got boolean {raw!r}")
        if isinstance(raw, int):
            return raw
        if isinstance(raw, str):
            return int(raw)
    elif kind in ("decimal", "money"):
        if isinstance(raw, bool):
            raise ValueError(f"expected {kind}, got boolean {raw!r}")
        if isinstance(raw, (int, str)):
            try:
                return Decimal(str(raw))
            except InvalidOperation:
                raise ValueError(f"invalid {kind} value {raw!r}")
        if isinstance(raw, float):
            return Decimal(str(raw))
        if isinstance(raw, Decimal):
            return raw
    elif kind == "date":
        if isinstance(raw, date):
            return raw
        if isinstance(raw, str):
            return date.fromisoformat(raw)
    elif kind in ("text", "reference"):
        if isinstance(raw, str):
            return raw
    elif kind == "enum":
        if isinstance(raw, str):
            if enum_values and raw not in enum_values:
                raise ValueError(f"{raw!r} is not one of {list(enum_values)}")
            return raw
    else:
        raise ValueError(f"unknown value kind {kind!r}")
    raise ValueError(f"expected {kind}, got {raw!r}")


def encode_value(value):
    """JSON/YAML-safe encoding; inverse of parse_value given the kind."""
    if isinstance(value, Decimal):
        return str(value)
    if isinstance(value, date):
        return value.isoformat()
    return value


# ---------------------------------------------------------------------------
# Line-tracking YAML loading

class _LocatedDict(dict):
    __slots__ = ("line",)


class _LocatedList(list):
    __slots__ = ("line",)


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _LocatedDict(loader.construct_pairs(node))
    out.line = node.start_mark.line + 1
    return out


def _construct_sequence(loader, node):
    out = _LocatedList(loader.construct_sequence(node))
    out.line = node.start_mark.line + 1
    return out


_LineLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)
_LineLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_sequence
)


def _line(node) -> Optional[int]:
    return getattr(node, "line", None)


# ---------------------------------------------------------------------------
# Parsing

class _Collector:
    def __init__(self):
        self.diagnostics: list = []
        self.warnings: list = []

    def error(self, message, node=None, path=""):
        self.diagnostics.append(Diagnostic(message, _line(node), path))

    def warn(self, message, node=None, path=""):
        self.warnings.append(Diagnostic(message, _line(node), path, "warning"))


def parse_process_set(text: str) -> ProcessSet:
    """Parse and validate a definition document.

    All problems are collected and reported together in one DefinitionError;
    warnings (e.g. catalog steps referenced by no process) survive on the
    returned ProcessSet.
    """
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        raise DefinitionError([Diagnostic(f"syntax error: {exc}", line)])
    if not isinstance(doc, dict):
        raise DefinitionError([Diagnostic("document must be a mapping")])

    c = _Collector()
    if doc.get("format_version") != 1:
        c.error(f"unsupported format_version {doc.get('format_version')!r}", doc)

    roles = tuple(doc.get("roles") or ())
    if len(set(roles)) != len(roles):
        c.error("duplicate role names", doc.get("roles"))

    params = _parse_params(doc.get("params") or {}, c)
    steps = _parse_steps(doc.get("steps") or [], roles, params, c)
    processes = _parse_processes(doc.get("processes") or [], steps, params, c)

    _cross_validate(processes, steps, params, c)
    if c.diagnostics:
        raise DefinitionError(c.diagnostics)

    # owner_types derives from process membership, never from authoring
    owners: dict = {sid: set() for sid in steps}
    for p in processes:
        for sid in p.step_ids():
            owners[sid].add(p.type_id)
    for sid, types in owners.items():
        steps[sid] = replace(steps[sid], owner_types=frozenset(types))
        if not types:
            c.warn(f"catalog step {sid!r} is referenced by no process")

    return ProcessSet(
        processes=tuple(processes),
        steps=steps,
        roles=roles,
        params=params,
        warnings=tuple(c.warnings),
    )


def _parse_params(node, c) -> dict:
    params: dict = {}
    if not isinstance(node, dict):
        c.error("params must be a mapping of name -> kind", node)
        return params
    for name, spec in node.items():
        if isinstance(spec, str):
            kind, enum_values = spec, ()
        elif isinstance(spec, dict):
            kind = spec.get("kind", "text")
            enum_values = tuple(spec.get("values") or ())
        else:
            c.error(f"invalid declaration for parameter {name!r}", node)
            continue
        if kind not in VALUE_KINDS:
            c.error(f"parameter {name!r}: unknown value kind {kind!r}", node)
            continue
        if kind == "enum" and not enum_values:
            c.error(f"enum parameter {name!r} needs a non-empty values list", node)
            continue
        params[name] = ParamDecl(name, kind, enum_values)
    return params


def _parse_field(node, path, c) -> Optional[FieldDef]:
    if not isinstance(node, dict) or "name" not in node:
        c.error("field needs at least a name", node, path)
        return None
    kind = node.get("value_kind", "text")
    enum_values = tuple(node.get("values") or ())
    if kind not in VALUE_KINDS:
        c.error(f"unknown value kind {kind!r}", node, path)
        return None
    if kind == "enum" and not enum_values:
        c.error("enum field needs a non-empty values list", node, path)
        return None
    return FieldDef(
        name=node["name"],
        caption=node.get("caption", node["name"]),
        description=node.get("description", ""),
        value_kind=kind,
        enum_values=enum_values,
        availability=bool(node.get("availability", False)),
        visible_in_view=bool(node.get("visible_in_view", True)),
        visible_in_edit=bool(node.get("visible_in_edit", True)),
    )


def _parse_completion(node, path, c) -> CompletionRule:
    if node is None:
        return CompletionRule()
    mode = node.get("mode", "on_mandatory_fields")
    if mode == "on_mandatory_fields":
        return CompletionRule()
    if mode == "on_deadline":
        try:
            duration = conditions.parse_duration(node.get("duration", ""))
        except ValueError as exc:
            c.error(str(exc), node, path)
            return CompletionRule()
        if duration <= timedelta(0):
            c.error("deadline duration must be strictly positive", node, path)
        anchor = node.get("anchor", "procedure_start")
        if anchor not in ("procedure_start", "previous_step_completion"):
            c.error(f"unknown deadline anchor {anchor!r}", node, path)
            anchor = "procedure_start"
        return CompletionRule("on_deadline", duration, anchor)
    c.error(f"unknown completion mode {mode!r}", node, path)
    return CompletionRule()


def _parse_condition_text(text, node, path, c) -> Expr:
    try:
        return parse_condition(text)
    except conditions.ConditionSyntaxError as exc:
        c.error(f"condition: {exc}", node, path)
        return conditions.TRUE


def _parse_steps(node, roles, params, c) -> dict:
    steps: dict = {}
    role_set = set(roles)
    for i, raw in enumerate(node):
        path = f"steps[{i}]"
        if not isinstance(raw, dict) or "id" not in raw:
            c.error("step needs an id", raw, path)
            continue
        sid = raw["id"]
        if sid in steps:
            c.error(f"duplicate step id {sid!r}", raw, path)
            continue
        fields = []
        seen_fields = set()
        for j, fraw in enumerate(raw.get("fields") or []):
            f = _parse_field(fraw, f"{path}.fields[{j}]", c)
            if f is None:
                continue
            if f.name in seen_fields:
                c.error(f"duplicate field name {f.name!r}", fraw, path)
                continue
            seen_fields.add(f.name)
            fields.append(f)
        outputs = []
        for j, oraw in enumerate(raw.get("outputs") or []):
            opath = f"{path}.outputs[{j}]"
            if not isinstance(oraw, dict) or "param" not in oraw:
                c.error("output needs a param name", oraw, opath)
                continue
            pname = oraw["param"]
            if pname not in params:
                c.error(f"unknown parameter {pname!r}", oraw, opath)
                continue
            if "field" in oraw:
                if oraw["field"] not in seen_fields:
                    c.error(
                        f"output references unknown field {oraw['field']!r}",
                        oraw,
                        opath,
                    )
                    continue
                outputs.append(OutputAssign(pname, source_field=oraw["field"]))
            else:
                decl = params[pname]
                try:
                    literal = parse_value(
                        decl.value_kind, oraw.get("value"), decl.enum_values
                    )
                except ValueError as exc:
                    c.error(str(exc), oraw, opath)
                    continue
                outputs.append(OutputAssign(pname, literal=literal))
        for key in ("edit_roles", "view_roles"):
            for r in raw.get(key) or ():
                if r not in role_set:
                    c.error(f"unknown role {r!r}", raw, path)
        steps[sid] = StepDef(
            id=sid,
            title=raw.get("title", sid),
            fields=tuple(fields),
            outputs=tuple(outputs),
            edit_roles=frozenset(r for r in (raw.get("edit_roles") or ()) if r in role_set),
            view_roles=frozenset(r for r in (raw.get("view_roles") or ()) if r in role_set),
            editable=bool(raw.get("editable", True)),
            visible=bool(raw.get("visible", True)),
            impl_condition=_parse_condition_text(
                raw.get("condition", "true"), raw, path, c
            ),
            completion=_parse_completion(raw.get("completion"), raw, path),
        )
    return steps


def _parse_processes(node, steps, params, c) -> list:
    processes: list = []
    seen_types = set()
    for i, raw in enumerate(node):
        path = f"processes[{i}]"
        if not isinstance(raw, dict) or "type_id" not in raw:
            c.error("process needs a type_id", raw, path)
            continue
        tid = raw["type_id"]
        if tid in seen_types:
            c.error(f"duplicate process type_id {tid!r}", raw, path)
            continue
        seen_types.add(tid)
        segments: list = []
        seen_steps: set = set()

        def check_ref(sid, node_, spath):
            if sid not in steps:
                c.error(f"dangling step reference {sid!r}", node_, spath)
                return False
            if sid in seen_steps:
                c.error(f"step {sid!r} appears more than once in process {tid!r}", node_, spath)
                return False
            seen_steps.add(sid)
            return True

        for j, sraw in enumerate(raw.get("segments") or []):
            spath = f"{path}.segments[{j}]"
            if isinstance(sraw, str):
                sraw = {"step": sraw}
            if not isinstance(sraw, dict):
                c.error("segment must be a step or alternatives mapping", sraw, spath)
                continue
            if "step" in sraw:
                if check_ref(sraw["step"], sraw, spath):
                    segments.append(Segment("single", step=sraw["step"]))
            elif "alternatives" in sraw:
                branches = []
                for k, braw in enumerate(sraw["alternatives"] or []):
                    bpath = f"{spath}.alternatives[{k}]"
                    if not isinstance(braw, dict) or not braw.get("steps"):
                        c.error("branch needs a non-empty steps list", braw, bpath)
                        continue
                    bsteps = [s for s in braw["steps"] if check_ref(s, braw, bpath)]
                    cond = None
                    if "condition" in braw:
                        cond = _parse_condition_text(
                            braw["condition"], braw, bpath, c
                        )
                    if bsteps:
                        branches.append(Branch(tuple(bsteps), cond))
                if len(branches) < 2:
                    c.error("alternatives segment needs at least 2 branches", sraw, spath)
                    continue
                segments.append(Segment("alternatives", branches=tuple(branches)))
            else:
                c.error("segment must have 'step' or 'alternatives'", sraw, spath)
        processes.append(
            ElementaryProcessDef(tid, raw.get("name", tid), tuple(segments))
        )
    return processes


def _cross_validate(processes, steps, params, c) -> None:
    decls = {name: d.value_kind for name, d in params.items()}
    enums = {name: d.enum_values for name, d in params.items() if d.enum_values}
    type_ids = [p.type_id for p in processes]
    for sid, s in steps.items():
        for err in conditions.validate_condition(
            s.impl_condition, decls, type_ids, enums
        ):
            c.error(f"step {sid!r}: {err}")
    for p in processes:
        for seg in p.segments:
            for br in seg.branches:
                if br.condition is None:
                    continue
                for err in conditions.validate_condition(
                    br.condition, decls, type_ids, enums
                ):
                    c.error(f"process {p.type_id!r} branch: {err}")


# ---------------------------------------------------------------------------
# Serialization (inverse of parse_process_set up to formatting)

def serialize_process_set(ps: ProcessSet) -> str:
    doc = {
        "format_version": 1,
        "roles": list(ps.roles),
        "params": {
            name: (
                d.value_kind
                if not d.enum_values
                else {"kind": d.value_kind, "values": list(d.enum_values)}
            )
            for name, d in ps.params.items()
        },
        "steps": [_step_doc(s) for s in ps.steps.values()],
        "processes": [_process_doc(p) for p in ps.processes],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def _step_doc(s: StepDef) -> dict:
    doc: dict = {"id": s.id, "title": s.title}
    if s.number is not None:
        doc["number"] = s.number
    if s.fields:
        doc["fields"] = []
        for f in s.fields:
            fd: dict = {"name": f.name, "caption": f.caption, "value_kind": f.value_kind}
            if f.description:
                fd["description"] = f.description
            if f.enum_values:
                fd["values"] = list(f.enum_values)
            if f.availability:
                fd["availability"] = True
            if not f.visible_in_view:
                fd["visible_in_view"] = False
            if not f.visible_in_edit:
                fd["visible_in_edit"] = False
            doc["fields"].append(fd)
    if s.outputs:
        doc["outputs"] = [
            {"param": o.param, "field": o.source_field}
            if o.source_field
            else {"param": o.param, "value": encode_value(o.literal)}
            for o in s.outputs
        ]
    if s.edit_roles:
        doc["edit_roles"] = sorted(s.edit_roles)
    if s.view_roles:
        doc["view_roles"] = sorted(s.view_roles)
    if not s.editable:
        doc["editable"] = False
    if not s.visible:
        doc["visible"] = False
    if s.impl_condition != conditions.TRUE:
        doc["condition"] = print_condition(s.impl_condition)
    if s.completion.mode == "on_deadline":
        doc["completion"] = {
            "mode": "on_deadline",
            "duration": conditions.format_duration(s.completion.duration),
            "anchor": s.completion.anchor,
        }
    return doc


def _process_doc(p: ElementaryProcessDef) -> dict:
    segs = []
    for seg in p.segments:
        if seg.kind == "single":
            segs.append({"step": seg.step})
        else:
            segs.append(
                {
                    "alternatives": [
                        (
                            {"steps": list(br.steps)}
                            if br.condition is None
                            else {
                                "steps": list(br.steps),
                                "condition": print_condition(br.condition),
                            }
                        )
                        for br in seg.branches
                    ]
                }
            )
    return {"type_id": p.type_id, "name": p.name, "segments": segs}


# ---------------------------------------------------------------------------
# Common steps and path expansion

def _anchor_positions(p: ElementaryProcessDef) -> dict:
    """step id -> (segment index, branch index or -1, position in branch)."""
    out = {}
    for i, seg in enumerate(p.segments):
        if seg.kind == "single":
            out[seg.step] = (i, -1, 0)
        else:
            for b, br in enumerate(seg.branches):
                for k, sid in enumerate(br.steps):
                    out[sid] = (i, b, k)
    return out


def common_steps(ps: ProcessSet) -> list:
    """Steps shared by at least two processes, in their agreed relative order.

    A step inside an alternatives branch counts as positioned at its
    segment's index; two shared steps in sibling branches of one segment
    impose no order on each other within that process.
    """
    membership: dict = {}
    for p in ps.processes:
        for sid in p.step_ids():
            membership.setdefault(sid, []).append(p.type_id)
    shared = [sid for sid, procs in membership.items() if len(procs) >= 2]
    if not shared:
        return []
    catalog_index = {sid: i for i, sid in enumerate(ps.steps)}
    shared.sort(key=catalog_index.__getitem__)

    # pairwise order per process; None means incomparable in that process
    edges: dict = {}  # (a, b) -> witness process
    for p in ps.processes:
        pos = _anchor_positions(p)
        present = [sid for sid in shared if sid in pos]
        for a, b in itertools.combinations(present, 2):
            ia, ba, ka = pos[a]
            ib, bb, kb = pos[b]
            if ia == ib and (ba != bb or ba == -1):
                continue  # same segment, sibling branches: unordered
            if ia == ib and ba == bb:
                first, second = (a, b) if ka < kb else (b, a)
            else:
                first, second = (a, b) if ia < ib else (b, a)
            if (second, first) in edges:
                raise InconsistentAnchorOrder(
                    first, second, edges[(second, first)], p.type_id
                )
            edges.setdefault((first, second), p.type_id)

    # deterministic topological order, ties broken by catalog order
    import heapq

    succ: dict = {sid: set() for sid in shared}
    indeg = {sid: 0 for sid in shared}
    for (a, b) in edges:
        if b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    heap = [catalog_index[s] for s in shared if indeg[s] == 0]
    heapq.heapify(heap)
    by_index = {catalog_index[s]: s for s in shared}
    order = []
    while heap:
        s = by_index[heapq.heappop(heap)]
        order.append(s)
        for t in succ[s]:
            indeg[t] -= 1
            if indeg[t] == 0:
                heapq.heappush(heap, catalog_index[t])
    if len(order) != len(shared):
        # cycle built from pairwise-consistent edges across >= 3 processes;
        # every unordered node keeps an unordered predecessor, so walking
        # predecessors must revisit a node
        remaining = set(shared) - set(order)
        pred = {
            s: [a for (a, b) in edges if b == s and a in remaining] for s in remaining
        }
        node = next(iter(sorted(remaining, key=catalog_index.__getitem__)))
        seen: list = []
        while node not in seen:
            seen.append(node)
            node = pred[node][0]
        i = seen.index(node)
        cycle = seen[i:]  # edges run cycle[k+1] -> cycle[k], closing node -> cycle[-1]
        a, b = node, cycle[-1]
        q_edge = (cycle[1], cycle[0]) if len(cycle) > 1 else (b, a)
        raise InconsistentAnchorOrder(a, b, edges[(a, b)], edges[q_edge])
    return order


def paths_of(p: ElementaryProcessDef) -> list:
    """All execution paths: the cartesian expansion of alternative branches."""
    options = []
    for seg in p.segments:
        if seg.kind == "single":
            options.append([(seg.step,)])
        else:
            options.append([br.steps for br in seg.branches])
    out = []
    for combo in itertools.product(*options):
        path: list = []
        for part in combo:
            path.extend(part)
        out.append(path)
    return out
