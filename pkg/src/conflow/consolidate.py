"""Build the consolidated model: one linear step order (or a branched DAG)
covering every step of every source process, anchored on the shared steps.

Two interleaving strategies are built in. ``by-process`` lays each gap out
process by process in declaration order; ``round-robin`` alternates one step
per process per round. Both always satisfy the verifier: within a gap every
process's own steps stay in their own order.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from . import conditions
from .conditions import And, Expr, Not, Or, ProcTypeIn
from .model import (
    ElementaryProcessDef,
    ProcessSet,
    Segment,
    StepDef,
    common_steps,
)

STRATEGIES = ("by-process", "round-robin")

INITIAL_ID = "_initial"
FINAL_ID = "_final"


class MissingBranchCondition(ValueError):
    def __init__(self, type_id: str, segment_index: int):
        super().__init__(
            f"process {type_id!r} segment {segment_index} has alternative "
            "branches without distinguishing conditions"
        )
        self.type_id = type_id
        self.segment_index = segment_index


@dataclass(frozen=True)
class ConsolidatedModel:
    steps: tuple  # StepDef, numbered 1..n in order
    anchor_ids: tuple
    source: ProcessSet
    initial_id: Optional[str] = None  # artificial endpoints when present
    final_id: Optional[str] = None
    conditions_attached: bool = False

    def order(self, include_artificial: bool = True) -> list:
        return [
            s.id for s in self.steps if include_artificial or not s.artificial
        ]

    def step(self, sid: str) -> StepDef:
        for s in self.steps:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def step_map(self) -> dict:
        return {s.id: s for s in self.steps}


@dataclass(frozen=True)
class GraphBranch:
    type_id: str
    steps: tuple


@dataclass(frozen=True)
class GraphCM:
    """Branched (standard) form: anchors on the trunk, process-specific gap
    sequences on OR branches between a split after the earlier anchor and a
    join before the later one."""

    nodes: tuple  # step ids plus connector ids
    edges: tuple  # (from, to)
    connectors: tuple  # (split id, join id) per branched gap
    entry: str
    exit: str
    gaps: tuple  # (lower node, upper node, (GraphBranch, ...)) in trunk order
    source: ProcessSet
    anchor_ids: tuple


# ---------------------------------------------------------------------------
# Gap assignment

def _gap_steps(p: ElementaryProcessDef, anchors: list) -> dict:
    """Map each anchor gap to this process's steps living in it.

    Keys are the lower anchor id ('' for the stretch before the first
    anchor); values keep the process's own walk order. A step inside a
    branch is bounded below by the latest anchor seen on its own branch
    prefix (falling back to the trunk position), which keeps every path's
    order intact in the final layout.
    """
    anchor_set = set(anchors)
    anchor_rank = {a: i for i, a in enumerate(anchors)}
    gaps: dict = {}
    lower = ""  # latest anchor passed so far on the trunk walk

    def later(a: str, b: str) -> str:
        if a == "":
            return b
        if b == "":
            return a
        return a if anchor_rank[a] >= anchor_rank[b] else b

    for seg in p.segments:
        if seg.kind == "single":
            sid = seg.step
            if sid in anchor_set:
                lower = later(lower, sid)
            else:
                gaps.setdefault(lower, []).append(sid)
        else:
            branch_high = lower
            for br in seg.branches:
                blower = lower
                for sid in br.steps:
                    if sid in anchor_set:
                        blower = later(blower, sid)
                    else:
                        gaps.setdefault(blower, []).append(sid)
                branch_high = later(branch_high, blower)
            lower = branch_high
    return gaps


def _shared_endpoint(ps: ProcessSet, last: bool) -> Optional[str]:
    """The step id every process starts (or ends) with, if one exists."""
    ids = set()
    for p in ps.processes:
        if not p.segments:
            return None
        seg = p.segments[-1 if last else 0]
        if seg.kind != "single":
            return None
        ids.add(seg.step)
    if len(ids) == 1:
        return ids.pop()
    return None


def _artificial(sid: str, title: str) -> StepDef:
    return StepDef(id=sid, title=title, artificial=True, visible=False, editable=False)


def build_linear_cm(ps: ProcessSet, strategy: str = "by-process") -> ConsolidatedModel:
    """Consolidate every process into one total step order."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    anchors = common_steps(ps)
    per_process = [(p.type_id, _gap_steps(p, anchors)) for p in ps.processes]

    order: list = []
    for lower in [""] + anchors:
        if lower:
            order.append(lower)
        rows = [gaps.get(lower, []) for _, gaps in per_process]
        if strategy == "by-process":
            for row in rows:
                order.extend(row)
        else:
            i = 0
            while any(i < len(row) for row in rows):
                for row in rows:
                    if i < len(row):
                        order.append(row[i])
                i += 1

    # a shared endpoint only exempts the artificial step when it is a common
    # step proper, which needs at least two processes
    shared_first = _shared_endpoint(ps, last=False) if len(ps.processes) >= 2 else None
    shared_last = _shared_endpoint(ps, last=True) if len(ps.processes) >= 2 else None
    initial_id = final_id = None
    if shared_first is None or not order or order[0] != shared_first:
        order.insert(0, INITIAL_ID)
        initial_id = INITIAL_ID
    if shared_last is None or order[-1] != shared_last:
        order.append(FINAL_ID)
        final_id = FINAL_ID

    steps = []
    for n, sid in enumerate(order, start=1):
        if sid == INITIAL_ID:
            base = _artificial(INITIAL_ID, "Start")
        elif sid == FINAL_ID:
            base = _artificial(FINAL_ID, "End")
        else:
            base = ps.steps[sid]
        steps.append(replace(base, number=n))
    return ConsolidatedModel(
        steps=tuple(steps),
        anchor_ids=tuple(anchors),
        source=ps,
        initial_id=initial_id,
        final_id=final_id,
    )


# ---------------------------------------------------------------------------
# Implementation conditions

def _branch_clauses(ps: ProcessSet) -> dict:
    """step id -> list of (type_id, branch condition) for branch residents."""
    out: dict = {}
    for p in ps.processes:
        for i, seg in enumerate(p.segments):
            if seg.kind != "alternatives":
                continue
            if any(br.condition is None for br in seg.branches):
                raise MissingBranchCondition(p.type_id, i)
            for br in seg.branches:
                for sid in br.steps:
                    out.setdefault(sid, []).append((p.type_id, br.condition))
    return out


def _conjoin(*exprs: Expr) -> Expr:
    items = [e for e in exprs if e != conditions.TRUE]
    if not items:
        return conditions.TRUE
    if len(items) == 1:
        return items[0]
    flat: list = []
    for e in items:
        flat.extend(e.items if isinstance(e, And) else (e,))
    return And(tuple(flat))


def attach_conditions(cm: ConsolidatedModel) -> ConsolidatedModel:
    """Conjoin ownership and branch-selection clauses onto every real step.

    Ownership: a step runs only for procedure types that contain it. Branch
    residency contributes "owning type implies branch condition", so a step
    shared with other processes stays reachable for them. Idempotent.
    """
    if cm.conditions_attached:
        return cm
    ps = cm.source
    clauses = _branch_clauses(ps)
    all_types = frozenset(ps.type_ids())
    steps = []
    for s in cm.steps:
        if s.artificial:
            steps.append(s)
            continue
        parts: list = [s.impl_condition]
        if s.owner_types != all_types:
            parts.append(ProcTypeIn(frozenset(s.owner_types)))
        for type_id, branch_cond in clauses.get(s.id, ()):
            if s.owner_types == {type_id}:
                parts.append(branch_cond)
            else:
                parts.append(Or((Not(ProcTypeIn(frozenset({type_id}))), branch_cond)))
        steps.append(replace(s, impl_condition=_conjoin(*parts)))
    return replace(cm, steps=tuple(steps), conditions_attached=True)


# ---------------------------------------------------------------------------
# Graph (standard) form

def build_graph_cm(ps: ProcessSet) -> GraphCM:
    anchors = common_steps(ps)
    per_process = [(p.type_id, _gap_steps(p, anchors)) for p in ps.processes]

    shared_first = _shared_endpoint(ps, last=False) if len(ps.processes) >= 2 else None
    shared_last = _shared_endpoint(ps, last=True) if len(ps.processes) >= 2 else None
    trunk = list(anchors)
    entry = trunk[0] if trunk and shared_first == trunk[0] else INITIAL_ID
    exit_ = trunk[-1] if trunk and shared_last == trunk[-1] else FINAL_ID
    if entry == INITIAL_ID:
        trunk = [INITIAL_ID] + trunk
    if exit_ == FINAL_ID:
        trunk = trunk + [FINAL_ID]

    nodes: list = list(trunk)
    edges: list = []
    connectors: list = []
    gaps: list = []
    for gi in range(len(trunk) - 1):
        lower, upper = trunk[gi], trunk[gi + 1]
        gap_key = "" if lower == INITIAL_ID else lower
        branches = [
            GraphBranch(tid, tuple(gmap[gap_key]))
            for tid, gmap in per_process
            if gmap.get(gap_key)
        ]
        gaps.append((lower, upper, tuple(branches)))
        if not branches:
            edges.append((lower, upper))
            continue
        if len(branches) == 1 and len(per_process) == 1:
            # nothing to branch against: keep a plain chain
            prev = lower
            for sid in branches[0].steps:
                nodes.append(sid)
                edges.append((prev, sid))
                prev = sid
            edges.append((prev, upper))
            continue
        split = f"or_split_{gi}"
        join = f"or_join_{gi}"
        nodes.extend([split, join])
        connectors.append((split, join))
        edges.append((lower, split))
        edges.append((join, upper))
        for br in branches:
            prev = split
            for sid in br.steps:
                nodes.append(sid)
                edges.append((prev, sid))
                prev = sid
            edges.append((prev, join))
        if len(branches) < len(per_process):
            edges.append((split, join))  # processes with an empty gap
    return GraphCM(
        nodes=tuple(dict.fromkeys(nodes)),
        edges=tuple(edges),
        connectors=tuple(connectors),
        entry=trunk[0],
        exit=trunk[-1],
        gaps=tuple(gaps),
        source=ps,
        anchor_ids=tuple(anchors),
    )


def linearize_graph(g: GraphCM, strategy: str = "by-process") -> ConsolidatedModel:
    """Flatten the branched form back to a verifier-correct total order."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    order: list = []
    for lower, upper, branches in g.gaps:
        if lower not in (INITIAL_ID, FINAL_ID):
            if not order or order[-1] != lower:
                order.append(lower)
        rows = [list(br.steps) for br in branches]
        if strategy == "by-process":
            for row in rows:
                order.extend(row)
        else:
            i = 0
            while any(i < len(row) for row in rows):
                for row in rows:
                    if i < len(row):
                        order.append(row[i])
                i += 1
    if g.gaps and g.gaps[-1][1] not in (INITIAL_ID, FINAL_ID):
        order.append(g.gaps[-1][1])
    if not g.gaps and g.entry == g.exit and g.entry not in (INITIAL_ID, FINAL_ID):
        order.append(g.entry)

    ps = g.source
    initial_id = INITIAL_ID if g.entry == INITIAL_ID else None
    final_id = FINAL_ID if g.exit == FINAL_ID else None
    full = ([INITIAL_ID] if initial_id else []) + order + ([FINAL_ID] if final_id else [])
    steps = []
    for n, sid in enumerate(full, start=1):
        if sid == INITIAL_ID:
            base = _artificial(INITIAL_ID, "Start")
        elif sid == FINAL_ID:
            base = _artificial(FINAL_ID, "End")
        else:
            base = ps.steps[sid]
        steps.append(replace(base, number=n))
    return ConsolidatedModel(
        steps=tuple(steps),
        anchor_ids=g.anchor_ids,
        source=ps,
        initial_id=initial_id,
        final_id=final_id,
    )


# ---------------------------------------------------------------------------
# Exports

def graph_to_dot(g: GraphCM) -> str:
    anchor_set = set(g.anchor_ids)
    lines = ["digraph consolidated_model {", "  rankdir=TB;"]
    for node in g.nodes:
        if node in (INITIAL_ID, FINAL_ID):
            lines.append(f'  "{node}" [shape=circle, label="{node.strip("_")}"];')
        elif any(node in pair for pair in g.connectors):
            lines.append(f'  "{node}" [shape=diamond, label="OR"];')
        elif node in anchor_set:
            lines.append(f'  "{node}" [shape=box, style=filled, fillcolor=lightgrey];')
        else:
            lines.append(f'  "{node}" [shape=box];')
    for a, b in g.edges:
        lines.append(f'  "{a}" -> "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_doc(g: GraphCM) -> dict:
    return {
        "format_version": 1,
        "nodes": list(g.nodes),
        "edges": [list(e) for e in g.edges],
        "connectors": [list(c) for c in g.connectors],
        "entry": g.entry,
        "exit": g.exit,
    }


def cm_to_doc(cm: ConsolidatedModel) -> dict:
    """Machine-readable linear form with assigned numbers."""
    return {
        "format_version": 1,
        "order": cm.order(include_artificial=False),
        "anchors": list(cm.anchor_ids),
        "artificial_initial": cm.initial_id is not None,
        "artificial_final": cm.final_id is not None,
        "steps": [
            {"number": s.number, "id": s.id, "artificial": s.artificial}
            for s in cm.steps
        ],
    }


def cm_from_doc(doc: dict, ps: ProcessSet) -> ConsolidatedModel:
    """Rebuild a ConsolidatedModel from a linear-form document.

    Accepts hand-authored documents: ``order`` is the only required key.
    Unknown step ids are rejected here; ordering problems are the
    verifier's job.
    """
    if not isinstance(doc, dict) or "order" not in doc:
        raise ValueError("linear CM document needs an 'order' list")
    order = list(doc["order"])
    for sid in order:
        if sid not in ps.steps and sid not in (INITIAL_ID, FINAL_ID):
            raise ValueError(f"unknown step id {sid!r} in CM document")
    has_init = bool(doc.get("artificial_initial")) or INITIAL_ID in order
    has_final = bool(doc.get("artificial_final")) or FINAL_ID in order
    order = [sid for sid in order if sid not in (INITIAL_ID, FINAL_ID)]
    full = ([INITIAL_ID] if has_init else []) + order + ([FINAL_ID] if has_final else [])
    steps = []
    for n, sid in enumerate(full, start=1):
        if sid == INITIAL_ID:
            base = _artificial(INITIAL_ID, "Start")
        elif sid == FINAL_ID:
            base = _artificial(FINAL_ID, "End")
        else:
            base = ps.steps[sid]
        steps.append(replace(base, number=n))
    try:
        anchors = tuple(common_steps(ps))
    except Exception:
        anchors = ()
    return ConsolidatedModel(
        steps=tuple(steps),
        anchor_ids=anchors,
        source=ps,
        initial_id=INITIAL_ID if has_init else None,
        final_id=FINAL_ID if has_final else None,
    )
