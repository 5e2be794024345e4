"""Correctness checking for linear consolidated models.

A proposed order is correct when (a) every step of every source process
appears exactly once, (b) the shared anchor steps keep their agreed order,
and (c) every execution path of every process is a subsequence of the
order. The exhaustive enumerator doubles as an independent oracle for small
instances; its hot loop lives in a C extension when available, with a
pure-Python fallback selected at import time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .consolidate import ConsolidatedModel
from .model import ProcessSet, common_steps, paths_of

try:
    from . import _permkernel as _kernel

    KERNEL = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _permkernel_py as _kernel

    KERNEL = "python"


DEFAULT_ENUM_BOUND = 10


class TooLarge(ValueError):
    def __init__(self, n_steps: int, bound: int):
        super().__init__(
            f"{n_steps} steps exceed the enumeration bound of {bound} "
            f"({math.factorial(n_steps)} permutations)"
        )
        self.n_steps = n_steps
        self.bound = bound


@dataclass(frozen=True)
class Violation:
    kind: str  # OrderViolation | MissingStep | DuplicateStep |
    #            AnchorOrderViolation | BoundaryViolation
    message: str
    process: str = ""
    path_index: int = -1
    step_a: str = ""
    step_b: str = ""

    def sort_key(self):
        return (self.process, self.kind, self.step_a, self.step_b, self.path_index)


@dataclass(frozen=True)
class Verdict:
    correct: bool
    violations: tuple = ()

    def to_doc(self) -> dict:
        return {
            "correct": self.correct,
            "violations": [
                {
                    "kind": v.kind,
                    "message": v.message,
                    "process": v.process,
                    "path_index": v.path_index,
                    "step_a": v.step_a,
                    "step_b": v.step_b,
                }
                for v in self.violations
            ],
        }


def verify_linear_cm(ps: ProcessSet, cm: ConsolidatedModel) -> Verdict:
    """Check one proposed linear order against its source processes.

    Problems come back as violations, never exceptions; artificial
    endpoint steps are ignored throughout.
    """
    violations: list = []
    order = cm.order(include_artificial=False)
    position: dict = {}
    for i, sid in enumerate(order):
        if sid in position:
            violations.append(
                Violation("DuplicateStep", f"step {sid!r} appears more than once", step_a=sid)
            )
        else:
            position[sid] = i

    present_in_sources = set()
    for p in ps.processes:
        present_in_sources.update(p.step_ids())
    for sid in order:
        owners = ps.steps[sid].owner_types if sid in ps.steps else frozenset()
        if sid not in present_in_sources or not owners:
            violations.append(
                Violation(
                    "DuplicateStep",
                    f"step {sid!r} belongs to no source process",
                    step_a=sid,
                )
            )

    # (a) completeness per process
    for p in ps.processes:
        for sid in p.step_ids():
            if sid not in position:
                violations.append(
                    Violation(
                        "MissingStep",
                        f"process {p.type_id!r} step {sid!r} is missing",
                        process=p.type_id,
                        step_a=sid,
                    )
                )

    # (b) anchors in their agreed order
    anchors = common_steps(ps)
    placed = [a for a in anchors if a in position]
    for a, b in zip(placed, placed[1:]):
        if position[a] >= position[b]:
            violations.append(
                Violation(
                    "AnchorOrderViolation",
                    f"anchor {a!r} must come before anchor {b!r}",
                    step_a=a,
                    step_b=b,
                )
            )

    # (c) every execution path is a subsequence of the order
    anchor_rank = {a: i for i, a in enumerate(anchors)}
    for p in ps.processes:
        for pi, path in enumerate(paths_of(p)):
            if any(sid not in position for sid in path):
                continue  # already reported as MissingStep
            for a, b in zip(path, path[1:]):
                if position[a] > position[b]:
                    violations.append(
                        Violation(
                            "OrderViolation",
                            f"process {p.type_id!r} path {pi} requires "
                            f"{a!r} before {b!r}",
                            process=p.type_id,
                            path_index=pi,
                            step_a=a,
                            step_b=b,
                        )
                    )
            # supplementary precision: a step placed outside its anchor interval
            lower: dict = {}
            low = None
            for sid in path:
                if sid in anchor_rank:
                    low = sid
                else:
                    lower[sid] = low
            high: dict = {}
            hi = None
            for sid in reversed(path):
                if sid in anchor_rank:
                    hi = sid
                else:
                    high[sid] = hi
            for sid in path:
                if sid in anchor_rank:
                    continue
                lo, hi_ = lower[sid], high[sid]
                out_low = lo is not None and position[sid] < position.get(lo, -1)
                out_high = hi_ is not None and position[sid] > position.get(
                    hi_, len(order)
                )
                if out_low or out_high:
                    violations.append(
                        Violation(
                            "BoundaryViolation",
                            f"step {sid!r} must lie between {lo!r} and {hi_!r}",
                            process=p.type_id,
                            path_index=pi,
                            step_a=sid,
                            step_b=(lo if out_low else hi_) or "",
                        )
                    )

    unique = sorted(set(violations), key=Violation.sort_key)
    return Verdict(correct=not unique, violations=tuple(unique))


def enumerate_valid_linearizations(
    ps: ProcessSet, max_steps: int = DEFAULT_ENUM_BOUND
) -> list:
    """Every correct total order of all source steps, lexicographic by
    catalog index. Brute force over permutations; guarded by max_steps."""
    step_ids = [
        sid for sid, s in ps.steps.items() if s.owner_types
    ]  # unreferenced catalog steps never join a linearization
    n = len(step_ids)
    if n > max_steps:
        raise TooLarge(n, max_steps)
    index = {sid: i for i, sid in enumerate(step_ids)}

    constraints = [tuple(index[a] for a in common_steps(ps))]
    for p in ps.processes:
        for path in paths_of(p):
            constraints.append(tuple(index[sid] for sid in path))

    perms = _kernel.valid_permutations(n, constraints)
    return [[step_ids[i] for i in perm] for perm in perms]


def explain(verdict: Verdict) -> str:
    """One stable line per violation; 'correct' when there are none."""
    if verdict.correct:
        return "correct"
    lines = [f"incorrect: {len(verdict.violations)} violation(s)"]
    for v in sorted(verdict.violations, key=Violation.sort_key):
        prefix = f"[{v.kind}]"
        if v.process:
            prefix += f" process={v.process}"
        if v.path_index >= 0:
            prefix += f" path={v.path_index}"
        lines.append(f"{prefix} {v.message}")
    return "\n".join(lines)
