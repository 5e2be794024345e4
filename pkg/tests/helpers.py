"""Shared fixtures: the two-process worked example, the deployment-scale
definitions, replay scripts, and a seeded random ProcessSet generator for
property suites."""
from __future__ import annotations

import os
import random

from conflow.model import (
    Branch,
    ElementaryProcessDef,
    ProcessSet,
    Segment,
    StepDef,
    parse_process_set,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def load_two_process() -> ProcessSet:
    with open(os.path.join(FIXTURES, "two_process.yaml"), encoding="utf-8") as fh:
        return parse_process_set(fh.read())


def two_process_text() -> str:
    with open(os.path.join(FIXTURES, "two_process.yaml"), encoding="utf-8") as fh:
        return fh.read()


def two_process_script(site_visit: bool = True) -> dict:
    return {
        "C1": {"fields": {"decision_no": "D-1", "site_visit": site_visit},
               "role": "scahe_secretary", "user": "maria"},
        "C2": {"fields": {"amount": "1200.00"}, "role": "accountant", "user": "ivan"},
        "C3": {"fields": {"outcome": "approved"}, "role": "administrator", "user": "root"},
        "A3": {"fields": {"report_no": "R-7"}, "role": "clerk", "user": "petya"},
        "A4": {"fields": {"protocol_no": "P-2"}, "role": "ac_secretary", "user": "elena"},
        "A5": {"fields": {"visit_date": "2024-03-01"}, "role": "clerk", "user": "petya"},
        "B1": {"fields": {"reg_no": "G-11"}, "role": "clerk", "user": "petya"},
        "B2": {"fields": {"commission": "K-3"}, "role": "scahe_secretary", "user": "maria"},
        "B3": {"fields": {"opinion": "fine"}, "role": "clerk", "user": "petya"},
    }


# the hand-authored orders from the worked example (artificial ends optional)
GOOD_ORDER = ["C1", "B1", "B2", "A3", "C2", "A4", "B3", "A5", "C3"]
BAD_ORDER_SWAP = ["C1", "B1", "B2", "A3", "C2", "A5", "B3", "A4", "C3"]  # A4 after A5
BAD_ORDER_BRANCH = ["C1", "B1", "B2", "C2", "A4", "B3", "A5", "C3", "A3"]  # A3 after C3


def random_process_set(
    rng: random.Random,
    max_procs: int = 5,
    max_own_steps: int = 8,
    max_total: int | None = None,
    allow_alternatives: bool = True,
) -> ProcessSet:
    """A structurally valid ProcessSet with a consistent anchor order.

    Anchors K0..Kn share one global order in every process; each process
    adds its own steps around them, sometimes inside alternative branches
    (occasionally with an anchor leading one branch, like the worked
    example's payment step)."""
    n_procs = rng.randint(1, max_procs)
    n_anchors = rng.randint(0, 3)
    anchors = [f"K{i}" for i in range(n_anchors)]
    budget = max_total - n_anchors if max_total else None

    catalog: list = list(anchors)
    processes = []
    for p in range(n_procs):
        own: list = []

        def new_step():
            sid = f"s{p}_{len(own)}"
            own.append(sid)
            catalog.append(sid)
            return sid

        def may_add() -> bool:
            if len(own) >= max_own_steps - n_anchors:
                return False
            if budget is not None and len(catalog) - n_anchors >= budget:
                return False
            return rng.random() < 0.6

        included = [a for a in anchors if rng.random() < 0.75]
        segments: list = []
        pending = list(included)
        while pending or may_add():
            if pending and rng.random() < 0.5:
                nxt = pending.pop(0)
                if (
                    allow_alternatives
                    and may_add()
                    and rng.random() < 0.2
                ):
                    # anchor leads one branch, a lone step forms the other
                    b1 = [nxt] + ([new_step()] if may_add() else [])
                    b2 = [new_step()]
                    segments.append(
                        Segment(
                            "alternatives",
                            branches=(Branch(tuple(b1)), Branch(tuple(b2))),
                        )
                    )
                else:
                    segments.append(Segment("single", step=nxt))
            elif may_add():
                if allow_alternatives and rng.random() < 0.25 and may_add():
                    b1 = [new_step()]
                    b2 = [new_step()]
                    if may_add() and rng.random() < 0.5:
                        b1.append(new_step())
                    segments.append(
                        Segment(
                            "alternatives",
                            branches=(Branch(tuple(b1)), Branch(tuple(b2))),
                        )
                    )
                else:
                    segments.append(Segment("single", step=new_step()))
            elif not pending:
                break
        if not segments:
            segments = [Segment("single", step=new_step())]
        processes.append(
            ElementaryProcessDef(f"P{p}", f"Process {p}", tuple(segments))
        )

    steps = {}
    owners: dict = {}
    for proc in processes:
        for sid in proc.step_ids():
            owners.setdefault(sid, set()).add(proc.type_id)
    for sid in catalog:
        if sid in owners:
            steps[sid] = StepDef(id=sid, title=sid, owner_types=frozenset(owners[sid]))
    return ProcessSet(
        processes=tuple(processes), steps=steps, roles=(), params={}
    )
