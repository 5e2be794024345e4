"""Procedure execution over a consolidated model.

An instance walks the linear step order: the current step is found by a
consecutive scan for the first step that is still open, has blank mandatory
fields (or none) and whose implementation condition holds under the
instance's parameter environment. Edits are role-checked, versioned for
optimistic concurrency, and every state change appends one audit record.
"""
from __future__ import annotations

import hashlib
import json
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Optional

from . import conditions
from .conditions import ParamEnv, eval_condition
from .consolidate import ConsolidatedModel
from .model import StepDef, encode_value, parse_value

STATUS_CURRENT = "current"
STATUS_ARCHIVED = "archived"

STEP_COMPLETED = "completed"
STEP_CURRENT = "current"
STEP_FUTURE = "future"
STEP_SKIPPED = "skipped"


class RuntimeError_(ValueError):
    kind = "RuntimeError"


class Unauthorized(RuntimeError_):
    kind = "Unauthorized"


class NotEditable(RuntimeError_):
    kind = "NotEditable"


class NotCurrentStep(RuntimeError_):
    kind = "NotCurrentStep"


class IllTypedValue(RuntimeError_):
    kind = "IllTypedValue"


class StaleVersion(RuntimeError_):
    kind = "StaleVersion"


class NotFinished(RuntimeError_):
    kind = "NotFinished"


class UnknownStep(RuntimeError_):
    kind = "UnknownStep"


class UnknownProcType(RuntimeError_):
    kind = "UnknownProcType"


class ReplayStuck(RuntimeError_):
    kind = "ReplayStuck"


@dataclass
class StepState:
    status: str = STEP_FUTURE
    field_values: dict = field(default_factory=dict)
    completed_at: Optional[datetime] = None
    completed_by: Optional[tuple] = None  # (user, role)
    deadline: Optional[datetime] = None


@dataclass
class AuditRecord:
    seq: int
    instance_id: str
    user: str
    role: str
    operation: str
    step_id: Optional[str]
    version_before: int
    version_after: int
    timestamp: datetime
    payload: dict
    digest: str = ""

    def __post_init__(self):
        if not self.digest:
            body = json.dumps(self.payload, sort_keys=True, default=str)
            self.digest = hashlib.sha256(body.encode()).hexdigest()


@dataclass
class ProcedureInstance:
    id: str
    proc_type: str
    cm: ConsolidatedModel
    cm_id: str
    status: str
    params: dict  # set parameters only
    step_states: dict  # step id -> StepState
    created_at: datetime
    version: int
    archived_at: Optional[datetime] = None
    audit: list = field(default_factory=list)

    def env(self, clock: datetime) -> ParamEnv:
        timeline = {
            sid: st.completed_at
            for sid, st in self.step_states.items()
            if st.completed_at is not None
        }
        return ParamEnv(
            values=dict(self.params),
            declared=self.cm.source.param_kinds(),
            proc_type=self.proc_type,
            clock=clock,
            start_time=self.created_at,
            timeline=timeline,
        )

    def current_step_id(self) -> Optional[str]:
        for sid, st in self.step_states.items():
            if st.status == STEP_CURRENT:
                return sid
        return None

    def real_steps(self) -> list:
        return [s for s in self.cm.steps if not s.artificial]


@dataclass(frozen=True)
class FieldView:
    name: str
    caption: str
    value_kind: str
    mandatory: bool
    value: object = None
    enum_values: tuple = ()


@dataclass(frozen=True)
class StepView:
    step_id: str
    title: str
    number: int
    mode: str  # edit | view | hidden
    status: str
    fields: tuple = ()
    deadline: Optional[datetime] = None


@dataclass(frozen=True)
class ViewModel:
    instance_id: str
    proc_type: str
    status: str
    version: int
    steps: tuple


# ---------------------------------------------------------------------------

def _coerce_fields(step: StepDef, values: dict) -> dict:
    fmap = step.field_map()
    out = {}
    for name, raw in values.items():
        if name not in fmap:
            raise IllTypedValue(f"step {step.id!r} has no field {name!r}")
        f = fmap[name]
        try:
            out[name] = parse_value(f.value_kind, raw, f.enum_values)
        except ValueError as exc:
            raise IllTypedValue(f"field {name!r}: {exc}")
    return out


def _audit(inst: ProcedureInstance, user, role, op, step_id, before, payload, clock):
    inst.audit.append(
        AuditRecord(
            seq=len(inst.audit) + 1,
            instance_id=inst.id,
            user=user,
            role=role,
            operation=op,
            step_id=step_id,
            version_before=before,
            version_after=inst.version,
            timestamp=clock,
            payload=payload,
        )
    )


def create_procedure(
    cm: ConsolidatedModel,
    proc_type: str,
    initial_params: Optional[dict] = None,
    clock: Optional[datetime] = None,
    user: str = "system",
    role: str = "system",
    cm_id: str = "",
    instance_id: Optional[str] = None,
) -> ProcedureInstance:
    if proc_type not in cm.source.type_ids():
        raise UnknownProcType(f"unknown procedure type {proc_type!r}")
    clock = clock or datetime.now()
    decls = cm.source.params
    params: dict = {}
    for name, raw in (initial_params or {}).items():
        if name not in decls:
            raise IllTypedValue(f"undeclared parameter {name!r}")
        d = decls[name]
        try:
            params[name] = parse_value(d.value_kind, raw, d.enum_values)
        except ValueError as exc:
            raise IllTypedValue(f"parameter {name!r}: {exc}")
    inst = ProcedureInstance(
        id=instance_id or uuid.uuid4().hex,
        proc_type=proc_type,
        cm=cm,
        cm_id=cm_id,
        status=STATUS_CURRENT,
        params=params,
        step_states={s.id: StepState() for s in cm.steps if not s.artificial},
        created_at=clock,
        version=1,
    )
    _set_start_deadlines(inst)
    _recompute_current(inst, clock)
    _audit(
        inst,
        user,
        role,
        "create",
        None,
        0,
        {"proc_type": proc_type, "params": {k: encode_value(v) for k, v in params.items()}},
        clock,
    )
    return inst


def _set_start_deadlines(inst: ProcedureInstance) -> None:
    for s in inst.real_steps():
        rule = s.completion
        if rule.mode == "on_deadline" and rule.anchor == "procedure_start":
            inst.step_states[s.id].deadline = inst.created_at + rule.duration


def _update_chained_deadlines(inst: ProcedureInstance, clock: datetime) -> None:
    """Arm previous_step_completion deadlines once the predecessor closes."""
    prev: Optional[StepState] = None
    for s in inst.real_steps():
        st = inst.step_states[s.id]
        rule = s.completion
        if (
            rule.mode == "on_deadline"
            and rule.anchor == "previous_step_completion"
            and st.deadline is None
            and prev is not None
            and prev.status in (STEP_COMPLETED, STEP_SKIPPED)
            and prev.completed_at is not None
        ):
            st.deadline = prev.completed_at + rule.duration
        prev = st


def determine_current_step(inst: ProcedureInstance, clock: datetime) -> Optional[str]:
    """First open step with blank mandatory fields and a true condition."""
    env = inst.env(clock)
    for s in inst.real_steps():
        st = inst.step_states[s.id]
        if st.status in (STEP_COMPLETED, STEP_SKIPPED):
            continue
        mandatory = s.mandatory_fields()
        blank = [f for f in mandatory if st.field_values.get(f.name) is None]
        if mandatory and not blank:
            continue
        if eval_condition(s.impl_condition, env):
            return s.id
    return None


def _recompute_current(inst: ProcedureInstance, clock: datetime) -> Optional[str]:
    _update_chained_deadlines(inst, clock)
    chosen = None if inst.status == STATUS_ARCHIVED else determine_current_step(inst, clock)
    for sid, st in inst.step_states.items():
        if sid == chosen:
            st.status = STEP_CURRENT
        elif st.status == STEP_CURRENT:
            st.status = STEP_FUTURE
    return chosen


def submit_edit(
    inst: ProcedureInstance,
    user: str,
    role: str,
    step_id: str,
    field_values: dict,
    clock: datetime,
    expected_version: Optional[int] = None,
    allow_amend: bool = False,
) -> ProcedureInstance:
    """Store field values on a step, completing it when its rule is met.

    Outputs apply atomically with completion; partial edits persist values
    but assign nothing. The caller's version token guards against lost
    updates.
    """
    if inst.status == STATUS_ARCHIVED:
        raise NotEditable("archived procedures reject all edits")
    if expected_version is not None and expected_version != inst.version:
        raise StaleVersion(
            f"expected version {expected_version}, instance is at {inst.version}"
        )
    step = next((s for s in inst.real_steps() if s.id == step_id), None)
    if step is None:
        raise UnknownStep(f"unknown step {step_id!r}")
    if role not in step.edit_roles:
        raise Unauthorized(f"role {role!r} may not edit step {step_id!r}")
    if not step.editable or not step.visible:
        raise NotEditable(f"step {step_id!r} is not editable")
    st = inst.step_states[step_id]
    amend = st.status == STEP_COMPLETED and allow_amend
    if st.status != STEP_CURRENT and not amend:
        raise NotCurrentStep(f"step {step_id!r} is not the current step")

    values = _coerce_fields(step, field_values)
    before = inst.version
    st.field_values.update(values)

    completed = False
    mandatory = step.mandatory_fields()
    if all(st.field_values.get(f.name) is not None for f in mandatory) and not amend:
        st.status = STEP_COMPLETED
        st.completed_at = clock
        st.completed_by = (user, role)
        completed = True
        for out in step.outputs:
            if out.source_field is not None:
                v = st.field_values.get(out.source_field)
                if v is not None:
                    inst.params[out.param] = v
            else:
                inst.params[out.param] = out.literal

    inst.version += 1
    _recompute_current(inst, clock)
    _audit(
        inst,
        user,
        role,
        "amend" if amend else "submit_edit",
        step_id,
        before,
        {
            "fields": {k: encode_value(v) for k, v in values.items()},
            "completed": completed,
        },
        clock,
    )
    return inst


def expire_deadlines(inst: ProcedureInstance, clock: datetime) -> ProcedureInstance:
    """Skip every deadline-ruled step whose deadline has passed (closed
    boundary: expiry at clock >= deadline). Idempotent for a fixed clock."""
    if inst.status == STATUS_ARCHIVED:
        return inst
    _update_chained_deadlines(inst, clock)
    env = inst.env(clock)
    skipped = []
    for s in inst.real_steps():
        st = inst.step_states[s.id]
        if st.status in (STEP_COMPLETED, STEP_SKIPPED):
            continue
        if st.deadline is None or st.deadline > clock:
            continue
        if st.status == STEP_CURRENT or eval_condition(s.impl_condition, env):
            st.status = STEP_SKIPPED
            st.completed_at = clock
            skipped.append(s.id)
    if not skipped:
        return inst
    before = inst.version
    inst.version += 1
    _recompute_current(inst, clock)
    _audit(
        inst,
        "system",
        "system",
        "expire_deadlines",
        None,
        before,
        {"skipped": skipped},
        clock,
    )
    return inst


def archive_procedure(
    inst: ProcedureInstance,
    clock: datetime,
    user: str = "system",
    role: str = "system",
    override: bool = False,
) -> ProcedureInstance:
    if inst.status == STATUS_ARCHIVED:
        return inst
    if determine_current_step(inst, clock) is not None and not override:
        raise NotFinished("procedure still has an eligible step; use override")
    before = inst.version
    inst.status = STATUS_ARCHIVED
    inst.archived_at = clock
    inst.version += 1
    for st in inst.step_states.values():
        if st.status == STEP_CURRENT:
            st.status = STEP_FUTURE
    _audit(inst, user, role, "archive", None, before, {"override": override}, clock)
    return inst


def render_view(inst: ProcedureInstance, role: str, clock: datetime) -> ViewModel:
    """Role-filtered snapshot: hidden steps disappear, the current step is
    an edit form exactly when the role may edit it, everything else views."""
    current = inst.current_step_id()
    views = []
    for s in inst.real_steps():
        st = inst.step_states[s.id]
        if role not in s.view_roles or not s.visible:
            views.append(
                StepView(s.id, s.title, s.number or 0, "hidden", st.status)
            )
            continue
        mode = "view"
        if (
            s.id == current
            and inst.status != STATUS_ARCHIVED
            and role in s.edit_roles
            and s.editable
        ):
            mode = "edit"
        visible_fields = tuple(
            FieldView(
                f.name,
                f.caption,
                f.value_kind,
                f.availability,
                encode_value(st.field_values.get(f.name)),
                f.enum_values,
            )
            for f in s.fields
            if (f.visible_in_edit if mode == "edit" else f.visible_in_view)
        )
        views.append(
            StepView(
                s.id,
                s.title,
                s.number or 0,
                mode,
                st.status,
                visible_fields,
                st.deadline,
            )
        )
    return ViewModel(inst.id, inst.proc_type, inst.status, inst.version, tuple(views))


def replay(
    cm: ConsolidatedModel,
    proc_type: str,
    script: dict,
    initial_params: Optional[dict] = None,
    start_clock: Optional[datetime] = None,
    max_ops: int = 10_000,
) -> list:
    """Drive an instance to completion from a per-step edit script.

    ``script`` maps step id -> {"fields": {...}, "user": ..., "role": ...};
    a current step absent from the script is only passable via its deadline,
    which the replay clock jumps to. Returns completed and skipped step ids
    in completion order.
    """
    clock = start_clock or datetime(2024, 1, 1, 9, 0, 0)
    inst = create_procedure(cm, proc_type, initial_params, clock)
    done: list = []
    for _ in range(max_ops):
        current = inst.current_step_id()
        if current is None:
            break
        entry = script.get(current)
        clock += timedelta(minutes=1)
        if entry is not None:
            step = inst.cm.step(current)
            role = entry.get("role") or (sorted(step.edit_roles)[0] if step.edit_roles else "")
            submit_edit(
                inst,
                entry.get("user", "replay"),
                role,
                current,
                entry.get("fields", {}),
                clock,
                expected_version=inst.version,
            )
        else:
            st = inst.step_states[current]
            if st.deadline is None:
                raise ReplayStuck(
                    f"step {current!r} has no script entry and no deadline"
                )
            clock = max(clock, st.deadline)
            expire_deadlines(inst, clock)
        for sid, st in inst.step_states.items():
            if st.status in (STEP_COMPLETED, STEP_SKIPPED) and sid not in done:
                done.append(sid)
    else:
        raise ReplayStuck("replay did not terminate")
    # report in completion order
    done.sort(key=lambda sid: inst.step_states[sid].completed_at or clock)
    return done
