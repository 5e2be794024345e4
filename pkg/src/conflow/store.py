"""File-backed persistence: definitions, consolidated models, instances and
append-only audit logs, plus search and report generation.

Layout under the data directory (see docs/storage-layout.md):

    definitions/current.yaml     the active process-set document
    cms/<cm_id>.json             linear CM documents, content-addressed
    instances/<id>.json          one document per procedure instance
    audit/<id>.jsonl             append-only audit records per instance

Writes go through write-temp-then-rename, so a crash leaves either the old
or the new document, never a mix. An instance pins its cm_id forever;
editing definitions later cannot corrupt in-flight procedures.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

from . import runtime
from .consolidate import ConsolidatedModel, cm_from_doc, cm_to_doc
from .model import ProcessSet, encode_value, parse_process_set, parse_value
from .runtime import AuditRecord, ProcedureInstance, StepState


class NotFound(KeyError):
    pass


class VersionConflict(ValueError):
    pass


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(path)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _ts(value: Optional[datetime]) -> Optional[str]:
    return value.isoformat() if value else None


def _from_ts(value) -> Optional[datetime]:
    return datetime.fromisoformat(value) if value else None


@dataclass(frozen=True)
class SearchQuery:
    proc_type: Optional[str] = None
    status: Optional[str] = None
    created_from: Optional[datetime] = None
    created_to: Optional[datetime] = None
    step_id: Optional[str] = None
    step_status: Optional[str] = None
    params: dict = field(default_factory=dict)
    overdue: Optional[bool] = None
    text: Optional[str] = None
    sort_key: str = "created_at"
    offset: int = 0
    limit: int = 100


@dataclass(frozen=True)
class InstanceSummary:
    id: str
    proc_type: str
    status: str
    created_at: datetime
    version: int
    current_step: Optional[str]
    overdue: bool


@dataclass(frozen=True)
class Report:
    kind: str
    columns: tuple
    rows: tuple

    def to_doc(self) -> dict:
        return {
            "format_version": 1,
            "kind": self.kind,
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()


REPORT_KINDS = (
    "counts_by_type_and_status",
    "overdue_steps",
    "step_duration_summary",
    "activity_by_role",
)


class Store:
    """Single-writer-per-instance document store; readers never block."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        for sub in ("definitions", "cms", "instances", "audit"):
            os.makedirs(os.path.join(data_dir, sub), exist_ok=True)
        self._locks: dict = {}
        self._locks_guard = threading.Lock()

    def lock(self, instance_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(instance_id, threading.Lock())

    # -- definitions --------------------------------------------------------

    def _defs_path(self) -> str:
        return os.path.join(self.data_dir, "definitions", "current.yaml")

    def save_definitions(self, text: str) -> ProcessSet:
        ps = parse_process_set(text)  # raises DefinitionError on any problem
        _atomic_write(self._defs_path(), text)
        return ps

    def load_definitions_text(self) -> str:
        path = self._defs_path()
        if not os.path.exists(path):
            raise NotFound("no definitions uploaded")
        with open(path, encoding="utf-8") as fh:
            return fh.read()

    def load_definitions(self) -> ProcessSet:
        return parse_process_set(self.load_definitions_text())

    # -- consolidated models -------------------------------------------------

    def save_cm(self, cm: ConsolidatedModel) -> str:
        doc = cm_to_doc(cm)
        body = json.dumps(doc, sort_keys=True)
        cm_id = hashlib.sha256(body.encode()).hexdigest()[:16]
        doc["cm_id"] = cm_id
        _atomic_write(
            os.path.join(self.data_dir, "cms", f"{cm_id}.json"),
            json.dumps(doc, indent=2),
        )
        return cm_id

    def load_cm(self, cm_id: str, ps: Optional[ProcessSet] = None) -> ConsolidatedModel:
        path = os.path.join(self.data_dir, "cms", f"{cm_id}.json")
        if not os.path.exists(path):
            raise NotFound(f"no consolidated model {cm_id!r}")
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cm_from_doc(doc, ps or self.load_definitions())

    def latest_cm_id(self) -> Optional[str]:
        d = os.path.join(self.data_dir, "cms")
        entries = [
            (os.path.getmtime(os.path.join(d, f)), f[:-5])
            for f in os.listdir(d)
            if f.endswith(".json")
        ]
        if not entries:
            return None
        return max(entries)[1]

    # -- instances ----------------------------------------------------------

    def _inst_path(self, instance_id: str) -> str:
        return os.path.join(self.data_dir, "instances", f"{instance_id}.json")

    def _audit_path(self, instance_id: str) -> str:
        return os.path.join(self.data_dir, "audit", f"{instance_id}.jsonl")

    def save_instance(self, inst: ProcedureInstance) -> None:
        """Persist; requires exactly one version step beyond the stored copy."""
        path = self._inst_path(inst.id)
        stored_version = 0
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                stored_version = json.load(fh)["version"]
        if stored_version and inst.version not in (stored_version, stored_version + 1):
            raise VersionConflict(
                f"instance {inst.id}: stored version {stored_version}, "
                f"saving {inst.version}"
            )
        if not stored_version and inst.version != 1:
            raise VersionConflict(
                f"instance {inst.id}: first save must be version 1, got {inst.version}"
            )
        self._append_audit(inst)
        _atomic_write(path, json.dumps(_instance_doc(inst), indent=2))

    def _append_audit(self, inst: ProcedureInstance) -> None:
        path = self._audit_path(inst.id)
        existing = 0
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                existing = sum(1 for _ in fh)
        new = [r for r in inst.audit if r.seq > existing]
        if not new:
            return
        with open(path, "a", encoding="utf-8") as fh:
            for r in new:
                fh.write(json.dumps(_audit_doc(r)) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def load_instance(self, instance_id: str) -> ProcedureInstance:
        path = self._inst_path(instance_id)
        if not os.path.exists(path):
            raise NotFound(f"no instance {instance_id!r}")
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        ps = self.load_definitions()
        cm = self.load_cm(doc["cm_id"], ps)
        from .consolidate import attach_conditions

        cm = attach_conditions(cm)
        inst = _instance_from_doc(doc, cm)
        inst.audit = self.load_audit(instance_id)
        return inst

    def load_audit(self, instance_id: str) -> list:
        path = self._audit_path(instance_id)
        if not os.path.exists(path):
            return []
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                records.append(_audit_from_doc(json.loads(line)))
        return records

    def list_instance_ids(self) -> list:
        d = os.path.join(self.data_dir, "instances")
        return sorted(f[:-5] for f in os.listdir(d) if f.endswith(".json"))

    # -- search and reports ---------------------------------------------------

    def search(self, q: SearchQuery, now: Optional[datetime] = None) -> list:
        now = now or datetime.now()
        ps = self.load_definitions()
        if q.params:
            for name in q.params:
                if name not in ps.params:
                    raise ValueError(f"unknown parameter {name!r} in query")
        out = []
        for iid in self.list_instance_ids():
            inst = self.load_instance(iid)
            if q.proc_type and inst.proc_type != q.proc_type:
                continue
            if q.status and inst.status != q.status:
                continue
            if q.created_from and inst.created_at < q.created_from:
                continue
            if q.created_to and inst.created_at > q.created_to:
                continue
            if q.step_id and q.step_status:
                st = inst.step_states.get(q.step_id)
                if st is None or st.status != q.step_status:
                    continue
            if q.params:
                decls = ps.params
                match = True
                for name, raw in q.params.items():
                    d = decls[name]
                    want = parse_value(d.value_kind, raw, d.enum_values)
                    if inst.params.get(name) != want:
                        match = False
                        break
                if not match:
                    continue
            overdue = _is_overdue(inst, now)
            if q.overdue is not None and overdue != q.overdue:
                continue
            if q.text and not _text_match(inst, q.text):
                continue
            out.append(
                InstanceSummary(
                    id=inst.id,
                    proc_type=inst.proc_type,
                    status=inst.status,
                    created_at=inst.created_at,
                    version=inst.version,
                    current_step=inst.current_step_id(),
                    overdue=overdue,
                )
            )
        out.sort(key=lambda s: (getattr(s, q.sort_key, s.created_at), s.id))
        return out[q.offset : q.offset + q.limit]

    def report(self, kind: str, now: Optional[datetime] = None) -> Report:
        now = now or datetime.now()
        if kind not in REPORT_KINDS:
            raise ValueError(f"unknown report kind {kind!r}; choose from {REPORT_KINDS}")
        ps = self.load_definitions()
        instances = [self.load_instance(i) for i in self.list_instance_ids()]
        if kind == "counts_by_type_and_status":
            rows = []
            for tid in ps.type_ids():
                current = sum(
                    1 for i in instances if i.proc_type == tid and i.status == "current"
                )
                archived = sum(
                    1 for i in instances if i.proc_type == tid and i.status == "archived"
                )
                rows.append((tid, current, archived))
            return Report(kind, ("proc_type", "current", "archived"), tuple(rows))
        if kind == "overdue_steps":
            rows = []
            for inst in instances:
                if inst.status != "current":
                    continue
                for sid, st in inst.step_states.items():
                    if (
                        st.status not in ("completed", "skipped")
                        and st.deadline is not None
                        and st.deadline < now
                    ):
                        rows.append(
                            (inst.id, inst.proc_type, sid, st.deadline.isoformat())
                        )
            rows.sort()
            return Report(kind, ("instance", "proc_type", "step", "deadline"), tuple(rows))
        if kind == "step_duration_summary":
            buckets: dict = {}
            for inst in instances:
                prev_end = inst.created_at
                for s in inst.real_steps():
                    st = inst.step_states[s.id]
                    if st.status == "completed" and st.completed_at:
                        buckets.setdefault(s.id, []).append(
                            (st.completed_at - prev_end).total_seconds()
                        )
                        prev_end = st.completed_at
            rows = tuple(
                (sid, len(vals), round(sum(vals) / len(vals), 1), round(max(vals), 1))
                for sid, vals in sorted(buckets.items())
            )
            return Report(kind, ("step", "count", "mean_seconds", "max_seconds"), rows)
        # activity_by_role
        counts: dict = {}
        for inst in instances:
            for r in inst.audit:
                if r.operation in ("submit_edit", "amend"):
                    counts[r.role] = counts.get(r.role, 0) + 1
        rows = tuple((role, n) for role, n in sorted(counts.items()))
        return Report(kind, ("role", "edits"), rows)


def _is_overdue(inst: ProcedureInstance, now: datetime) -> bool:
    current = inst.current_step_id()
    if current is None:
        return False
    st = inst.step_states[current]
    return st.deadline is not None and st.deadline < now


def _text_match(inst: ProcedureInstance, needle: str) -> bool:
    needle = needle.lower()
    for st in inst.step_states.values():
        for v in st.field_values.values():
            if v is not None and needle in str(encode_value(v)).lower():
                return True
    return False


# ---------------------------------------------------------------------------
# Document codecs

def _instance_doc(inst: ProcedureInstance) -> dict:
    return {
        "format_version": 1,
        "id": inst.id,
        "proc_type": inst.proc_type,
        "cm_id": inst.cm_id,
        "status": inst.status,
        "version": inst.version,
        "created_at": _ts(inst.created_at),
        "archived_at": _ts(inst.archived_at),
        "params": {k: encode_value(v) for k, v in inst.params.items()},
        "steps": {
            sid: {
                "status": st.status,
                "values": {k: encode_value(v) for k, v in st.field_values.items()},
                "completed_at": _ts(st.completed_at),
                "completed_by": list(st.completed_by) if st.completed_by else None,
                "deadline": _ts(st.deadline),
            }
            for sid, st in inst.step_states.items()
        },
    }


def _instance_from_doc(doc: dict, cm: ConsolidatedModel) -> ProcedureInstance:
    ps = cm.source
    params = {}
    for name, raw in doc["params"].items():
        d = ps.params[name]
        params[name] = parse_value(d.value_kind, raw, d.enum_values)
    step_states = {}
    smap = cm.step_map()
    for sid, sdoc in doc["steps"].items():
        fmap = smap[sid].field_map() if sid in smap else {}
        values = {}
        for fname, raw in sdoc["values"].items():
            f = fmap.get(fname)
            values[fname] = (
                parse_value(f.value_kind, raw, f.enum_values) if f and raw is not None else raw
            )
        step_states[sid] = StepState(
            status=sdoc["status"],
            field_values=values,
            completed_at=_from_ts(sdoc["completed_at"]),
            completed_by=tuple(sdoc["completed_by"]) if sdoc["completed_by"] else None,
            deadline=_from_ts(sdoc["deadline"]),
        )
    return ProcedureInstance(
        id=doc["id"],
        proc_type=doc["proc_type"],
        cm=cm,
        cm_id=doc["cm_id"],
        status=doc["status"],
        params=params,
        step_states=step_states,
        created_at=_from_ts(doc["created_at"]),
        version=doc["version"],
        archived_at=_from_ts(doc["archived_at"]),
    )


def _audit_doc(r: AuditRecord) -> dict:
    return {
        "seq": r.seq,
        "instance_id": r.instance_id,
        "user": r.user,
        "role": r.role,
        "operation": r.operation,
        "step_id": r.step_id,
        "version_before": r.version_before,
        "version_after": r.version_after,
        "timestamp": _ts(r.timestamp),
        "payload": r.payload,
        "digest": r.digest,
    }


def _audit_from_doc(doc: dict) -> AuditRecord:
    return AuditRecord(
        seq=doc["seq"],
        instance_id=doc["instance_id"],
        user=doc["user"],
        role=doc["role"],
        operation=doc["operation"],
        step_id=doc["step_id"],
        version_before=doc["version_before"],
        version_after=doc["version_after"],
        timestamp=_from_ts(doc["timestamp"]),
        payload=doc["payload"],
        digest=doc["digest"],
    )


def replay_audit(cm: ConsolidatedModel, records: list) -> ProcedureInstance:
    """Event-sourcing reconstruction: rebuild instance state purely from its
    audit trail. Used to check that the stored state never drifts from the
    log."""
    if not records or records[0].operation != "create":
        raise ValueError("audit trail must start with a create record")
    first = records[0]
    inst = runtime.create_procedure(
        cm,
        first.payload["proc_type"],
        first.payload["params"],
        clock=first.timestamp,
        user=first.user,
        role=first.role,
        instance_id=first.instance_id,
    )
    for r in records[1:]:
        if r.operation in ("submit_edit", "amend"):
            runtime.submit_edit(
                inst,
                r.user,
                r.role,
                r.step_id,
                r.payload["fields"],
                r.timestamp,
                expected_version=r.version_before,
                allow_amend=r.operation == "amend",
            )
        elif r.operation == "expire_deadlines":
            runtime.expire_deadlines(inst, r.timestamp)
        elif r.operation == "archive":
            runtime.archive_procedure(
                inst, r.timestamp, r.user, r.role, override=r.payload.get("override", False)
            )
        else:
            raise ValueError(f"unknown audit operation {r.operation!r}")
    return inst
