"""HTTP service over the engine: definitions, consolidation, verification,
instance lifecycle, role-filtered views, search and reports.

Error mapping: 401 unauthenticated, 403 role not allowed, 404 unknown
entity, 409 stale version, 422 validation or verdict failures (the body
carries the diagnostics or the Verdict).
"""
from __future__ import annotations

import hashlib
import os
import secrets
import threading
from datetime import datetime, timedelta
from typing import Optional

import yaml
from fastapi import Body, Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from . import runtime
from .consolidate import (
    STRATEGIES,
    attach_conditions,
    build_graph_cm,
    build_linear_cm,
    cm_from_doc,
    cm_to_doc,
    graph_to_dot,
)
from .model import DefinitionError
from .store import NotFound, Report, SearchQuery, Store, VersionConflict
from .verify import explain, verify_linear_cm

SESSION_TTL = timedelta(hours=8)
_PBKDF2_ITERATIONS = 100_000


def _hash_password(password: str, salt: str) -> str:
    return hashlib.pbkdf2_hmac(
        "sha256", password.encode(), bytes.fromhex(salt), _PBKDF2_ITERATIONS
    ).hex()


def add_user(data_dir: str, name: str, password: str, roles: list) -> None:
    """Register (or replace) a local user with salted password digest."""
    path = os.path.join(data_dir, "users.yaml")
    doc = {"users": {}}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {"users": {}}
    salt = secrets.token_hex(16)
    doc["users"][name] = {
        "salt": salt,
        "digest": _hash_password(password, salt),
        "roles": list(roles),
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh)


class _Session:
    def __init__(self, user: str, roles: frozenset):
        self.token = secrets.token_hex(16)
        self.user = user
        self.roles = roles
        self.expiry = datetime.now() + SESSION_TTL


def create_app(data_dir: Optional[str] = None) -> FastAPI:
    data_dir = data_dir or os.environ.get("DATA_DIR", "./data")
    os.makedirs(data_dir, exist_ok=True)
    store = Store(data_dir)
    sessions: dict = {}
    app = FastAPI(title="conflow")
    app.state.store = store

    def auth(authorization: Optional[str] = Header(None)) -> _Session:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(401, {"kind": "Unauthenticated"})
        session = sessions.get(authorization.removeprefix("Bearer "))
        if session is None or session.expiry < datetime.now():
            raise HTTPException(401, {"kind": "Unauthenticated"})
        return session

    def pick_role(session: _Session, role: str) -> str:
        if role not in session.roles:
            raise HTTPException(
                403, {"kind": "Unauthorized", "message": f"role {role!r} not held"}
            )
        return role

    def load_instance_or_404(instance_id: str):
        try:
            return store.load_instance(instance_id)
        except NotFound:
            raise HTTPException(404, {"kind": "NotFound"})

    @app.exception_handler(DefinitionError)
    async def _definition_error(request: Request, exc: DefinitionError):
        return JSONResponse(
            status_code=422,
            content={
                "kind": "DefinitionError",
                "diagnostics": [str(d) for d in exc.diagnostics],
            },
        )

    @app.post("/login")
    def login(body: dict = Body(...)):
        path = os.path.join(data_dir, "users.yaml")
        if not os.path.exists(path):
            raise HTTPException(401, {"kind": "Unauthenticated"})
        with open(path, encoding="utf-8") as fh:
            users = (yaml.safe_load(fh) or {}).get("users", {})
        entry = users.get(body.get("user", ""))
        if not entry or _hash_password(body.get("password", ""), entry["salt"]) != entry["digest"]:
            raise HTTPException(401, {"kind": "Unauthenticated"})
        session = _Session(body["user"], frozenset(entry["roles"]))
        sessions[session.token] = session
        return {"token": session.token, "user": session.user, "roles": sorted(session.roles)}

    @app.delete("/session")
    def logout(session: _Session = Depends(auth)):
        sessions.pop(session.token, None)
        return {"ok": True}

    @app.get("/definitions", response_class=PlainTextResponse)
    def get_definitions(session: _Session = Depends(auth)):
        try:
            return store.load_definitions_text()
        except NotFound:
            raise HTTPException(404, {"kind": "NotFound"})

    @app.put("/definitions")
    def put_definitions(request: Request, session: _Session = Depends(auth), body: dict = Body(None)):
        text = body["text"] if body and "text" in body else None
        if text is None:
            raise HTTPException(422, {"kind": "DefinitionError", "diagnostics": ["empty body"]})
        ps = store.save_definitions(text)
        return {
            "ok": True,
            "processes": len(ps.processes),
            "steps": len(ps.steps),
            "warnings": [str(w) for w in ps.warnings],
        }

    @app.post("/cm/build")
    def cm_build(
        strategy: str = Query("by-process"),
        session: _Session = Depends(auth),
    ):
        if strategy not in STRATEGIES:
            raise HTTPException(422, {"kind": "BadStrategy", "choices": list(STRATEGIES)})
        ps = store.load_definitions()
        cm = attach_conditions(build_linear_cm(ps, strategy))
        cm_id = store.save_cm(cm)
        doc = cm_to_doc(cm)
        doc["cm_id"] = cm_id
        return doc

    @app.post("/cm/verify")
    def cm_verify(body: dict = Body(...), session: _Session = Depends(auth)):
        ps = store.load_definitions()
        try:
            cm = cm_from_doc(body, ps)
        except ValueError as exc:
            raise HTTPException(422, {"kind": "BadDocument", "message": str(exc)})
        verdict = verify_linear_cm(ps, cm)
        doc = verdict.to_doc()
        doc["report"] = explain(verdict)
        if not verdict.correct:
            return JSONResponse(status_code=422, content=doc)
        return doc

    @app.get("/cm/graph.dot", response_class=PlainTextResponse)
    def cm_graph(session: _Session = Depends(auth)):
        ps = store.load_definitions()
        return graph_to_dot(build_graph_cm(ps))

    @app.post("/procedures")
    def create_procedure(body: dict = Body(...), session: _Session = Depends(auth)):
        ps = store.load_definitions()
        cm_id = body.get("cm_id") or store.latest_cm_id()
        if cm_id is None:
            raise HTTPException(422, {"kind": "NoConsolidatedModel"})
        cm = attach_conditions(store.load_cm(cm_id, ps))
        try:
            inst = runtime.create_procedure(
                cm,
                body.get("proc_type", ""),
                body.get("params") or {},
                user=session.user,
                role=body.get("role", "system"),
                cm_id=cm_id,
            )
        except runtime.RuntimeError_ as exc:
            raise HTTPException(422, {"kind": exc.kind, "message": str(exc)})
        with store.lock(inst.id):
            store.save_instance(inst)
        return {"id": inst.id, "version": inst.version, "current_step": inst.current_step_id()}

    @app.get("/procedures")
    def search_procedures(
        session: _Session = Depends(auth),
        proc_type: Optional[str] = None,
        status: Optional[str] = None,
        overdue: Optional[bool] = None,
        text: Optional[str] = None,
        offset: int = 0,
        limit: int = 100,
    ):
        q = SearchQuery(
            proc_type=proc_type,
            status=status,
            overdue=overdue,
            text=text,
            offset=offset,
            limit=limit,
        )
        try:
            results = store.search(q)
        except ValueError as exc:
            raise HTTPException(422, {"kind": "BadQuery", "message": str(exc)})
        return {
            "results": [
                {
                    "id": s.id,
                    "proc_type": s.proc_type,
                    "status": s.status,
                    "created_at": s.created_at.isoformat(),
                    "version": s.version,
                    "current_step": s.current_step,
                    "overdue": s.overdue,
                }
                for s in results
            ]
        }

    @app.get("/procedures/{instance_id}/view")
    def view_procedure(
        instance_id: str,
        role: str,
        session: _Session = Depends(auth),
    ):
        role = pick_role(session, role)
        inst = load_instance_or_404(instance_id)
        vm = runtime.render_view(inst, role, datetime.now())
        return {
            "instance_id": vm.instance_id,
            "proc_type": vm.proc_type,
            "status": vm.status,
            "version": vm.version,
            "steps": [
                {
                    "step_id": sv.step_id,
                    "title": sv.title,
                    "number": sv.number,
                    "mode": sv.mode,
                    "status": sv.status,
                    "deadline": sv.deadline.isoformat() if sv.deadline else None,
                    "fields": [
                        {
                            "name": f.name,
                            "caption": f.caption,
                            "value_kind": f.value_kind,
                            "mandatory": f.mandatory,
                            "value": f.value,
                            "enum_values": list(f.enum_values),
                        }
                        for f in sv.fields
                    ],
                }
                for sv in vm.steps
            ],
        }

    @app.post("/procedures/{instance_id}/steps/{step_id}")
    def submit_step(
        instance_id: str,
        step_id: str,
        body: dict = Body(...),
        session: _Session = Depends(auth),
    ):
        role = pick_role(session, body.get("role", ""))
        if "version" not in body:
            raise HTTPException(422, {"kind": "MissingVersionToken"})
        with store.lock(instance_id):
            inst = load_instance_or_404(instance_id)
            try:
                runtime.submit_edit(
                    inst,
                    session.user,
                    role,
                    step_id,
                    body.get("fields") or {},
                    datetime.now(),
                    expected_version=int(body["version"]),
                    allow_amend=bool(body.get("allow_amend", False)),
                )
            except runtime.StaleVersion as exc:
                raise HTTPException(409, {"kind": exc.kind, "message": str(exc)})
            except runtime.Unauthorized as exc:
                raise HTTPException(403, {"kind": exc.kind, "message": str(exc)})
            except runtime.RuntimeError_ as exc:
                raise HTTPException(422, {"kind": exc.kind, "message": str(exc)})
            try:
                store.save_instance(inst)
            except VersionConflict as exc:
                raise HTTPException(409, {"kind": "VersionConflict", "message": str(exc)})
        return {
            "id": inst.id,
            "version": inst.version,
            "current_step": inst.current_step_id(),
        }

    @app.post("/procedures/{instance_id}/archive")
    def archive(
        instance_id: str,
        body: dict = Body(None),
        session: _Session = Depends(auth),
    ):
        body = body or {}
        with store.lock(instance_id):
            inst = load_instance_or_404(instance_id)
            try:
                runtime.archive_procedure(
                    inst,
                    datetime.now(),
                    user=session.user,
                    role=body.get("role", "system"),
                    override=bool(body.get("override", False)),
                )
            except runtime.NotFinished as exc:
                raise HTTPException(422, {"kind": exc.kind, "message": str(exc)})
            store.save_instance(inst)
        return {"id": inst.id, "status": inst.status, "version": inst.version}

    @app.get("/reports/{kind}")
    def report(
        kind: str,
        format: str = Query("json"),
        session: _Session = Depends(auth),
    ):
        try:
            rep = store.report(kind)
        except ValueError as exc:
            raise HTTPException(422, {"kind": "BadReportKind", "message": str(exc)})
        if format == "csv":
            return PlainTextResponse(rep.to_csv(), media_type="text/csv")
        return rep.to_doc()

    return app
