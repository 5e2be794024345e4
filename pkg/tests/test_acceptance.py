"""End-to-end acceptance gate.

Each test covers one numbered criterion and prints a single PASS line on
success (pytest reports the FAIL case); run with ``pytest -v`` to see one
line per criterion.
"""
import itertools
import os
import random
import time
from datetime import date, datetime, timedelta
from decimal import Decimal

import pytest
from fastapi.testclient import TestClient

from conflow import demo
from conflow.api import add_user, create_app
from conflow.conditions import (
    And,
    BoolLit,
    Cmp,
    Const,
    DateLit,
    Elapsed,
    Name,
    Not,
    NumLit,
    Or,
    ProcTypeIn,
    StrLit,
    eval_condition,
    parse_condition,
    print_condition,
    ParamEnv,
)
from conflow.consolidate import attach_conditions, build_linear_cm, cm_from_doc
from conflow.model import parse_process_set, paths_of
from conflow.runtime import (
    archive_procedure,
    create_procedure,
    expire_deadlines,
    replay,
    submit_edit,
)
from conflow.store import Store, replay_audit
from conflow.verify import (
    TooLarge,
    enumerate_valid_linearizations,
    verify_linear_cm,
)

from helpers import (
    BAD_ORDER_BRANCH,
    BAD_ORDER_SWAP,
    GOOD_ORDER,
    FIXTURES,
    load_two_process,
    random_process_set,
    two_process_script,
    two_process_text,
)

T0 = datetime(2024, 1, 1, 9, 0, 0)


def _ok(n, text):
    print(f"ACCEPTANCE {n}: PASS — {text}")


def load_scaled():
    with open(os.path.join(FIXTURES, "scaled.yaml"), encoding="utf-8") as fh:
        return parse_process_set(fh.read())


def test_criterion_1_worked_example_verdicts():
    started = time.perf_counter()
    ps = load_two_process()
    cm_good = cm_from_doc({"order": GOOD_ORDER}, ps)
    cm_interleaved = build_linear_cm(ps, "round-robin")
    assert verify_linear_cm(ps, cm_good).correct
    assert verify_linear_cm(ps, cm_interleaved).correct

    v_swap = verify_linear_cm(ps, cm_from_doc({"order": BAD_ORDER_SWAP}, ps))
    assert not v_swap.correct
    assert any(
        v.kind == "OrderViolation" and (v.step_a, v.step_b) == ("A4", "A5")
        for v in v_swap.violations
    )

    v_branch = verify_linear_cm(ps, cm_from_doc({"order": BAD_ORDER_BRANCH}, ps))
    assert not v_branch.correct
    assert any(
        v.kind in ("OrderViolation", "BoundaryViolation") and v.step_a == "A3"
        for v in v_branch.violations
    )
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    _ok(1, f"4/4 worked-example verdicts in {elapsed:.3f}s")


def test_criterion_2_builder_verifier_coherence():
    checked = 0
    for seed in range(500):
        ps = random_process_set(random.Random(seed), max_procs=5, max_own_steps=8)
        for strategy in ("by-process", "round-robin"):
            cm = build_linear_cm(ps, strategy)
            verdict = verify_linear_cm(ps, cm)
            assert verdict.correct, (seed, strategy, cm.order(), verdict)
            checked += 1
    assert checked == 1000
    _ok(2, f"{checked}/1000 built models verified correct over 500 random sets")


def test_criterion_3_oracle_equivalence():
    started = time.perf_counter()
    done = 0
    seed = 0
    while done < 100:
        seed += 1
        ps = random_process_set(
            random.Random(seed), max_procs=4, max_own_steps=4, max_total=8
        )
        try:
            valid = {
                tuple(o) for o in enumerate_valid_linearizations(ps, max_steps=8)
            }
        except TooLarge:
            continue
        owned = [
            s for s in ps.steps if any(s in p.step_ids() for p in ps.processes)
        ]
        accepted = set()
        for perm in itertools.permutations(owned):
            cm = cm_from_doc({"order": list(perm)}, ps)
            if verify_linear_cm(ps, cm).correct:
                accepted.add(perm)
        assert accepted == valid, (seed, accepted ^ valid)
        done += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 300
    _ok(3, f"verifier == enumeration on {done} random sets in {elapsed:.1f}s")


def _route_script(ps, proc_type, path):
    """Replay inputs whose executed trace should equal the given path."""
    script = {
        sid: entry
        for sid, entry in demo.fill_script(ps, proc_type).items()
        if sid in path
    }
    params = {}
    route_param = f"route_{proc_type}"
    if route_param in ps.params:
        params[route_param] = "visit" if f"{proc_type}_visit" in path else "desk"
    return script, params


def test_criterion_4_trace_equivalence():
    # worked-example fixture: scripts per path via the branch parameter
    ps = load_two_process()
    cm = attach_conditions(build_linear_cm(ps))
    traces = set()
    for proc in ps.processes:
        paths = paths_of(proc)
        for path in paths:
            site_visit = "A4" in path or proc.type_id == "B"
            trace = replay(cm, proc.type_id, two_process_script(site_visit))
            assert trace == path, (proc.type_id, trace, path)
            traces.add((proc.type_id, tuple(trace)))
    all_paths = {
        (p.type_id, tuple(path)) for p in ps.processes for path in paths_of(p)
    }
    assert traces <= all_paths

    # deployment-scale fixture: every route of every type
    ps = load_scaled()
    cm = attach_conditions(build_linear_cm(ps))
    n = 0
    for proc in ps.processes:
        for path in paths_of(proc):
            script, params = _route_script(ps, proc.type_id, path)
            trace = replay(cm, proc.type_id, script, params)
            assert trace == path, (proc.type_id, trace, path)
            n += 1
    _ok(4, f"trace == path for {n + 3} replays across both fixtures")


def test_criterion_5_deployment_scale_fixture():
    started = time.perf_counter()
    ps = load_scaled()
    assert len(ps.processes) == 13
    assert len(ps.roles) == 6
    assert sum(1 for s in ps.steps if s.startswith("C")) == 15
    cm = attach_conditions(build_linear_cm(ps))
    assert verify_linear_cm(ps, cm).correct
    for proc in ps.processes:
        script = demo.fill_script(ps, proc.type_id)
        trace = replay(
            cm, proc.type_id, script, {f"route_{proc.type_id}": "visit"}
        )
        assert trace in paths_of(proc)
    elapsed = time.perf_counter() - started
    assert elapsed < 10
    _ok(5, f"13-type fixture consolidated, verified and replayed in {elapsed:.2f}s")


DEADLINE_DOC = """
format_version: 1
roles: [clerk]
params: {}
steps:
  - id: a
    completion: {mode: on_deadline, duration: PT1H}
    edit_roles: [clerk]
  - id: b
    fields: [{name: f, value_kind: text, availability: true}]
    edit_roles: [clerk]
processes:
  - {type_id: P, name: P, segments: [{step: a}, {step: b}]}
"""


def test_criterion_6_runtime_invariants(tmp_path):
    cm = attach_conditions(build_linear_cm(load_two_process()))
    store = Store(str(tmp_path))
    store.save_definitions(two_process_text())
    cm_id = store.save_cm(cm)

    violations = 0
    for seed in range(25):
        rng = random.Random(seed)
        proc = rng.choice(["A", "B"])
        script = two_process_script(rng.random() < 0.5)
        inst = create_procedure(cm, proc, clock=T0, cm_id=cm_id)
        store.save_instance(inst)
        clock = T0
        completed = set()
        while inst.current_step_id():
            statuses = [s.status for s in inst.step_states.values()]
            if statuses.count("current") > 1:
                violations += 1  # single-current invariant
            now_done = {
                s for s, st in inst.step_states.items() if st.status == "completed"
            }
            if not completed <= now_done:
                violations += 1  # monotone progress
            completed = now_done
            cur = inst.current_step_id()
            e = script[cur]
            clock += timedelta(minutes=1)
            submit_edit(inst, e["user"], e["role"], cur, e["fields"], clock,
                        expected_version=inst.version)
            store.save_instance(inst)
        archive_procedure(inst, clock + timedelta(minutes=1))
        store.save_instance(inst)
        # event-sourcing check: the audit log alone rebuilds the final state
        rebuilt = replay_audit(cm, store.load_audit(inst.id))
        same = (
            rebuilt.version == inst.version
            and rebuilt.params == inst.params
            and {s: st.status for s, st in rebuilt.step_states.items()}
            == {s: st.status for s, st in inst.step_states.items()}
        )
        if not same:
            violations += 1
    assert violations == 0

    # deadline skipping with the boundary tested at clock == deadline
    dps = parse_process_set(DEADLINE_DOC)
    dcm = attach_conditions(build_linear_cm(dps))
    inst = create_procedure(dcm, "P", clock=T0)
    deadline = inst.step_states["a"].deadline
    expire_deadlines(inst, deadline - timedelta(seconds=1))
    assert inst.current_step_id() == "a"
    expire_deadlines(inst, deadline)
    assert inst.step_states["a"].status == "skipped"
    assert inst.current_step_id() == "b"  # next step becomes ongoing
    _ok(6, "runtime invariants held over 25 audited runs + deadline boundary")


def _random_operand(rng):
    k = rng.randrange(5)
    if k == 0:
        return Name(rng.choice(["a", "b2", "site_visit", "amount"]))
    if k == 1:
        return BoolLit(rng.random() < 0.5)
    if k == 2:
        return NumLit(rng.randrange(100) if rng.random() < 0.5
                      else Decimal(rng.randrange(1000)) / 100)
    if k == 3:
        return StrLit(rng.choice(["x", "hello world", "R-7"]))
    return DateLit(date(2024, rng.randrange(1, 13), rng.randrange(1, 29)))


def _random_expr(rng, depth=0):
    choices = ["cmp", "const", "name", "proc", "elapsed"]
    if depth < 4:
        choices += ["not", "and", "or"] * 2
    k = rng.choice(choices)
    if k == "cmp":
        op = rng.choice(["==", "!=", "<", "<=", ">", ">="])
        return Cmp(op, _random_operand(rng), _random_operand(rng))
    if k == "const":
        return Const(rng.random() < 0.5)
    if k == "name":
        return Name(rng.choice(["flag", "paid"]))
    if k == "proc":
        return ProcTypeIn(
            frozenset(rng.sample(["A", "B", "T01", "T02"], rng.randrange(1, 4)))
        )
    if k == "elapsed":
        return Elapsed(
            timedelta(hours=rng.randrange(1, 50)),
            rng.choice(["start", "C1", "B2"]),
        )
    if k == "not":
        return Not(_random_expr(rng, depth + 1))
    items = tuple(
        _random_expr(rng, depth + 1) for _ in range(rng.randrange(2, 4))
    )
    return And(items) if k == "and" else Or(items)


def test_criterion_7_condition_dsl():
    rng = random.Random(20240101)
    for i in range(1000):
        expr = _random_expr(rng)
        text = print_condition(expr)
        assert parse_condition(text) == expr, (i, text)

    # precedence: or is loosest, then and, then not, then comparisons
    assert parse_condition("a == 1 or b == 2 and not c == 3") == Or(
        (
            Cmp("==", Name("a"), NumLit(1)),
            And(
                (
                    Cmp("==", Name("b"), NumLit(2)),
                    Not(Cmp("==", Name("c"), NumLit(3))),
                )
            ),
        )
    )
    # unset parameter: any comparison over it is false, so both a branch
    # condition and its negation-by-comparison can be false at once
    env = ParamEnv(values={}, declared={"site_visit": "boolean"}, proc_type="A",
                   clock=T0, start_time=T0, timeline={})
    assert eval_condition(parse_condition("site_visit == true"), env) is False
    assert eval_condition(parse_condition("site_visit == false"), env) is False
    assert eval_condition(parse_condition("not site_visit == true"), env) is True
    _ok(7, "1000/1000 AST round-trips; precedence and unset semantics exact")


def test_criterion_8_api_contract(tmp_path):
    data_dir = str(tmp_path / "data")
    os.makedirs(data_dir)
    roles = ["administrator", "accountant", "ac_secretary",
             "scahe_secretary", "clerk", "observer"]
    add_user(data_dir, "root", "pw", roles)
    client = TestClient(create_app(data_dir))
    token = client.post("/login", json={"user": "root", "password": "pw"}).json()[
        "token"
    ]
    hdr = {"Authorization": f"Bearer {token}"}
    client.put("/definitions", json={"text": two_process_text()}, headers=hdr)
    built = client.post("/cm/build", headers=hdr).json()

    # 422 + verdict body on an incorrect CM
    r = client.post("/cm/verify", json={"order": BAD_ORDER_SWAP}, headers=hdr)
    assert r.status_code == 422
    body = r.json()
    assert body["correct"] is False and body["violations"]

    # stale-version edit: 409 and no state change
    iid = client.post(
        "/procedures", json={"proc_type": "B"}, headers=hdr
    ).json()["id"]
    ok = client.post(
        f"/procedures/{iid}/steps/C1",
        json={"role": "scahe_secretary", "version": 1,
              "fields": {"decision_no": "D-1", "site_visit": "true"}},
        headers=hdr,
    )
    assert ok.status_code == 200
    stale = client.post(
        f"/procedures/{iid}/steps/B1",
        json={"role": "clerk", "version": 1, "fields": {"reg_no": "X"}},
        headers=hdr,
    )
    assert stale.status_code == 409
    view = client.get(f"/procedures/{iid}/view?role=clerk", headers=hdr).json()
    assert view["version"] == ok.json()["version"]
    b1 = next(s for s in view["steps"] if s["step_id"] == "B1")
    assert all(f["value"] is None for f in b1["fields"])

    # role-hidden content absent from the view for every role
    aid = client.post(
        "/procedures", json={"proc_type": "A"}, headers=hdr
    ).json()["id"]
    for role in roles:
        vm = client.get(f"/procedures/{aid}/view?role={role}", headers=hdr).json()
        steps = {s["step_id"]: s for s in vm["steps"]}
        if role == "clerk":
            assert steps["A4"]["mode"] == "hidden" and steps["A4"]["fields"] == []
        if role == "accountant":
            assert steps["A3"]["mode"] == "hidden"
        c2 = steps["C2"]
        if c2["mode"] != "edit":
            assert "internal_note" not in [f["name"] for f in c2["fields"]]
    _ok(8, "API verify/stale-version/role-visibility contract holds")
