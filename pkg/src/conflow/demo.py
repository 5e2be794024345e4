"""Synthetic deployment-scale definitions: many procedure types sharing a
long backbone of common steps, each with a small type-specific tail and an
alternative route chosen at runtime. Used by the shipped fixtures and the
acceptance suite; handy as a template for authoring real definitions."""
from __future__ import annotations

import yaml

ROLES = (
    "administrator",
    "accountant",
    "ac_secretary",
    "scahe_secretary",
    "clerk",
    "observer",
)

_EDIT_ROLES = ("scahe_secretary", "accountant", "ac_secretary", "clerk", "administrator")

_COMMON_TITLES = (
    "Procedure opened",
    "Application registered",
    "Payment received",
    "Commission assigned",
    "Documents checked",
    "Expert group proposed",
    "Expert group approved",
    "Evaluation started",
    "Draft report received",
    "Remarks collected",
    "Final report received",
    "Council session held",
    "Decision registered",
    "Notification sent",
    "Procedure closed",
)


def build_demo_definitions(n_types: int = 13, n_common: int = 15) -> str:
    """YAML definition text: n_types processes over n_common shared steps."""
    view_all = list(ROLES)
    common_ids = [f"C{i + 1:02d}" for i in range(n_common)]
    steps = []
    params: dict = {}
    for i, cid in enumerate(common_ids):
        steps.append(
            {
                "id": cid,
                "title": _COMMON_TITLES[i % len(_COMMON_TITLES)],
                "fields": [
                    {
                        "name": "note",
                        "caption": "Event details",
                        "value_kind": "text",
                        "availability": True,
                    }
                ],
                "edit_roles": [_EDIT_ROLES[i % len(_EDIT_ROLES)]],
                "view_roles": view_all,
            }
        )

    processes = []
    for t in range(1, n_types + 1):
        tid = f"T{t:02d}"
        route_param = f"route_{tid}"
        params[route_param] = {"kind": "enum", "values": ["visit", "desk"]}
        specific = {
            "reg": f"{tid}_intake",
            "visit": f"{tid}_visit",
            "desk": f"{tid}_desk",
        }
        steps.append(
            {
                "id": specific["reg"],
                "title": f"{tid} intake specifics",
                "fields": [
                    {
                        "name": "dossier",
                        "caption": "Dossier reference",
                        "value_kind": "reference",
                        "availability": True,
                    }
                ],
                "edit_roles": ["clerk"],
                "view_roles": view_all,
            }
        )
        for key, title in (("visit", "on-site visit held"), ("desk", "desk check done")):
            steps.append(
                {
                    "id": specific[key],
                    "title": f"{tid} {title}",
                    "fields": [
                        {
                            "name": "summary",
                            "caption": "Summary",
                            "value_kind": "text",
                            "availability": True,
                        }
                    ],
                    "edit_roles": ["clerk" if key == "desk" else "ac_secretary"],
                    "view_roles": view_all,
                }
            )
        mid = len(common_ids) // 2
        segments: list = [{"step": common_ids[0]}, {"step": specific["reg"]}]
        segments += [{"step": cid} for cid in common_ids[1:mid]]
        segments.append(
            {
                "alternatives": [
                    {"steps": [specific["visit"]], "condition": f"{route_param} == visit"},
                    {"steps": [specific["desk"]], "condition": f"{route_param} == desk"},
                ]
            }
        )
        segments += [{"step": cid} for cid in common_ids[mid:]]
        processes.append(
            {"type_id": tid, "name": f"Accreditation type {tid}", "segments": segments}
        )

    doc = {
        "format_version": 1,
        "roles": list(ROLES),
        "params": params,
        "steps": steps,
        "processes": processes,
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def fill_script(ps, proc_type: str) -> dict:
    """A replay script completing every step the given type can reach."""
    script: dict = {}
    for sid, step in ps.steps.items():
        if proc_type not in step.owner_types:
            continue
        fields = {}
        for f in step.mandatory_fields():
            if f.value_kind in ("text", "reference"):
                fields[f.name] = f"auto-{sid}"
            elif f.value_kind == "boolean":
                fields[f.name] = True
            elif f.value_kind == "integer":
                fields[f.name] = 1
            elif f.value_kind in ("decimal", "money"):
                fields[f.name] = "1.0"
            elif f.value_kind == "date":
                fields[f.name] = "2024-01-15"
            elif f.value_kind == "enum":
                fields[f.name] = f.enum_values[0]
        script[sid] = {"fields": fields}
    return script
