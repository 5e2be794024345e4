import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conflow.model import (
    DefinitionError,
    InconsistentAnchorOrder,
    common_steps,
    parse_process_set,
    paths_of,
    serialize_process_set,
)

from helpers import load_two_process, random_process_set, two_process_text

MINIMAL = """
format_version: 1
roles: [clerk]
params: {}
steps:
  - id: s1
    title: Only step
processes:
  - type_id: P1
    name: Single
    segments:
      - step: s1
"""


class TestParse:
    def test_minimal_document(self):
        ps = parse_process_set(MINIMAL)
        assert len(ps.processes) == 1
        assert list(ps.steps) == ["s1"]

    def test_dangling_reference_names_the_step(self):
        bad = MINIMAL.replace("- step: s1", "- step: x9")
        with pytest.raises(DefinitionError) as exc:
            parse_process_set(bad)
        assert "x9" in str(exc.value)

    def test_worked_example_counts(self):
        ps = load_two_process()
        assert len(ps.processes) == 2
        assert len(ps.steps) == 9

    def test_syntax_error_carries_line(self):
        with pytest.raises(DefinitionError) as exc:
            parse_process_set("format_version: 1\nsteps: [\n")
        assert exc.value.diagnostics[0].line is not None

    def test_all_errors_collected_not_fail_fast(self):
        bad = """
format_version: 1
roles: [clerk]
params: {}
steps:
  - id: s1
    edit_roles: [ghost_role]
  - id: s1
processes:
  - type_id: P1
    name: P
    segments:
      - step: s1
      - step: nowhere
"""
        with pytest.raises(DefinitionError) as exc:
            parse_process_set(bad)
        text = str(exc.value)
        assert "ghost_role" in text
        assert "duplicate step id" in text
        assert "nowhere" in text

    def test_unknown_parameter_in_output(self):
        bad = MINIMAL.replace(
            "title: Only step",
            "title: Only step\n    outputs:\n      - param: ghost\n        value: 1",
        )
        with pytest.raises(DefinitionError) as exc:
            parse_process_set(bad)
        assert "ghost" in str(exc.value)

    def test_duplicate_step_within_process(self):
        bad = MINIMAL.replace("- step: s1", "- step: s1\n      - step: s1")
        with pytest.raises(DefinitionError) as exc:
            parse_process_set(bad)
        assert "more than once" in str(exc.value)

    def test_unused_catalog_step_is_warning_not_error(self):
        doc = MINIMAL.replace("- id: s1", "- id: s0\n    title: Unused\n  - id: s1")
        ps = parse_process_set(doc)
        assert any("s0" in str(w) for w in ps.warnings)

    def test_owner_types_derived_from_membership(self):
        ps = load_two_process()
        assert ps.steps["C1"].owner_types == {"A", "B"}
        assert ps.steps["A4"].owner_types == {"A"}

    def test_condition_type_error_reported(self):
        bad = MINIMAL.replace(
            "title: Only step", 'title: Only step\n    condition: "ghost == 1"'
        )
        with pytest.raises(DefinitionError) as exc:
            parse_process_set(bad)
        assert "ghost" in str(exc.value)


class TestCommonSteps:
    def test_worked_example_anchors(self):
        assert common_steps(load_two_process()) == ["C1", "C2", "C3"]

    def test_disjoint_processes_share_nothing(self):
        rng = random.Random(1)
        ps = random_process_set(rng, max_procs=2, allow_alternatives=False)
        # force disjointness by rebuilding with zero anchors
        while common_steps(ps):
            ps = random_process_set(rng, max_procs=2, allow_alternatives=False)
        assert common_steps(ps) == []

    def test_inconsistent_order_detected(self):
        doc = """
format_version: 1
roles: []
params: {}
steps:
  - {id: x}
  - {id: y}
processes:
  - type_id: P1
    name: P1
    segments: [{step: x}, {step: y}]
  - type_id: P2
    name: P2
    segments: [{step: y}, {step: x}]
"""
        ps = parse_process_set(doc)
        with pytest.raises(InconsistentAnchorOrder) as exc:
            common_steps(ps)
        assert {exc.value.step_a, exc.value.step_b} == {"x", "y"}
        assert {exc.value.proc_p, exc.value.proc_q} == {"P1", "P2"}

    def test_restriction_property_on_worked_example(self):
        ps = load_two_process()
        order = common_steps(ps)
        for p in ps.processes:
            mine = [s for s in order if p.type_id in ps.steps[s].owner_types]
            # anchors restricted to this process keep their relative order
            seen = [s for s in order if s in set(mine)]
            assert seen == mine


class TestPaths:
    def test_no_alternatives_single_path(self):
        ps = parse_process_set(MINIMAL)
        assert paths_of(ps.processes[0]) == [["s1"]]

    def test_worked_example_paths(self):
        ps = load_two_process()
        assert paths_of(ps.process("A")) == [
            ["C1", "C2", "A4", "A5", "C3"],
            ["C1", "A3", "C3"],
        ]

    def test_two_alternative_segments_multiply(self):
        doc = """
format_version: 1
roles: []
params: {}
steps:
  - {id: a1}
  - {id: a2}
  - {id: b1}
  - {id: b2}
processes:
  - type_id: P1
    name: P1
    segments:
      - alternatives:
          - {steps: [a1]}
          - {steps: [a2]}
      - alternatives:
          - {steps: [b1]}
          - {steps: [b2]}
"""
        ps = parse_process_set(doc)
        assert len(paths_of(ps.processes[0])) == 4

    def test_path_count_formula_random(self):
        rng = random.Random(7)
        for _ in range(50):
            ps = random_process_set(rng)
            for p in ps.processes:
                expected = 1
                for seg in p.segments:
                    if seg.kind == "alternatives":
                        expected *= len(seg.branches)
                assert len(paths_of(p)) == expected


class TestRoundTrip:
    def test_worked_example_roundtrip(self):
        ps = load_two_process()
        again = parse_process_set(serialize_process_set(ps))
        assert again.processes == ps.processes
        assert again.steps == ps.steps
        assert again.roles == ps.roles
        assert again.params == ps.params

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_random_sets_roundtrip(self, seed):
        ps = random_process_set(random.Random(seed))
        again = parse_process_set(serialize_process_set(ps))
        assert again.processes == ps.processes
        assert set(again.steps) == set(ps.steps)
