"""Project file loading and validation errors."""

from __future__ import annotations

import pytest

from vobs.project import LoadError, load_project


def rewrite(path, old, new):
    text = path.read_text()
    assert old in text, f"fixture drift: {old!r}"
    path.write_text(text.replace(old, new))


class TestLoadCorpus:
    def test_lighting_counts(self, corpus):
        project = load_project(corpus / "lighting")
        assert project.name == "lighting"
        assert len(project.machines) == 5
        assert len(project.lattice.edges) == 4
        assert len(project.vos) == 12
        assert sum(1 for v in project.vos if v.kind == "manual") == 2

    def test_generated_instance(self, corpus):
        project = load_project(corpus / "lighting")
        light3 = project.machines["Light3"]
        assert not light3.consts
        assert project.machine_files["Light3"] is None
        assert project.machine_files["Light0"] is not None

    def test_basic_counts(self, corpus):
        project = load_project(corpus / "basic")
        assert len(project.machines) == 2
        assert len(project.lattice.edges) == 0
        assert len(project.vos) == 3

    def test_accepts_project_file_path(self, corpus):
        project = load_project(corpus / "lighting" / "project.vobs")
        assert project.name == "lighting"


class TestLoadErrors:
    def test_missing_project(self, tmp_path):
        with pytest.raises(LoadError, match="no such project"):
            load_project(tmp_path)

    def test_missing_machine_file(self, copy_corpus):
        root = copy_corpus("lighting")
        (root / "Light0.vob").unlink()
        with pytest.raises(LoadError, match="Light0.vob"):
            load_project(root)

    def test_vo_with_bad_formula_names_vo(self, copy_corpus):
        root = copy_corpus("lighting")
        rewrite(root / "project.vobs",
                'formula = "G {on = false or on = true}"',
                'formula = "G {on = false or"')
        with pytest.raises(LoadError, match="ltl_light0_sane"):
            load_project(root)

    def test_vo_formula_must_typecheck(self, copy_corpus):
        root = copy_corpus("lighting")
        rewrite(root / "project.vobs",
                'formula = "G {on = false or on = true}"',
                'formula = "G {level = 1}"')
        with pytest.raises(LoadError, match="ltl_light0_sane"):
            load_project(root)

    def test_header_project_mismatch(self, copy_corpus):
        root = copy_corpus("lighting")
        rewrite(root / "LightTimer.vob", "refines Light3", "refines Light0")
        with pytest.raises(LoadError, match="refines Light0"):
            load_project(root)

    def test_machine_name_mismatch(self, copy_corpus):
        root = copy_corpus("basic")
        rewrite(root / "Switch.vob", "machine Switch", "machine Toggle")
        with pytest.raises(LoadError, match="declares machine Toggle"):
            load_project(root)

    def test_instantiates_header_in_file_rejected(self, copy_corpus):
        root = copy_corpus("basic")
        rewrite(root / "Switch.vob", "machine Switch",
                "machine Switch instantiates Counter with MAX = 1")
        with pytest.raises(LoadError, match="declared in the project file"):
            load_project(root)

    def test_explicit_instantiates_edge_rejected(self, copy_corpus):
        root = copy_corpus("lighting")
        rewrite(root / "project.vobs",
                '[[edge]]\nfrom = "Light3"\nto = "Light0"\nkind = "refines"',
                '[[edge]]\nfrom = "Light3"\nto = "Light0"\nkind = "instantiates"')
        with pytest.raises(LoadError, match="generated from model entries"):
            load_project(root)

    def test_duplicate_model(self, copy_corpus):
        root = copy_corpus("basic")
        rewrite(root / "project.vobs",
                '[[model]]\nname = "Counter"',
                '[[model]]\nname = "Switch"')
        with pytest.raises(LoadError, match="duplicate model"):
            load_project(root)

    def test_duplicate_vo_id(self, copy_corpus):
        root = copy_corpus("basic")
        rewrite(root / "project.vobs", 'id = "dead_counter"', 'id = "ltl_switch_sane"')
        with pytest.raises(LoadError, match="duplicate id"):
            load_project(root)

    def test_trace_for_wrong_machine(self, copy_corpus):
        root = copy_corpus("basic")
        rewrite(root / "switch_smoke.trace", "trace for Switch", "trace for Counter")
        with pytest.raises(LoadError, match="trace is for Counter"):
            load_project(root)

    def test_missing_trace_file(self, copy_corpus):
        root = copy_corpus("basic")
        (root / "switch_smoke.trace").unlink()
        with pytest.raises(LoadError, match="not found"):
            load_project(root)

    def test_unknown_vo_target(self, copy_corpus):
        root = copy_corpus("basic")
        rewrite(root / "project.vobs", 'target = "Counter"', 'target = "Ghost"')
        with pytest.raises(LoadError, match="unknown target"):
            load_project(root)

    def test_unknown_edge_in_vo(self, copy_corpus):
        root = copy_corpus("lighting")
        rewrite(root / "project.vobs",
                'edge = { from = "Light3", to = "Light0" }\nrequirement_tag = "REQ-REFINE"',
                'edge = { from = "Light3", to = "LightTimer" }\nrequirement_tag = "REQ-REFINE"')
        with pytest.raises(LoadError, match="no edge"):
            load_project(root)

    def test_bad_binding_type(self, copy_corpus):
        root = copy_corpus("lighting")
        rewrite(root / "project.vobs", "with = { MAX = 3 }", "with = { MAX = true }")
        with pytest.raises(LoadError, match="MAX"):
            load_project(root)

    def test_empty_manual_description(self, copy_corpus):
        root = copy_corpus("lighting")
        rewrite(root / "project.vobs",
                'description = "Power stakeholder signs off that the high/low load abstraction captures the budget concern."',
                'description = "  "')
        with pytest.raises(LoadError, match="empty description"):
            load_project(root)
