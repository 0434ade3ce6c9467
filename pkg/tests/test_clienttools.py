from __future__ import annotations

import pytest

from sda.crypto import fingerprint
from sda.edoc import DocTypeDefinition, FieldSpec, Stylesheet, create_doc, render, verify_doc
from sda.clienttools.rules import (
    ConstRule,
    CopyRule,
    ProcessingRules,
    PromptRule,
    RulesError,
    UnresolvedFieldsError,
    apply_answers,
    load_rules,
    plan_compose,
    save_rules,
)
from sda.clienttools.scendesk import ComposeAborted, compose, dry_run
from sda.clienttools.wysiwys import WysiwysError, confirmation_code, review_and_sign
from sda.provision import medical_report_definition, medical_report_stylesheets
from tests.conftest import NOW, ROSSI_VALUES
from tests.helpers import DEFINER_KINDS, PHYSICIAN_KINDS, PIN, Desk


def discharge_definition() -> DocTypeDefinition:
    return DocTypeDefinition(
        "discharge-summary",
        1,
        (
            FieldSpec("name", "string"),
            FieldSpec("surname", "string"),
            FieldSpec("clinic", "string"),
            FieldSpec("summary", "string", form_label="Summary"),
        ),
    )


def discharge_stylesheet() -> Stylesheet:
    return Stylesheet(
        "discharge-en",
        "discharge-summary",
        "en",
        "DISCHARGE {field:surname} {field:name} ({field:clinic})\n{field:summary}\n",
    )


DISCHARGE_RULES = ProcessingRules(
    output_type="discharge-summary",
    stylesheet_id="discharge-en",
    rules=(
        CopyRule("name", "medical-report", "name"),
        CopyRule("surname", "medical-report", "surname"),
        ConstRule("clinic", "Angiology"),
        PromptRule("summary", "Summary"),
    ),
)


# -- pure rules engine ---------------------------------------------------------

def test_rules_file_round_trip(tmp_path):
    path = tmp_path / "rules.xml"
    save_rules(DISCHARGE_RULES, path)
    assert load_rules(path) == DISCHARGE_RULES


def test_duplicate_target_rejected():
    with pytest.raises(RulesError) as err:
        ProcessingRules(
            "discharge-summary", "s",
            rules=(ConstRule("clinic", "a"), ConstRule("clinic", "b")),
        )
    assert err.value.code == "DUPLICATE_TARGET"


def _mr_doc(values=None):
    return create_doc(medical_report_definition(), values or ROSSI_VALUES, now=NOW)


def test_plan_resolves_and_prompts():
    plan = plan_compose(
        DISCHARGE_RULES,
        discharge_definition(),
        {"medical-report": medical_report_definition()},
        [_mr_doc()],
    )
    assert plan.resolved == {"name": "Anna", "surname": "Rossi", "clinic": "Angiology"}
    assert [p.out_field for p in plan.prompts] == ["summary"]
    assert plan.prompts[0].kind == "string"


def test_prompt_set_is_exactly_uncovered_required_fields():
    # drop the declared prompt: 'summary' is still required, so it must be
    # prompted anyway; covered fields must not be prompted
    rules = ProcessingRules(
        "discharge-summary", "discharge-en",
        rules=(
            CopyRule("name", "medical-report", "name"),
            CopyRule("surname", "medical-report", "surname"),
            ConstRule("clinic", "Angiology"),
        ),
    )
    plan = plan_compose(
        rules, discharge_definition(),
        {"medical-report": medical_report_definition()}, [_mr_doc()],
    )
    assert {p.out_field for p in plan.prompts} == {"summary"}


def test_missing_answer_reports_unresolved():
    plan = plan_compose(
        DISCHARGE_RULES, discharge_definition(),
        {"medical-report": medical_report_definition()}, [_mr_doc()],
    )
    with pytest.raises(UnresolvedFieldsError) as err:
        apply_answers(plan, {})
    assert [p.out_field for p in err.value.prompts] == ["summary"]


def test_copy_rule_unknown_field_rejected():
    rules = ProcessingRules(
        "discharge-summary", "s",
        rules=(CopyRule("name", "medical-report", "nickname"),),
    )
    with pytest.raises(RulesError) as err:
        plan_compose(
            rules, discharge_definition(),
            {"medical-report": medical_report_definition()}, [_mr_doc()],
        )
    assert err.value.code == "UNKNOWN_FIELD"


def test_ambiguous_input_rejected():
    with pytest.raises(RulesError) as err:
        plan_compose(
            DISCHARGE_RULES, discharge_definition(),
            {"medical-report": medical_report_definition()},
            [_mr_doc(), _mr_doc(dict(ROSSI_VALUES, name="Bruno"))],
        )
    assert err.value.code == "AMBIGUOUS_INPUT"


# -- wysiwys ----------------------------------------------------------------------

def test_review_and_sign_binds_displayed_text(signer_factory, emr_stylesheets):
    cert, store = signer_factory()
    doc = _mr_doc()
    view = render(doc, emr_stylesheets["medical-report-it"])
    shown: list[str] = []
    signed = review_and_sign(
        doc, view, store, PIN, assume_yes=True, display=shown.append, signed_at=NOW
    )
    block = signed.signatures[0]
    assert block.view_stylesheet_id == "medical-report-it"
    assert block.view_digest == view.view_digest
    assert view.text in shown
    report = verify_doc(signed, {fingerprint(cert): cert}, emr_stylesheets)
    assert report.all_valid


def test_abort_leaves_keystore_untouched(signer_factory, emr_stylesheets):
    _, store = signer_factory()
    doc = _mr_doc()
    view = render(doc, emr_stylesheets["medical-report-en"])
    with pytest.raises(WysiwysError) as err:
        review_and_sign(doc, view, store, PIN, prompt=lambda _: "", display=lambda _: None)
    assert err.value.code == "USER_ABORT"
    assert doc.signatures == []
    assert store.failure_counter == 0


def test_interactive_confirmation_code(signer_factory, emr_stylesheets):
    _, store = signer_factory()
    doc = _mr_doc()
    view = render(doc, emr_stylesheets["medical-report-en"])
    signed = review_and_sign(
        doc, view, store, PIN,
        prompt=lambda _: confirmation_code(view).upper(),
        display=lambda _: None,
        signed_at=NOW,
    )
    assert len(signed.signatures) == 1


def test_every_field_edit_breaks_view_binding(signer_factory, emr_stylesheets):
    cert, store = signer_factory()
    sheet = emr_stylesheets["medical-report-en"]
    certs = {fingerprint(cert): cert}
    for field_name in ROSSI_VALUES:
        doc = _mr_doc()
        view = render(doc, sheet)
        signed = review_and_sign(
            doc, view, store, PIN, assume_yes=True, display=lambda _: None, signed_at=NOW
        )
        assert verify_doc(signed, certs, emr_stylesheets).all_valid
        signed.field_values[field_name] = signed.field_values[field_name] + "X"
        report = verify_doc(signed, certs, emr_stylesheets)
        assert not report.all_valid
        assert report.view_binding_checks[0].reason == "VIEW_DIGEST_MISMATCH"


# -- scendesk against a live platform ------------------------------------------------

@pytest.fixture
def compose_desk(tmp_path):
    desk = Desk(tmp_path)
    definer = desk.new_principal("definer", "definer")
    desk.install_role(definer, DEFINER_KINDS, None)
    dc = desk.client_for(definer)
    dc.install_definition(medical_report_definition())
    for sheet in medical_report_stylesheets():
        dc.install_stylesheet(sheet)
    dc.install_definition(discharge_definition())
    dc.install_stylesheet(discharge_stylesheet())

    from sda.protocol.kinds import CommandKind

    referent = desk.new_principal("referent", "referent")
    desk.install_role(
        referent,
        PHYSICIAN_KINDS | {CommandKind.SET_ATTRIBUTE, CommandKind.GET_ATTRIBUTE, CommandKind.LIST_TYPES},
        None,
    )
    physician = desk.new_principal("phys", "physician")
    desk.install_role(physician, PHYSICIAN_KINDS, {"medical-report"})
    yield desk, referent, physician
    desk.stop()


def _store_mr(desk, physician, values=None):
    doc = _mr_doc(values)
    doc.attributes["state"] = "pending"
    block = physician.keystore.sign_bytes(PIN, doc.content_bytes(), signed_at=NOW)
    doc.signatures.append(block)
    return desk.client_for(physician).store_doc(doc)


def test_compose_stores_output_and_marks_input(compose_desk):
    desk, referent, physician = compose_desk
    input_id = _store_mr(desk, physician)
    client = desk.client_for(referent)
    result = compose(
        client, DISCHARGE_RULES, [input_id], {"summary": "Recovered well."},
        referent.keystore, PIN, assume_yes=True, display=lambda _: None,
    )
    assert result.inputs_marked == [input_id]
    stored = client.get_doc(result.doc_id)
    assert stored.field_values == {
        "name": "Anna", "surname": "Rossi", "clinic": "Angiology", "summary": "Recovered well.",
    }
    assert client.get_attribute(input_id, "state") == "processed"
    assert client.verify_doc(result.doc_id).attr("all-valid") == "true"


def test_dry_run_reports_prompts_without_side_effects(compose_desk):
    desk, referent, physician = compose_desk
    input_id = _store_mr(desk, physician)
    client = desk.client_for(referent)
    prompts = dry_run(client, DISCHARGE_RULES, [input_id])
    assert [p.out_field for p in prompts] == ["summary"]
    assert client.get_attribute(input_id, "state") == "pending"
    assert client.search_docs("discharge-summary") == []


def test_two_inputs_merge_disjoint_copies(compose_desk):
    desk, referent, physician = compose_desk
    lab_def = DocTypeDefinition("lab-order", 1, (FieldSpec("panel", "string"),))
    mr_id = _store_mr(desk, physician)
    dc = desk.client_for(referent)
    # install lab-order through an authorized definer
    definer = desk.new_principal("definer3", "definer")
    desk.install_role(definer, DEFINER_KINDS, None)
    desk.client_for(definer).install_definition(lab_def)

    lab_doc = create_doc(lab_def, {"panel": "Coagulation"}, now=NOW)
    lab_doc.signatures.append(referent.keystore.sign_bytes(PIN, lab_doc.content_bytes(), signed_at=NOW))
    lab_id = dc.store_doc(lab_doc)

    merged_def = DocTypeDefinition(
        "visit-digest", 1,
        (FieldSpec("surname", "string"), FieldSpec("panel", "string")),
    )
    desk.client_for(definer).install_definition(merged_def)
    desk.client_for(definer).install_stylesheet(
        Stylesheet("digest-en", "visit-digest", "en", "{field:surname}: {field:panel}")
    )
    rules = ProcessingRules(
        "visit-digest", "digest-en",
        rules=(
            CopyRule("surname", "medical-report", "surname"),
            CopyRule("panel", "lab-order", "panel"),
        ),
    )
    result = compose(
        dc, rules, [mr_id, lab_id], {}, referent.keystore, PIN,
        assume_yes=True, display=lambda _: None,
    )
    # oracle: apply the two copy rules by hand
    mr = dc.get_doc(mr_id)
    lab = dc.get_doc(lab_id)
    assert dc.get_doc(result.doc_id).field_values == {
        "surname": mr.field_values["surname"],
        "panel": lab.field_values["panel"],
    }


def test_compose_determinism(compose_desk):
    desk, referent, physician = compose_desk
    input_id = _store_mr(desk, physician)
    client = desk.client_for(referent)
    answers = {"summary": "same text"}
    r1 = compose(client, DISCHARGE_RULES, [input_id], answers, referent.keystore, PIN,
                 assume_yes=True, display=lambda _: None)
    r2 = compose(client, DISCHARGE_RULES, [input_id], answers, referent.keystore, PIN,
                 assume_yes=True, display=lambda _: None)
    assert r1.output_doc.content_bytes() == r2.output_doc.content_bytes()


def test_compose_partial_progress_reported(compose_desk):
    desk, referent, physician = compose_desk
    input_id = _store_mr(desk, physician)
    # revoke SET_ATTRIBUTE so the final marking step fails
    from sda.protocol.kinds import CommandKind

    desk.install_role(referent, PHYSICIAN_KINDS | {CommandKind.LIST_TYPES}, None)
    client = desk.client_for(referent)
    with pytest.raises(ComposeAborted) as err:
        compose(client, DISCHARGE_RULES, [input_id], {"summary": "s"},
                referent.keystore, PIN, assume_yes=True, display=lambda _: None)
    assert err.value.stored_doc_id  # the output made it in
    assert err.value.inputs_marked == []
