"""Workflow desk: compose output e-docs from stored inputs, sign, store,
and flip the inputs' state attribute.

Phase one (dry run) is pure and reports the prompts still unanswered; phase
two commits and is all-or-nothing up to the first platform error, with
partial progress reported when one occurs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..edoc import EDoc
from ..protocol.client import ClientError, PlatformClient
from .rules import (
    ComposePlan,
    ProcessingRules,
    PromptRequest,
    RulesError,
    apply_answers,
    plan_compose,
)
from .wysiwys import review_and_sign
from ..keystore import SoftKeystore


@dataclass
class ComposeResult:
    doc_id: str
    output_doc: EDoc
    inputs_marked: list[str] = field(default_factory=list)


class ComposeAborted(Exception):
    """A platform error interrupted phase two; carries partial progress."""

    def __init__(self, cause: Exception, stored_doc_id: str = "", inputs_marked: list[str] | None = None):
        super().__init__(f"compose aborted: {cause}")
        self.cause = cause
        self.stored_doc_id = stored_doc_id
        self.inputs_marked = inputs_marked or []


def _definition_index(client: PlatformClient) -> dict[tuple[str, int], object]:
    return {(d.type_name, d.version): d for d in client.list_types()}


def prepare(
    client: PlatformClient, rules: ProcessingRules, input_ids: list[str]
) -> tuple[ComposePlan, list[EDoc]]:
    """Fetch inputs and definitions, then plan. No side effects."""
    defs = _definition_index(client)
    latest: dict[str, object] = {}
    for (name, version), defn in sorted(defs.items()):
        latest[name] = defn
    output_def = latest.get(rules.output_type)
    if output_def is None:
        raise RulesError("UNKNOWN_TYPE", rules.output_type)
    input_docs = [client.get_doc(i) for i in input_ids]
    input_defs = {}
    for doc in input_docs:
        defn = defs.get((doc.type_name, doc.type_version))
        if defn is None:
            raise RulesError("UNKNOWN_TYPE", f"{doc.type_name} v{doc.type_version}")
        input_defs[doc.type_name] = defn
    return plan_compose(rules, output_def, input_defs, input_docs), input_docs


def compose(
    client: PlatformClient,
    rules: ProcessingRules,
    input_ids: list[str],
    answers: dict[str, str],
    keystore: SoftKeystore,
    pin: str,
    *,
    assume_yes: bool = False,
    prompt=input,
    display=print,
) -> ComposeResult:
    plan, _ = prepare(client, rules, input_ids)
    values = apply_answers(plan, answers)

    marked: list[str] = []
    doc_id = ""
    try:
        doc = client.create_doc(rules.output_type, values)
        view = client.render_doc(rules.stylesheet_id, doc=doc)
        signed = review_and_sign(
            doc, view, keystore, pin, assume_yes=assume_yes, prompt=prompt, display=display
        )
        doc_id = client.store_doc(signed)
        for input_id in input_ids:
            client.set_attribute(input_id, rules.state_attribute, rules.processed_value)
            marked.append(input_id)
    except ClientError as exc:
        raise ComposeAborted(exc, stored_doc_id=doc_id, inputs_marked=marked) from exc
    return ComposeResult(doc_id=doc_id, output_doc=signed, inputs_marked=marked)


def dry_run(
    client: PlatformClient, rules: ProcessingRules, input_ids: list[str]
) -> list[PromptRequest]:
    plan, _ = prepare(client, rules, input_ids)
    return plan.prompts
