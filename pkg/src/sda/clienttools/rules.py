"""Processing rules: build an output e-doc from input e-docs plus answers.

A rules file names the output type and, per output field, where the value
comes from: copied out of an input document, a constant, or prompted from
the operator.  Composition is two-phase so it can be scripted: a dry run
returns the prompts still needed and has no side effects; the commit phase
builds, signs, stores, and flips each input's state attribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..edoc import DocTypeDefinition, EDoc
from ..xmlcanon import Element, XmlError, canonicalize, parse


class RulesError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class CopyRule:
    out_field: str
    input_type: str
    input_field: str


@dataclass(frozen=True)
class ConstRule:
    out_field: str
    value: str


@dataclass(frozen=True)
class PromptRule:
    out_field: str
    label: str


Rule = CopyRule | ConstRule | PromptRule


@dataclass
class ProcessingRules:
    output_type: str
    stylesheet_id: str
    rules: tuple[Rule, ...]
    state_attribute: str = "state"
    processed_value: str = "processed"

    def __post_init__(self):
        targets = [r.out_field for r in self.rules]
        dupes = {t for t in targets if targets.count(t) > 1}
        if dupes:
            raise RulesError("DUPLICATE_TARGET", ", ".join(sorted(dupes)))

    def to_element(self) -> Element:
        children: list[Element] = []
        for r in self.rules:
            if isinstance(r, CopyRule):
                children.append(
                    Element(
                        "copy",
                        attrs={"field": r.out_field, "from-type": r.input_type, "from-field": r.input_field},
                    )
                )
            elif isinstance(r, ConstRule):
                children.append(Element("const", attrs={"field": r.out_field}, text=r.value))
            else:
                children.append(Element("prompt", attrs={"field": r.out_field, "label": r.label}))
        return Element(
            "rules",
            attrs={
                "output": self.output_type,
                "stylesheet": self.stylesheet_id,
                "state-attribute": self.state_attribute,
            },
            children=children,
        )

    @classmethod
    def from_element(cls, el: Element) -> "ProcessingRules":
        if el.name != "rules":
            raise RulesError("MALFORMED", f"expected <rules>, got <{el.name}>")
        rules: list[Rule] = []
        for child in el.children:
            if child.name == "copy":
                rules.append(
                    CopyRule(
                        child.require_attr("field"),
                        child.require_attr("from-type"),
                        child.require_attr("from-field"),
                    )
                )
            elif child.name == "const":
                rules.append(ConstRule(child.require_attr("field"), child.text))
            elif child.name == "prompt":
                rules.append(PromptRule(child.require_attr("field"), child.attr("label")))
            else:
                raise RulesError("MALFORMED", f"unknown rule <{child.name}>")
        return cls(
            output_type=el.require_attr("output"),
            stylesheet_id=el.require_attr("stylesheet"),
            rules=tuple(rules),
            state_attribute=el.attr("state-attribute", "state"),
        )


def load_rules(path: str | Path) -> ProcessingRules:
    try:
        return ProcessingRules.from_element(parse(Path(path).read_bytes()))
    except XmlError as exc:
        raise RulesError("MALFORMED", str(exc)) from exc


def save_rules(rules: ProcessingRules, path: str | Path) -> None:
    Path(path).write_bytes(canonicalize(rules.to_element()))


@dataclass(frozen=True)
class PromptRequest:
    out_field: str
    label: str
    kind: str


@dataclass
class ComposePlan:
    resolved: dict[str, str]
    prompts: list[PromptRequest]


def plan_compose(
    rules: ProcessingRules,
    output_def: DocTypeDefinition,
    input_defs: dict[str, DocTypeDefinition],
    input_docs: list[EDoc],
) -> ComposePlan:
    """Phase one: resolve copy/const rules, list what must still be prompted.

    Pure; no side effects.  Raises on structurally bad rules (unknown output
    fields, copy rules whose source is missing or ambiguous).
    """
    out_fields = output_def.field_map()
    for rule in rules.rules:
        if rule.out_field not in out_fields:
            raise RulesError("UNKNOWN_FIELD", f"output has no field {rule.out_field!r}")

    by_type: dict[str, list[EDoc]] = {}
    for doc in input_docs:
        by_type.setdefault(doc.type_name, []).append(doc)

    resolved: dict[str, str] = {}
    prompted: list[PromptRequest] = []
    for rule in rules.rules:
        if isinstance(rule, ConstRule):
            resolved[rule.out_field] = rule.value
        elif isinstance(rule, CopyRule):
            defn = input_defs.get(rule.input_type)
            if defn is None or rule.input_field not in defn.field_map():
                raise RulesError(
                    "UNKNOWN_FIELD", f"{rule.input_type}.{rule.input_field} is not defined"
                )
            sources = by_type.get(rule.input_type, [])
            if not sources:
                raise RulesError("MISSING_INPUT", f"no input of type {rule.input_type!r}")
            if len(sources) > 1:
                raise RulesError("AMBIGUOUS_INPUT", f"several inputs of type {rule.input_type!r}")
            source = sources[0]
            if rule.input_field not in source.field_values:
                raise RulesError("MISSING_INPUT", f"input lacks field {rule.input_field!r}")
            resolved[rule.out_field] = source.field_values[rule.input_field]
        else:
            prompted.append(
                PromptRequest(rule.out_field, rule.label, out_fields[rule.out_field].kind)
            )

    # required output fields no rule covers are prompted as well
    covered = set(resolved) | {p.out_field for p in prompted}
    for spec in output_def.fields:
        if spec.required and spec.default is None and spec.name not in covered:
            prompted.append(PromptRequest(spec.name, spec.form_label or spec.name, spec.kind))
    return ComposePlan(resolved=resolved, prompts=prompted)


class UnresolvedFieldsError(RulesError):
    def __init__(self, prompts: list[PromptRequest]):
        super().__init__("UNRESOLVED_FIELDS", ", ".join(p.out_field for p in prompts))
        self.prompts = prompts


def apply_answers(plan: ComposePlan, answers: dict[str, str]) -> dict[str, str]:
    """Phase-two value assembly: every prompt must have an answer."""
    unknown = set(answers) - {p.out_field for p in plan.prompts}
    if unknown:
        raise RulesError("UNKNOWN_ANSWER", ", ".join(sorted(unknown)))
    missing = [p for p in plan.prompts if p.out_field not in answers]
    if missing:
        raise UnresolvedFieldsError(missing)
    values = dict(plan.resolved)
    values.update(answers)
    return values
