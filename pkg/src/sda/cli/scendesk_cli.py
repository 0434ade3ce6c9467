"""`scendesk` command: compose output e-docs from stored inputs."""

from __future__ import annotations

import argparse
import sys

from . import common


def _compose(args) -> int:
    from ..clienttools.rules import RulesError, UnresolvedFieldsError, load_rules
    from ..clienttools.scendesk import ComposeAborted, compose, dry_run

    try:
        rules = load_rules(args.rules)
    except RulesError as exc:
        raise common.CliError(f"bad rules file: {exc}") from exc
    input_ids = [i for i in args.inputs.split(",") if i]
    answers = {}
    for pair in args.answer or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise common.CliError(f"--answer needs field=value, got {pair!r}")
        answers[key] = value

    pin = common.read_pin()
    client = common.make_client(args, pin)

    if args.dry_run:
        prompts = dry_run(client, rules, input_ids)
        if not prompts:
            print("all fields resolved; ready to compose")
        for p in prompts:
            print(f"prompt {p.out_field} ({p.kind}): {p.label}")
        return 0

    try:
        result = compose(
            client, rules, input_ids, answers, client.keystore, pin, assume_yes=args.yes
        )
    except UnresolvedFieldsError as exc:
        print("unresolved fields:", file=sys.stderr)
        for p in exc.prompts:
            print(f"  {p.out_field} ({p.kind}): {p.label}", file=sys.stderr)
        return 1
    except RulesError as exc:
        raise common.CliError(str(exc)) from exc
    except ComposeAborted as exc:
        print(f"aborted: {exc.cause}", file=sys.stderr)
        if exc.stored_doc_id:
            print(f"output already stored as {exc.stored_doc_id}", file=sys.stderr)
        for marked in exc.inputs_marked:
            print(f"input {marked} already marked", file=sys.stderr)
        return 1
    print(f"stored {result.doc_id}")
    for input_id in result.inputs_marked:
        print(f"input {input_id} -> {rules.state_attribute}={rules.processed_value}")
    return 0


def main(argv=None) -> int:
    def body(argv):
        parser = argparse.ArgumentParser(prog="scendesk", description="workflow desk")
        sub = parser.add_subparsers(dest="command", required=True)
        comp = sub.add_parser("compose")
        comp.add_argument("--rules", required=True, metavar="PATH")
        comp.add_argument("--inputs", required=True, metavar="ID[,ID...]")
        comp.add_argument("--answer", action="append", metavar="FIELD=VALUE")
        comp.add_argument("--dry-run", action="store_true")
        comp.add_argument("--yes", action="store_true")
        common.add_connection_args(comp)
        args = parser.parse_args(argv)
        return _compose(args)

    return common.run(body, argv)


if __name__ == "__main__":
    sys.exit(main())
