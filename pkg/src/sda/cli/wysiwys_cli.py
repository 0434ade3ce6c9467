"""`wysiwys` command: view, sign and verify e-docs against the platform.

Signing always displays the platform's rendering of the exact document being
signed; confirmation is a typed code from the displayed text unless --yes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import common


def _load_doc(path: str):
    from ..edoc import parse_doc

    try:
        return parse_doc(Path(path).read_bytes())
    except Exception as exc:
        raise common.CliError(f"cannot read document {path}: {exc}") from exc


def _view(args) -> int:
    client = common.make_client(args)
    if args.in_file:
        view = client.render_doc(args.stylesheet, doc=_load_doc(args.in_file))
    else:
        view = client.render_doc(args.stylesheet, args.doc_id)
    print(view.text)
    print(f"view digest: {view.view_digest}")
    return 0


def _sign(args) -> int:
    from ..clienttools.wysiwys import WysiwysError, review_and_sign
    from ..edoc import serialize_doc

    doc = _load_doc(args.in_file)
    pin = common.read_pin()
    client = common.make_client(args, pin)
    view = client.render_doc(args.stylesheet, doc=doc)  # a render error stops everything
    try:
        signed = review_and_sign(doc, view, client.keystore, pin, assume_yes=args.yes)
    except WysiwysError as exc:
        print(f"aborted: {exc.code}", file=sys.stderr)
        return 1
    Path(args.out).write_bytes(serialize_doc(signed))
    print(f"signed -> {args.out}")
    return 0


def _verify(args) -> int:
    client = common.make_client(args)
    if args.in_file:
        report = client.verify_doc(doc=_load_doc(args.in_file))
    else:
        report = client.verify_doc(args.doc_id)
    all_valid = report.attr("all-valid") == "true"
    for check in report.children_named("signature-check"):
        print(
            f"signature {check.attr('index')} by {check.attr('signer')[:16]}...: "
            f"{'valid' if check.attr('valid') == 'true' else 'INVALID ' + check.attr('reason')}"
        )
    for check in report.children_named("view-check"):
        print(
            f"view binding {check.attr('index')} ({check.attr('stylesheet')}): "
            f"{'ok' if check.attr('ok') == 'true' else 'MISMATCH ' + check.attr('reason')}"
        )
    print("all-valid" if all_valid else "NOT VALID")
    return 0 if all_valid else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wysiwys", description="view, sign, verify")
    sub = parser.add_subparsers(dest="command", required=True)

    view = sub.add_parser("view")
    view.add_argument("--doc-id", default="")
    view.add_argument("--in", dest="in_file", metavar="PATH")
    view.add_argument("--stylesheet", required=True)
    common.add_connection_args(view)
    view.set_defaults(fn=_view)

    sign = sub.add_parser("sign")
    sign.add_argument("--in", dest="in_file", required=True, metavar="PATH")
    sign.add_argument("--out", required=True, metavar="PATH")
    sign.add_argument("--stylesheet", required=True)
    sign.add_argument("--yes", action="store_true", help="non-interactive confirmation")
    common.add_connection_args(sign)
    sign.set_defaults(fn=_sign)

    verify = sub.add_parser("verify")
    verify.add_argument("--doc-id", default="")
    verify.add_argument("--in", dest="in_file", metavar="PATH")
    common.add_connection_args(verify)
    verify.set_defaults(fn=_verify)
    return parser


def main(argv=None) -> int:
    def body(argv):
        args = build_parser().parse_args(argv)
        return args.fn(args)

    return common.run(body, argv)


if __name__ == "__main__":
    sys.exit(main())
