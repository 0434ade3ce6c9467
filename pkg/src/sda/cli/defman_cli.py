"""`defman` command: install document type definitions and stylesheets."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import common


def _install(args) -> int:
    from ..edoc import DocTypeDefinition, Stylesheet
    from ..xmlcanon import parse

    try:
        defn = DocTypeDefinition.from_element(parse(Path(args.schema).read_bytes()))
    except Exception as exc:
        raise common.CliError(f"bad schema file {args.schema}: {exc}") from exc

    sheets = []
    known = set(defn.field_map())
    for path in args.stylesheet or []:
        try:
            sheet = Stylesheet.from_element(parse(Path(path).read_bytes()))
        except Exception as exc:
            raise common.CliError(f"bad stylesheet file {path}: {exc}") from exc
        if sheet.type_name != defn.type_name:
            raise common.CliError(f"{path}: stylesheet is for {sheet.type_name!r}")
        unknown = [p for p in sheet.placeholders() if p not in known]
        if unknown:
            raise common.CliError(f"{path}: unknown fields {', '.join(unknown)}")
        sheets.append(sheet)

    client = common.make_client(args)
    client.install_definition(defn)
    print(f"installed definition {defn.type_name} v{defn.version}")
    for sheet in sheets:
        client.install_stylesheet(sheet)
        print(f"installed stylesheet {sheet.stylesheet_id}")
    return 0


def main(argv=None) -> int:
    def body(argv):
        parser = argparse.ArgumentParser(prog="defman", description="definitions manager")
        sub = parser.add_subparsers(dest="command", required=True)
        install = sub.add_parser("install", help="install a definition plus its stylesheets")
        install.add_argument("--schema", required=True, metavar="PATH")
        install.add_argument("--stylesheet", action="append", metavar="PATH")
        common.add_connection_args(install)
        args = parser.parse_args(argv)
        return _install(args)

    return common.run(body, argv)


if __name__ == "__main__":
    sys.exit(main())
