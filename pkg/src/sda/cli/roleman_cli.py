"""`roleman` command: key generation, role installation and revocation."""

from __future__ import annotations

import argparse
import sys

from . import common


def _keygen(args) -> int:
    from ..provision import make_principal, make_principal_issued_by

    pin = common.read_pin("new keystore PIN: ")
    if args.issuer_keystore:
        issuer = common.load_keystore(args.issuer_keystore)
        issuer_pin = common.read_pin("issuer PIN: ")
        _, cert, _ = make_principal_issued_by(
            args.out_dir, args.name, args.subject, args.role, pin, issuer, issuer_pin
        )
    else:
        _, cert, _ = make_principal(args.out_dir, args.name, args.subject, args.role, pin)
    from ..crypto import fingerprint

    print(f"{args.out_dir}/{args.name}.keystore.xml")
    print(f"{args.out_dir}/{args.name}.cert.xml")
    print(f"fingerprint {fingerprint(cert)}")
    return 0


def _install(args) -> int:
    from ..protocol.kinds import CommandKind

    cert = common.load_certificate(args.cert)
    try:
        kinds = {CommandKind(k) for k in args.allow}
    except ValueError as exc:
        raise common.CliError(str(exc)) from exc
    types = None if args.all_types else set(args.doc_type or [])
    if not args.all_types and not types:
        raise common.CliError("give --doc-type at least once, or --all-types")
    client = common.make_client(args)
    client.install_role(cert, kinds, types)
    from ..crypto import fingerprint

    print(f"installed role {cert.role_name} ({fingerprint(cert)[:16]}...)")
    return 0


def _revoke(args) -> int:
    client = common.make_client(args)
    client.revoke_role(args.fingerprint)
    print(f"revoked {args.fingerprint[:16]}...")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roleman", description="role manager")
    sub = parser.add_subparsers(dest="command", required=True)

    keygen = sub.add_parser("keygen", help="create a keypair, certificate and keystore")
    keygen.add_argument("--name", required=True, help="file name stem")
    keygen.add_argument("--subject", required=True)
    keygen.add_argument("--role", required=True)
    keygen.add_argument("--out-dir", required=True)
    keygen.add_argument("--issuer-keystore", metavar="PATH", help="sign with this keystore instead of self-signing")
    keygen.set_defaults(fn=_keygen)

    install = sub.add_parser("install", help="install a role into the role map")
    install.add_argument("--cert", required=True, metavar="PATH")
    install.add_argument("--allow", action="append", required=True, metavar="KIND")
    install.add_argument("--doc-type", action="append", metavar="TYPE")
    install.add_argument("--all-types", action="store_true")
    common.add_connection_args(install)
    install.set_defaults(fn=_install)

    revoke = sub.add_parser("revoke", help="remove a role from the role map")
    revoke.add_argument("--fingerprint", required=True)
    common.add_connection_args(revoke)
    revoke.set_defaults(fn=_revoke)
    return parser


def main(argv=None) -> int:
    def body(argv):
        args = build_parser().parse_args(argv)
        return args.fn(args)

    return common.run(body, argv)


if __name__ == "__main__":
    sys.exit(main())
