"""Shared CLI plumbing: PIN sourcing, credential loading, error reporting."""

from __future__ import annotations

import getpass
import os
import sys
from pathlib import Path

from ..crypto import RoleCertificate
from ..keystore import KeystoreError, SoftKeystore
from ..protocol.client import ClientError, PlatformClient
from ..xmlcanon import parse


class CliError(Exception):
    pass


def read_pin(prompt: str = "PIN: ") -> str:
    pin = os.environ.get("SDA_PIN")
    if pin:
        return pin
    return getpass.getpass(prompt)


def load_keystore(path: str) -> SoftKeystore:
    try:
        return SoftKeystore.load(path)
    except (OSError, Exception) as exc:
        raise CliError(f"cannot load keystore {path}: {exc}") from exc


def load_certificate(path: str) -> RoleCertificate:
    try:
        return RoleCertificate.from_element(parse(Path(path).read_bytes()))
    except Exception as exc:
        raise CliError(f"cannot load certificate {path}: {exc}") from exc


def add_connection_args(parser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--platform", metavar="HOST:PORT", help="direct platform port")
    group.add_argument("--gateway", metavar="URL", help="HTTP gateway URL")
    parser.add_argument("--platform-cert", metavar="PATH", help="verify responses against this certificate")
    parser.add_argument("--keystore", required=True, metavar="PATH")


def make_client(args, pin: str | None = None) -> PlatformClient:
    keystore = load_keystore(args.keystore)
    platform_cert = load_certificate(args.platform_cert) if args.platform_cert else None
    return PlatformClient(
        args.platform or args.gateway,
        keystore,
        pin if pin is not None else read_pin(),
        platform_certificate=platform_cert,
    )


def run(main_fn, argv=None) -> int:
    """Execute a CLI body, mapping failures to messages and exit status 1."""
    from ..medreg.client import MedRegClientError
    from ..medreg.records import RecordError

    try:
        return main_fn(argv) or 0
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MedRegClientError, RecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeystoreError as exc:
        print(f"keystore error: {exc.code}", file=sys.stderr)
        return 1
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
