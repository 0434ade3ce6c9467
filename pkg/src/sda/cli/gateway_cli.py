"""`gateway` command: HTTP tunnel in front of a platform port."""

from __future__ import annotations

import argparse
import signal
import sys
import threading

from . import common


def _split(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise common.CliError(f"bad address {address!r}")
    return host, int(port)


def main(argv=None) -> int:
    def body(argv):
        parser = argparse.ArgumentParser(prog="gateway", description="HTTP tunnel to a platform port")
        sub = parser.add_subparsers(dest="command", required=True)
        serve = sub.add_parser("serve")
        serve.add_argument("--listen", required=True, metavar="HOST:PORT")
        serve.add_argument("--upstream", required=True, metavar="HOST:PORT")
        args = parser.parse_args(argv)

        from ..protocol.gateway import GatewayServer

        gateway = GatewayServer(_split(args.listen), _split(args.upstream))
        gateway.start()
        print(f"gateway {gateway.url} -> {args.upstream}", flush=True)
        stop = threading.Event()
        signal.signal(signal.SIGTERM, lambda *_: stop.set())
        signal.signal(signal.SIGINT, lambda *_: stop.set())
        stop.wait()
        gateway.stop()
        return 0

    return common.run(body, argv)


if __name__ == "__main__":
    sys.exit(main())
