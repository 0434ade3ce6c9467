"""`platform` command: run the server; query its status."""

from __future__ import annotations

import argparse
import signal
import sys
import threading

from . import common


def _serve(args) -> int:
    from ..platform.config import load_config
    from ..platform.server import PlatformServer

    config = load_config(args.config)
    server = PlatformServer(config)
    server.start()
    for port in config.port_configs:
        host, tcp = server.port_address(port.port_name)
        print(f"listening {port.port_name} on {host}:{tcp}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    stop.wait()
    server.stop()
    return 0


def _status(args) -> int:
    client = common.make_client(args)
    status = client.status()
    print(
        "docs={docs} definitions={definitions} stylesheets={stylesheets} "
        "roles={roles} uptime={uptime}s".format(**status.attrs)
    )
    for port in status.children_named("port"):
        print(
            f"port {port.attr('name')}: {port.attr('state')} "
            f"tcp={port.attr('tcp-port')} visibility={port.attr('visibility')}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platform", description="e-doc platform server")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the server")
    serve.add_argument("--config", required=True, metavar="PATH")
    serve.set_defaults(fn=_serve)

    status = sub.add_parser("status", help="query a running server over its administration port")
    status.add_argument("--admin", required=True, metavar="HOST:PORT")
    status.add_argument("--keystore", required=True, metavar="PATH")
    status.add_argument("--platform-cert", metavar="PATH")
    status.set_defaults(fn=_status, platform=None, gateway=None)
    return parser


def main(argv=None) -> int:
    def body(argv):
        args = build_parser().parse_args(argv)
        if args.command == "status":
            args.platform = args.admin
        return args.fn(args)

    return common.run(body, argv)


if __name__ == "__main__":
    sys.exit(main())
