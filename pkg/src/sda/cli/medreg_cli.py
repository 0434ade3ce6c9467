"""`medreg` command: the medical-records workflow.

Client subcommands talk to the facade and keep a per-physician light-db on
disk; `diagnose` and `purge` are fully local.  `facade` runs the scenario
service itself, and `admin add-principal` registers identities in the
master register.
"""

from __future__ import annotations

import argparse
import signal
import sys
import threading
from pathlib import Path

from . import common


def _client(args):
    from ..medreg.client import MedRegClient

    return MedRegClient(
        args.facade,
        args.principal,
        common.load_keystore(args.keystore),
        common.read_pin(),
        args.data_dir,
        offline=args.offline,
    )


def _register(args) -> int:
    client = _client(args)
    visit_id = client.register_visit(
        {
            "name": args.patient_name,
            "surname": args.patient_surname,
            "patient_code": args.patient_code,
            "origin": args.origin,
        },
        args.exam,
        args.date,
        args.physician,
        args.room,
    )
    print(visit_id)
    return 0


def _checkout(args) -> int:
    db = _client(args).checkout(args.date)
    for lv in (db.visits[k] for k in sorted(db.visits)):
        r = lv.record
        print(
            f"{r.visit_id} {r.visit_date} {r.patient_surname} {r.patient_name}"
            f" [{r.exam_type}] {r.status} v{r.version}"
        )
    print(f"{len(db.visits)} visits, {len(db.history)} history entries")
    return 0


def _diagnose(args) -> int:
    _client(args).diagnose(args.visit, args.text)
    print(f"{args.visit} diagnosed (local)")
    return 0


def _sync(args) -> int:
    results = _client(args).sync()
    if not results:
        print("nothing to push")
    for item in results:
        print(f"{item['visit_id']}: {item['outcome']} (v{item['version']})")
    return 0 if all(r["outcome"] == "OK" for r in results) else 1


def _emr_generate(args) -> int:
    from ..edoc import serialize_doc

    doc, view = _client(args).emr_generate(args.visit)
    Path(args.out).write_bytes(serialize_doc(doc))
    print(f"unsigned e-MR -> {args.out}")
    print(f"stylesheet {view.stylesheet_id}, view digest {view.view_digest}")
    return 0


def _emr_store(args) -> int:
    from ..edoc import parse_doc
    from ..medreg.client import OfflineError

    doc = parse_doc(Path(args.in_file).read_bytes())
    client = _client(args)
    try:
        doc_id = client.emr_store(doc)
    except OfflineError:
        print("offline: queued in the light-db for a later upload", file=sys.stderr)
        return 1
    print(doc_id)
    return 0


def _print_emr(args) -> int:
    reply = _client(args).print_emr(args.doc_id)
    print(reply["path"])
    return 0


def _purge(args) -> int:
    _client(args).purge(args.doc_id)
    print(f"purged {args.doc_id} from the device")
    return 0


def _history(args) -> int:
    for entry in _client(args).history(args.patient_code):
        print(f"{entry.visit_date} [{entry.exam_type}] {entry.summary}")
    return 0


def _facade(args) -> int:
    from ..medreg.siteconfig import build_facade, load_facade_config

    cfg = load_facade_config(args.config)
    master, _service, server = build_facade(cfg)
    server.start()
    print(f"facade listening on {server.url}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    stop.wait()
    server.stop()
    master.close()
    return 0


def _add_principal(args) -> int:
    from ..medreg.masterdb import MasterDb

    master = MasterDb(args.db)
    master.add_principal(args.id, args.kind, args.name, common.load_certificate(args.cert))
    master.close()
    print(f"added {args.kind} {args.id}")
    return 0


def _add_client_args(parser) -> None:
    parser.add_argument("--facade", required=True, metavar="URL")
    parser.add_argument("--principal", required=True, metavar="ID")
    parser.add_argument("--keystore", required=True, metavar="PATH")
    parser.add_argument("--data-dir", required=True, metavar="DIR")
    parser.add_argument("--offline", action="store_true", help="disable transport")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medreg", description="medical records workflow")
    sub = parser.add_subparsers(dest="command", required=True)

    register = sub.add_parser("register", help="register a visit (registrar)")
    _add_client_args(register)
    register.add_argument("--patient-name", required=True)
    register.add_argument("--patient-surname", required=True)
    register.add_argument("--patient-code", required=True)
    register.add_argument("--origin", default="external", choices=("internal", "external"))
    register.add_argument("--exam", required=True)
    register.add_argument("--date", required=True)
    register.add_argument("--physician", required=True)
    register.add_argument("--room", default="")
    register.set_defaults(fn=_register)

    checkout = sub.add_parser("checkout", help="download the day's worklist")
    _add_client_args(checkout)
    checkout.add_argument("--date", required=True)
    checkout.set_defaults(fn=_checkout)

    diagnose = sub.add_parser("diagnose", help="record a diagnosis locally")
    _add_client_args(diagnose)
    diagnose.add_argument("--visit", required=True)
    diagnose.add_argument("--text", required=True)
    diagnose.set_defaults(fn=_diagnose)

    sync = sub.add_parser("sync", help="push local diagnoses to the register")
    _add_client_args(sync)
    sync.set_defaults(fn=_sync)

    emr = sub.add_parser("emr", help="e-MR operations")
    emr_sub = emr.add_subparsers(dest="emr_command", required=True)
    generate = emr_sub.add_parser("generate")
    _add_client_args(generate)
    generate.add_argument("--visit", required=True)
    generate.add_argument("--out", required=True, metavar="PATH")
    generate.set_defaults(fn=_emr_generate)
    store = emr_sub.add_parser("store")
    _add_client_args(store)
    store.add_argument("--in", dest="in_file", required=True, metavar="PATH")
    store.set_defaults(fn=_emr_store)

    print_cmd = sub.add_parser("print", help="render to the print artifact")
    _add_client_args(print_cmd)
    print_cmd.add_argument("--doc-id", required=True)
    print_cmd.set_defaults(fn=_print_emr)

    purge = sub.add_parser("purge", help="drop an uploaded e-MR from the device")
    _add_client_args(purge)
    purge.add_argument("--doc-id", required=True)
    purge.set_defaults(fn=_purge)

    history = sub.add_parser("history", help="list a patient's prior exams")
    _add_client_args(history)
    history.add_argument("--patient-code", required=True)
    history.set_defaults(fn=_history)

    facade = sub.add_parser("facade", help="run the scenario service")
    facade.add_argument("--config", required=True, metavar="PATH")
    facade.set_defaults(fn=_facade)

    admin = sub.add_parser("admin", help="master register administration")
    admin_sub = admin.add_subparsers(dest="admin_command", required=True)
    add_p = admin_sub.add_parser("add-principal")
    add_p.add_argument("--db", required=True, metavar="PATH")
    add_p.add_argument("--id", required=True)
    add_p.add_argument("--kind", required=True, choices=("physician", "registrar"))
    add_p.add_argument("--name", required=True)
    add_p.add_argument("--cert", required=True, metavar="PATH")
    add_p.set_defaults(fn=_add_principal)
    return parser


def main(argv=None) -> int:
    def body(argv):
        args = build_parser().parse_args(argv)
        return args.fn(args)

    return common.run(body, argv)


if __name__ == "__main__":
    sys.exit(main())
