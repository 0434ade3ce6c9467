#!/usr/bin/env python3
"""Walk the full workflow on a throwaway installation, using only the CLIs.

Creates ./demo-site (wiped if present), provisions keys, starts the platform
and the facade, registers a visit, records a diagnosis offline, syncs,
generates + signs + stores the e-MR, prints it, and verifies everything.

    python3 demo/run_demo.py
"""

from __future__ import annotations

import os
import shutil
import socket
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SITE = ROOT / "demo-site"
PIN = "123456"
ENV = dict(os.environ, SDA_PIN=PIN, SDA_PLATFORM_PIN=PIN, SDA_SA_PIN=PIN)


def cli(*args: str, quiet: bool = False) -> str:
    print(f"$ {' '.join(args)}")
    proc = subprocess.run(args, capture_output=True, text=True, env=ENV, timeout=120)
    if proc.returncode != 0:
        sys.stderr.write(proc.stdout + proc.stderr)
        raise SystemExit(f"command failed: {' '.join(args)}")
    if not quiet and proc.stdout.strip():
        print("  " + proc.stdout.strip().replace("\n", "\n  "))
    return proc.stdout


def spawn(*args: str) -> subprocess.Popen:
    print(f"$ {' '.join(args)} &")
    return subprocess.Popen(args, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, env=ENV)


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def wait_port(port: int, timeout: float = 15.0) -> None:
    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.5):
                return
        except OSError:
            time.sleep(0.05)
    raise SystemExit(f"port {port} did not come up")


def main() -> None:
    if SITE.exists():
        shutil.rmtree(SITE)
    keys = SITE / "keys"
    keys.mkdir(parents=True)
    (SITE / "data").mkdir()

    print("\n== 1. provision identities ==")
    for name, subject, role in [
        ("role-set", "Role Administrator", "role-set"),
        ("platform", "Platform", "platform"),
        ("definer", "Definitions Manager", "definer"),
        ("scenario-app", "Scenario Application", "scenario-app"),
        ("reception", "Front Desk", "registrar"),
        ("dr-pillon", "Dr. Pillon", "physician"),
    ]:
        cli("roleman", "keygen", "--name", name, "--subject", subject, "--role", role,
            "--out-dir", str(keys), quiet=True)
    print(f"  six keystores + certificates under {keys}")

    print("\n== 2. write configs, start the platform ==")
    scenario, service, admin = free_port(), free_port(), free_port()
    from sda.platform.config import PortConfig, ServerConfig, default_port_kinds, write_config

    write_config(
        ServerConfig(
            port_configs=[
                PortConfig("scenario", scenario, default_port_kinds("scenario")),
                PortConfig("service", service, default_port_kinds("service")),
                PortConfig("administration", admin, default_port_kinds("administration"), "local"),
            ],
            role_set_certificate_path=keys / "role-set.cert.xml",
            platform_keystore_path=keys / "platform.keystore.xml",
            data_dir=SITE / "data",
            log_path=SITE / "platform.log",
        ),
        SITE / "platform.xml",
    )
    platform_proc = spawn("platform", "serve", "--config", str(SITE / "platform.xml"))
    wait_port(scenario)
    conn = ["--platform", f"127.0.0.1:{scenario}", "--platform-cert", str(keys / "platform.cert.xml")]

    print("\n== 3. install roles (role administrator) ==")
    app = ["CREATE_DOC", "STORE_DOC", "GET_DOC", "SEARCH_DOCS", "RENDER_DOC", "VERIFY_DOC"]
    rs_ks = ["--keystore", str(keys / "role-set.keystore.xml")]
    cli("roleman", "install", "--cert", str(keys / "definer.cert.xml"),
        "--allow", "INSTALL_DEFINITION", "--allow", "INSTALL_STYLESHEET", "--allow", "LIST_TYPES",
        "--all-types", *conn, *rs_ks)
    for name in ("scenario-app", "dr-pillon"):
        cli("roleman", "install", "--cert", str(keys / f"{name}.cert.xml"),
            *[a for k in app + ["LIST_TYPES"] for a in ("--allow", k)],
            "--doc-type", "medical-report", *conn, *rs_ks)

    print("\n== 4. install the medical-report type (definitions manager) ==")
    from sda.provision import medical_report_definition, medical_report_stylesheets
    from sda.xmlcanon import canonicalize

    schema = SITE / "medical-report.def.xml"
    schema.write_bytes(canonicalize(medical_report_definition().to_element()))
    sheet_args = []
    for sheet in medical_report_stylesheets():
        p = SITE / f"{sheet.stylesheet_id}.xsl.xml"
        p.write_bytes(canonicalize(sheet.to_element()))
        sheet_args += ["--stylesheet", str(p)]
    cli("defman", "install", "--schema", str(schema), *sheet_args,
        *conn, "--keystore", str(keys / "definer.keystore.xml"))

    print("\n== 5. start the records service (facade) ==")
    from sda.medreg.siteconfig import FacadeConfig, write_facade_config

    facade_port = free_port()
    write_facade_config(
        FacadeConfig(
            listen_host="127.0.0.1", listen_port=facade_port,
            platform_address=f"127.0.0.1:{scenario}",
            sa_keystore_path=keys / "scenario-app.keystore.xml",
            master_db_path=SITE / "master.sqlite",
            print_dir=SITE / "printouts",
            platform_certificate_path=keys / "platform.cert.xml",
        ),
        SITE / "facade.xml",
    )
    for pid, kind, display in [("reception", "registrar", "Front Desk"),
                               ("dr-pillon", "physician", "Dr. Pillon")]:
        cli("medreg", "admin", "add-principal", "--db", str(SITE / "master.sqlite"),
            "--id", pid, "--kind", kind, "--name", display, "--cert", str(keys / f"{pid}.cert.xml"),
            quiet=True)
    facade_proc = spawn("medreg", "facade", "--config", str(SITE / "facade.xml"))
    wait_port(facade_port)
    facade = f"http://127.0.0.1:{facade_port}"

    def medreg(principal: str, *args: str) -> str:
        return cli("medreg", *args, "--facade", facade, "--principal", principal,
                   "--keystore", str(keys / f"{principal}.keystore.xml"),
                   "--data-dir", str(SITE / "clients" / principal))

    print("\n== 6. the day's workflow ==")
    out = medreg("reception", "register",
                 "--patient-name", "Anna", "--patient-surname", "Rossi",
                 "--patient-code", "pc-001", "--exam", "Doppler",
                 "--date", "2026-08-12", "--physician", "dr-pillon")
    visit = out.strip().splitlines()[-1]
    medreg("dr-pillon", "checkout", "--date", "2026-08-12")
    medreg("dr-pillon", "diagnose", "--visit", visit,
           "--text", "Mild venous insufficiency; follow-up in six months.")
    medreg("dr-pillon", "sync")

    print("\n== 7. generate, review-and-sign, store, print ==")
    unsigned, signed = SITE / "emr.xml", SITE / "emr-signed.xml"
    medreg("dr-pillon", "emr", "generate", "--visit", visit, "--out", str(unsigned))
    cli("wysiwys", "sign", "--in", str(unsigned), "--out", str(signed),
        "--stylesheet", "medical-report-en", "--yes",
        *conn, "--keystore", str(keys / "dr-pillon.keystore.xml"))
    doc_id = medreg("dr-pillon", "emr", "store", "--in", str(signed)).strip().splitlines()[-1]
    cli("wysiwys", "verify", "--doc-id", doc_id,
        *conn, "--keystore", str(keys / "dr-pillon.keystore.xml"))
    medreg("dr-pillon", "print", "--doc-id", doc_id)
    medreg("dr-pillon", "purge", "--doc-id", doc_id)

    cli("platform", "status", "--admin", f"127.0.0.1:{admin}",
        "--keystore", str(keys / "role-set.keystore.xml"),
        "--platform-cert", str(keys / "platform.cert.xml"))

    facade_proc.terminate()
    platform_proc.terminate()
    facade_proc.wait(timeout=10)
    platform_proc.wait(timeout=10)
    print(f"\ndone; artifacts under {SITE}")


if __name__ == "__main__":
    main()
