"""End-to-end CLI coverage: provisioning, serving, and the full workflow via
subprocesses only."""

from __future__ import annotations

import os
import subprocess
import sys
from pathlib import Path

import pytest

from sda.edoc import Stylesheet, create_doc, serialize_doc
from sda.provision import medical_report_definition
from sda.xmlcanon import canonicalize
from tests.cliutil import CliSite, run_cli
from tests.conftest import NOW, ROSSI_VALUES


@pytest.fixture(scope="module")
def site(tmp_path_factory):
    s = CliSite(tmp_path_factory.mktemp("cli-site"))
    yield s
    s.close()


def test_platform_status_cli(site):
    proc = run_cli(
        "platform_cli", "status",
        "--admin", f"127.0.0.1:{site.ports['administration']}",
        "--keystore", str(site.keys / "role-set.keystore.xml"),
        "--platform-cert", str(site.keys / "platform.cert.xml"),
    )
    assert "port scenario: up" in proc.stdout
    assert "definitions=1" in proc.stdout


def test_full_workflow_via_clis(site):
    proc = site.medreg(
        "reception", "register",
        "--patient-name", "Anna", "--patient-surname", "Rossi", "--patient-code", "pc-100",
        "--exam", "Doppler", "--date", "2026-08-12", "--physician", "dr-pillon",
    )
    visit_id = proc.stdout.strip().splitlines()[-1]

    proc = site.medreg("dr-pillon", "checkout", "--date", "2026-08-12")
    assert visit_id in proc.stdout

    site.medreg("dr-pillon", "diagnose", "--visit", visit_id, "--text", "Mild stenosis.")
    proc = site.medreg("dr-pillon", "sync")
    assert f"{visit_id}: OK" in proc.stdout

    unsigned = site.root / "emr-unsigned.xml"
    signed = site.root / "emr-signed.xml"
    site.medreg("dr-pillon", "emr", "generate", "--visit", visit_id, "--out", str(unsigned))

    run_cli(
        "wysiwys_cli", "sign", "--in", str(unsigned), "--out", str(signed),
        "--stylesheet", "medical-report-en", "--yes",
        *site.conn, "--keystore", str(site.keys / "dr-pillon.keystore.xml"),
    )

    proc = site.medreg("dr-pillon", "emr", "store", "--in", str(signed))
    doc_id = proc.stdout.strip().splitlines()[-1]
    assert doc_id.startswith("d")

    proc = run_cli(
        "wysiwys_cli", "verify", "--doc-id", doc_id,
        *site.conn, "--keystore", str(site.keys / "dr-pillon.keystore.xml"),
    )
    assert "all-valid" in proc.stdout

    proc = site.medreg("dr-pillon", "print", "--doc-id", doc_id)
    printed = Path(proc.stdout.strip().splitlines()[-1])
    assert printed.is_file()
    assert "Mild stenosis." in printed.read_text()

    site.medreg("dr-pillon", "purge", "--doc-id", doc_id)
    proc = site.medreg("dr-pillon", "history", "--patient-code", "pc-100")
    assert "Doppler" in proc.stdout


def test_denied_surfaces_with_nonzero_exit(site):
    # the physician may not install definitions
    schema = site.root / "medical-report.def.xml"
    proc = run_cli(
        "defman_cli", "install", "--schema", str(schema),
        *site.conn, "--keystore", str(site.keys / "dr-pillon.keystore.xml"),
        check=False,
    )
    assert proc.returncode != 0
    assert "COMMAND_NOT_ALLOWED" in proc.stderr


def test_stylesheet_unknown_field_fails_locally(site, tmp_path):
    bad = tmp_path / "bad.xsl.xml"
    bad.write_bytes(
        canonicalize(Stylesheet("bad-sheet", "medical-report", "en", "{field:nope}").to_element())
    )
    proc = run_cli(
        "defman_cli", "install", "--schema", str(site.root / "medical-report.def.xml"),
        "--stylesheet", str(bad),
        *site.conn, "--keystore", str(site.keys / "definer.keystore.xml"),
        check=False,
    )
    assert proc.returncode != 0
    assert "unknown fields" in proc.stderr


def test_wysiwys_abort_produces_nothing(site, tmp_path):
    doc = create_doc(medical_report_definition(), ROSSI_VALUES, now=NOW)
    unsigned = tmp_path / "u.xml"
    unsigned.write_bytes(serialize_doc(doc))
    out = tmp_path / "s.xml"
    proc = subprocess.run(
        [sys.executable, "-m", "sda.cli.wysiwys_cli", "sign",
         "--in", str(unsigned), "--out", str(out),
         "--stylesheet", "medical-report-en",
         *site.conn, "--keystore", str(site.keys / "dr-pillon.keystore.xml")],
        input="wrong-code\n",
        capture_output=True, text=True, timeout=60,
        env=dict(os.environ, SDA_PIN="123456"),
    )
    assert proc.returncode != 0
    assert not out.exists()
