# tests/test_ledger.py
import logging

from core.logging_setup import RedactingFilter
from db.database import get_recent_runs, ledger_path, log_run


def test_runs_come_back_newest_first(tmp_path):
    path = str(tmp_path / "ledger" / "runs.db")
    first = log_run("scale-to-zero", 7, 0, 120, 91, 3, 10, path=path)
    second = log_run("spot-kills", 4, 2, 300, 101, 5, 24, path=path)
    runs = get_recent_runs(path=path)
    assert [r["id"] for r in runs] == [second, first]
    assert runs[0]["scenario"] == "spot-kills" and runs[0]["exit_code"] == 2
    assert len(get_recent_runs(limit=1, path=path)) == 1


def test_ledger_path_precedence(monkeypatch, tmp_path):
    monkeypatch.setenv("OMEGA_PROVISIONER_LEDGER", str(tmp_path / "env.db"))
    assert ledger_path(str(tmp_path / "arg.db")) == str(tmp_path / "arg.db")
    assert ledger_path() == str(tmp_path / "env.db")
    monkeypatch.setenv("OMEGA_PROVISIONER_LEDGER", "")
    assert ledger_path().endswith("runs.db")


def test_redacting_filter():
    record = logging.LogRecord("x", logging.INFO, __file__, 1, "secret=hunter2 token: abc", None, None)
    RedactingFilter().filter(record)
    assert record.msg == "secret=[REDACTED] token: [REDACTED]"
