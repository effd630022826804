import json
import logging

from app.core.logging import JSONFormatter, StderrHandler, log_event, run_id_var, run_scope, setup_logging
from app.workers.pool import ordered_map


def _record(message="epoch_completed", **fields):
    record = logging.LogRecord("app.test", logging.INFO, __file__, 1, message, None, None)
    if fields:
        record.extra_fields = fields
    return record


def test_json_formatter_fields():
    """Records render as one JSON object with extra fields at the top level."""
    payload = json.loads(JSONFormatter().format(_record(epoch=3, val_metric=0.5)))
    assert payload["level"] == "INFO"
    assert payload["logger"] == "app.test"
    assert payload["message"] == "epoch_completed"
    assert payload["epoch"] == 3
    assert payload["timestamp"].endswith("Z")
    assert "run_id" not in payload


def test_run_scope_tags_and_resets():
    with run_scope("abc123") as run_id:
        assert run_id == "abc123"
        assert json.loads(JSONFormatter().format(_record()))["run_id"] == "abc123"
    assert run_id_var.get() == ""
    with run_scope() as generated:
        assert len(generated) == 12


def test_logs_go_to_current_stderr(capsys):
    setup_logging("INFO")
    log_event(logging.getLogger("app.test"), "checkpoint_saved", path="best.ltc")
    captured = capsys.readouterr()
    assert captured.out == ""
    assert json.loads(captured.err.strip().splitlines()[-1])["path"] == "best.ltc"
    assert any(isinstance(handler, StderrHandler) for handler in logging.getLogger().handlers)


def test_ordered_map_threads_inherit_run_id():
    """Worker threads see the run id of the scope that dispatched them."""
    with run_scope("pool42"):
        seen = ordered_map(lambda _: run_id_var.get(), range(6), threads=3)
    assert seen == ["pool42"] * 6
