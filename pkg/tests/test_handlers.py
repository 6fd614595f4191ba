from interfaces.handlers import JsonLinesHandler
import jsonlines
import logging


def test_handler_appends_records_above_its_level(tmp_path):
    path = tmp_path / "logs" / "events.jsonl"
    logger = logging.getLogger("confide.test_handlers")
    logger.propagate = False
    logger.setLevel(logging.DEBUG)
    handler = JsonLinesHandler(path, logging.WARNING)
    logger.addHandler(handler)
    try:
        logger.info("ignored")
        logger.warning("Skipped batch 3 (non-finite loss)")
        logger.error("Rollout unstable at step %d", 7)
    finally:
        logger.removeHandler(handler)

    with jsonlines.open(path) as reader:
        records = list(reader)
    assert [r["level"] for r in records] == ["WARNING", "ERROR"]
    assert records[1]["message"] == "Rollout unstable at step 7"
    assert records[0]["module"] == "test_handlers"
    assert set(records[0]) == {"time", "level", "module", "message"}
