import json
from concurrent.futures import ThreadPoolExecutor

from journal.run_journal import KEEP_EVENTS, MAX_EVENTS, RunJournal


def test_new_journal_layout(tmp_path):
    journal = RunJournal(tmp_path / "runs" / "journal.json")
    data = json.loads((tmp_path / "runs" / "journal.json").read_text())
    assert data["meta"]["system"] == "SalClassNet"
    assert data["events"] == [] and data["epochs"] == []
    assert journal.get_config() == {}


def test_config_and_epochs(tmp_path):
    journal = RunJournal(tmp_path / "journal.json")
    journal.store_config({"train.alpha": 0.2})
    journal.record_epoch({"epoch": 1, "val_mca": 0.5})
    journal.record_epoch({"epoch": 2, "val_mca": 0.75})
    again = RunJournal(tmp_path / "journal.json")
    assert again.get_config() == {"train.alpha": 0.2}
    assert [row["epoch"] for row in again.get_epochs()] == [1, 2]


def test_events_are_capped(tmp_path):
    journal = RunJournal(tmp_path / "journal.json")
    for i in range(MAX_EVENTS + 1):
        journal.log_event("tick", {"i": i}, source="test")
    events = journal.get_recent_events(limit=MAX_EVENTS)
    assert len(events) == KEEP_EVENTS
    assert events[-1]["data"]["i"] == MAX_EVENTS
    assert events[-1]["source"] == "test" and "timestamp" in events[-1]
    assert len(journal.get_recent_events()) == 20


def test_concurrent_writers_lose_no_events(tmp_path):
    journal = RunJournal(tmp_path / "journal.json")

    def write(worker):
        for i in range(25):
            journal.log_event("tick", {"worker": worker, "i": i})
        journal.record_epoch({"epoch": worker})

    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(write, range(8)))
    events = journal.get_recent_events(limit=MAX_EVENTS)
    assert len(events) == 200
    assert sorted((e["data"]["worker"], e["data"]["i"]) for e in events) == [(w, i) for w in range(8) for i in range(25)]
    assert sorted(row["epoch"] for row in journal.get_epochs()) == list(range(8))
