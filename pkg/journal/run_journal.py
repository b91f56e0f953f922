import json
import os
from datetime import datetime
from threading import RLock

MAX_EVENTS = 1000
KEEP_EVENTS = 500


class RunJournal:
    """
    Persistent JSON record of a run: resolved configuration, timestamped
    events and one row per finished epoch. This is the only artifact that
    carries timestamps.
    """

    def __init__(self, path, system="SalClassNet"):
        self.path = str(path)
        self.system = system
        # reentrant: updates hold it across the read and the write
        self.lock = RLock()
        self._ensure_file_exists()

    def _ensure_file_exists(self):
        """Ensure the journal file exists"""
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        if not os.path.exists(self.path):
            self._write_data(
                {
                    "meta": {
                        "created": datetime.now().isoformat(),
                        "version": "1.0.0",
                        "system": self.system,
                    },
                    "config": {},
                    "events": [],
                    "epochs": [],
                }
            )

    def _read_data(self):
        with self.lock:
            try:
                with open(self.path, "r", encoding="utf-8") as f:
                    return json.load(f)
            except (json.JSONDecodeError, FileNotFoundError):
                return {}

    def _write_data(self, data):
        with self.lock:
            with open(self.path, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=4, default=str)

    def store_config(self, config: dict):
        """Record the resolved configuration of this run"""
        with self.lock:
            current = self._read_data()
            current["config"] = config
            self._write_data(current)

    def log_event(self, event_type, data, source="system"):
        """Append a timestamped event"""
        event = {
            "type": event_type,
            "source": source,
            "data": data,
            "timestamp": datetime.now().isoformat(),
        }
        with self.lock:
            current = self._read_data()
            events = current.setdefault("events", [])
            events.append(event)
            if len(events) > MAX_EVENTS:
                current["events"] = events[-KEEP_EVENTS:]
            self._write_data(current)
        return event

    def record_epoch(self, row: dict):
        with self.lock:
            current = self._read_data()
            current.setdefault("epochs", []).append(row)
            self._write_data(current)

    def get_epochs(self):
        return self._read_data().get("epochs", [])

    def get_recent_events(self, limit=20):
        events = self._read_data().get("events", [])
        return events[-limit:] if events else []

    def get_config(self):
        return self._read_data().get("config", {})
