from journal.run_journal import RunJournal

__all__ = ["RunJournal"]
