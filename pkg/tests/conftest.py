import time
from contextlib import contextmanager

import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


class Recorder:
    """Collects one verdict per acceptance criterion for the end-of-run summary."""

    @contextmanager
    def criterion(self, name: str, budget_s: float | None = None):
        started = time.monotonic()
        note = {"detail": ""}
        try:
            yield note
        except BaseException as exc:
            _VERDICTS.append((name, False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"))
            raise
        elapsed = time.monotonic() - started + note.get("extra_s", 0.0)
        detail = f"{note['detail']} ({elapsed:.1f} s)".strip()
        if budget_s is not None and elapsed >= budget_s:
            _VERDICTS.append((name, False, f"over budget of {budget_s:.0f} s: {detail}"))
            raise AssertionError(f"{name} took {elapsed:.1f} s, budget {budget_s:.0f} s")
        _VERDICTS.append((name, True, detail))


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
