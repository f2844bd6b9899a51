"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    RESULTS[criterion] = (passed, detail)


def lines():
    return [f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}" for n, (ok, detail) in sorted(RESULTS.items())]
