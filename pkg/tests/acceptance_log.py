"""Registry the acceptance tests write to, drained by the terminal
summary hook so every criterion reports one pass/fail line."""

RESULTS = []


def record(name: str, ok, detail: str = "") -> None:
    """ok may be True, False, or None for a skipped criterion."""
    RESULTS.append((name, ok if ok is None else bool(ok), detail))
