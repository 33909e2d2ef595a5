"""Verdict lines from the acceptance suite, echoed in the pytest terminal summary."""
LINES: list[str] = []
