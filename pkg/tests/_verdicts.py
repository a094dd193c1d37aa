"""Shared record of acceptance verdicts, printed in the terminal summary."""

LINES = []


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    LINES.append((number, line))
    print(line)
    return ok
