import re

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(cid: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[cid] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=_natural):
        ok, detail = ACCEPTANCE[cid]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {cid:<14} {detail}")


def _natural(cid):
    m = re.match(r"\d+", cid)
    return (int(m.group()) if m else 99, cid)
