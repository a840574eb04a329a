import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for mod in list(sys.modules.values()):
        lines.extend(getattr(mod, "ACCEPTANCE_LINES", None) or [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
