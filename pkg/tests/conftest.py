import pathlib
import sys

from hypothesis import settings

sys.path.insert(0, str(pathlib.Path(__file__).parent))

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    report = getattr(module, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for number in sorted(report):
            terminalreporter.write_line(report[number])
