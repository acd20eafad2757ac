import pytest

CRITERIA: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Store one acceptance-criterion verdict for the end-of-run table."""
    CRITERIA[number] = (passed, detail)
    print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_configure(config):
    config.addinivalue_line("markers", "property: invariant checks that make up criterion 5")
    config.addinivalue_line("markers", "acceptance: acceptance criteria")


@pytest.fixture(scope="session")
def diffusion_field():
    from esme.picard import VectorField

    return VectorField.from_strings([["a*(1-y)", "b*y^2"]], ["y"], ["a", "b"])
