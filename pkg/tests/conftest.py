import pytest

from nglprompter.compiler import load_mapping
from nglprompter.schema import NGLDocument, applicable_attributes, load_schema


@pytest.fixture(scope="session")
def schema0():
    return load_schema(lod=0)


@pytest.fixture(scope="session")
def schema1():
    return load_schema(lod=1)


@pytest.fixture(scope="session")
def table():
    return load_mapping()


def complete(schema, **chosen):
    """Follow the applicability closure, taking ``chosen`` values where given
    and the first option elsewhere. Every chosen value must end up used."""
    values = {}
    while pending := applicable_attributes(schema, values):
        attr = pending[0]
        values[attr] = chosen.get(attr, schema.options(attr)[0])
    unused = set(chosen) - set(values)
    assert not unused, f"chosen attributes never became applicable: {unused}"
    return NGLDocument(schema.version, values)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
