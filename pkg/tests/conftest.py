import struct
import sys

import pytest

from mtfuzz.bench import load_fixture
from mtfuzz.ir import parse_target


def pack3(x, y, z):
    """Three little-endian 4-byte fields, the input layout of the 12-byte fixtures."""
    return struct.pack("<III", x, y, z)


def fixture_program(name):
    return load_fixture(name).program()


@pytest.fixture
def nested_foo():
    return fixture_program("nested_foo")


@pytest.fixture
def crc_gate():
    return fixture_program("crc_gate")


@pytest.fixture
def implicit_k():
    return fixture_program("implicit_k")


@pytest.fixture
def unsat_alpha():
    return fixture_program("unsat_alpha")


def prog(text):
    return parse_target(text)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    lines = getattr(acc, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
