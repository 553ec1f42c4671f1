import pytest

from ccgeom.spacefile import (
    CATALOG_NAMES,
    FIXTURES,
    SpaceFileError,
    UnknownFixture,
    catalog,
    catalog_system,
    catalog_text,
    parse_space,
    print_space,
)
from ccgeom.structure import StructuralDefect

HEIS = catalog_text("heisenberg-1")


def test_heisenberg_fixture():
    sys = parse_space(HEIS)
    assert sys.q == 3
    assert sys.weights == (1, 1, 2)
    assert sys.depth == 2
    assert catalog("heisenberg-1").dim == 3


def test_example3_depths():
    assert catalog_system("example3-unit").depth == 2
    assert catalog_system("example3-unit").weights == (1, 1, 1)
    assert catalog_system("example3-graded").depth == 3


def test_heisenberg_n():
    sys = catalog_system("heisenberg-2")
    assert sys.dim == 5 and sys.q == 5 and sys.depth == 2


def test_unknown_fixture_lists_catalog():
    with pytest.raises(UnknownFixture) as exc:
        catalog("example4")
    for name in CATALOG_NAMES:
        assert name in str(exc.value)


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip_is_a_fixed_point(name):
    sys = catalog_system(name)
    text = print_space(sys)
    again = parse_space(text)
    assert again == sys
    assert print_space(again) == text


def test_comments_powers_and_division():
    text = """# a comment
[header]
name = demo   # trailing
depth = 2

[coordinates]
x1, y1, t

[fields]
X1 = [1, 0, -(y1)/2]
Y1 = [0, 1, x1**1 / 2]
T = [0, 0, (x1 - x1)^2 + 1]

[weights]
X1 = 1
Y1 = 1
T = 2
"""
    assert parse_space(text) == catalog_system("heisenberg-1")


def test_anchor_in_header():
    sys = parse_space(catalog_text("example3-unit").replace("[coordinates]", "anchor = 0, 1, 0\n\n[coordinates]"))
    assert sys.depth == 1
    assert tuple(map(int, sys.anchor)) == (0, 1, 0)


def _mutate(old, new):
    assert old in HEIS
    return HEIS.replace(old, new)


@pytest.mark.parametrize("text,line,column,pattern", [
    (_mutate("T = 2\n", ""), 10, 5, "missing weight"),
    (_mutate("x1/2", "z/2"), 9, 13, "undeclared coordinate"),
    (_mutate("x1/2", "x1^(1/2)"), 9, 16, "exponent"),
    (_mutate("x1/2", "x1^1.5"), 9, 16, "exponent"),
    (_mutate("x1/2", "x1/y1"), 9, 15, "constant"),
    (_mutate("-y1/2", "-y1/2 +"), 8, 20, "expected"),
    (_mutate("[0, 0, 1]", "[0, 0]"), 10, 5, "components"),
    (_mutate("T = 2", "T = two"), 15, 5, "positive integer"),
    (_mutate("[fields]", "[feilds]"), 7, 1, "unknown section"),
])
def test_mutations_are_rejected_with_positions(text, line, column, pattern):
    with pytest.raises(SpaceFileError, match=pattern) as exc:
        parse_space(text)
    assert (exc.value.line, exc.value.column) == (line, column)
    assert f"line {line}, column {column}" in str(exc.value)


def test_weight_for_unknown_field():
    with pytest.raises(SpaceFileError, match="unknown field"):
        parse_space(HEIS + "Z = 3\n")


def test_declared_depth_must_be_minimal():
    with pytest.raises(StructuralDefect, match="minimal"):
        parse_space(HEIS.replace("name = heisenberg-1", "name = h\ndepth = 3"))
