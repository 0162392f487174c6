import pytest

from kernel_properties import SUITES


@pytest.mark.parametrize("name", sorted(SUITES))
def test_property_suite(name):
    SUITES[name]()
