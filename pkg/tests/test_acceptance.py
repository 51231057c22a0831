"""Each acceptance criterion at its stated tolerance; one pass/fail line per criterion."""

import pytest

from shearflow_ldp import acceptance as acc


@pytest.fixture(scope="module")
def ctx():
    return acc.Context()


@pytest.mark.parametrize("k", sorted(acc.CRITERIA))
def test_criterion(k, ctx, acceptance_lines):
    result = acc.run_criterion(k, ctx)
    line = result.line()
    acceptance_lines.append(line)
    print(line)
    assert result.passed, line
