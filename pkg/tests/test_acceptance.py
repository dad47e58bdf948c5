"""End-to-end acceptance criteria AC-1 ... AC-11.

Each criterion runs at its stated tolerance and prints one PASS/FAIL line,
shown even when pytest captures output.
"""
import pytest

from levycoupling import acceptance as acc


@pytest.mark.acceptance
@pytest.mark.parametrize("name", list(acc.SUITE))
def test_criterion(name, capsys):
    c = acc.SUITE[name](seed=0)
    with capsys.disabled():
        print(f"\n{c.line()}")
    assert c.passed, c.summary
