from __future__ import annotations

import itertools
from fractions import Fraction

import pytest

from debtsched.feasibility import boundary_config
from debtsched.model import SystemConfig


@pytest.fixture
def two_client_unit() -> SystemConfig:
    """tau = 1, p = (0.5, 0.5), q = (0.25, 0.25): on the full-set face."""
    return SystemConfig(2, 1, (0.5, 0.5), (0.25, 0.25))


@pytest.fixture
def two_client_frame() -> SystemConfig:
    """tau = 2, p = (0.5, 0.5) with equal-split boundary throughputs."""
    return boundary_config([0.5, 0.5], 2)


def exact_idle_fraction(ps, tau) -> Fraction:
    """E[(tau - sum of geometric attempt counts)^+] / tau by direct enumeration.

    Attempt counts above tau all behave alike (the frame is exhausted), so
    each client's count is enumerated over 1..tau plus one lumped ">tau"
    outcome.
    """
    ps = [Fraction(p).limit_denominator(10**6) for p in ps]
    if not ps:
        return Fraction(1)
    choices = []
    for p in ps:
        outs = [(k, p * (1 - p) ** (k - 1)) for k in range(1, tau + 1)]
        outs.append((tau + 1, (1 - p) ** tau))
        choices.append(outs)
    total = Fraction(0)
    for combo in itertools.product(*choices):
        prob = Fraction(1)
        used = 0
        for k, w in combo:
            prob *= w
            used += k
        total += prob * max(tau - used, 0)
    return total / tau


_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one criterion's verdict for the end-of-run summary."""

    def record(name: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE[name] = (passed, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda k: int(k[1:])):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
