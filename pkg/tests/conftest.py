import numpy as np
import pytest

from bmv.instances import random_instance
from bmv.linalg import validate_pair
from bmv.measure import Construction, build_measure

WORKED_A = [[0.0, 1.0], [1.0, 0.0]]
WORKED_B = np.diag([1.0, 2.0])


def worked_density_series(s, terms=80):
    """Density of the worked 2x2 pencil from its Laurent series at infinity.

    ``lambda_1(z) + z = (sqrt(z^2 + 4) - z)/2 = g(1/z)`` with
    ``g(w) = sum_k binom(1/2, k) 4^k w^(2k-1) / 2``; the density on ``(1, 2)``
    is ``sum_m d_m u^(m-1)/(m-1)!`` where ``e^{g(w)} = sum_m d_m w^m`` and
    ``u = s - 1``.
    """
    g = np.zeros(terms)
    binom = 1.0
    for k in range(1, terms // 2):
        binom *= (0.5 - (k - 1)) / k
        g[2 * k - 1] = binom * 4.0**k / 2.0
    # exp of a power series with g[0] = 0: d' = g' d
    d = np.zeros(terms)
    d[0] = 1.0
    for m in range(1, terms):
        d[m] = sum(k * g[k] * d[m - k] for k in range(1, m + 1)) / m
    u = s - 1.0
    if u <= 0 or u >= 1:
        return 0.0
    total, fact = 0.0, 1.0
    for m in range(1, terms):
        if m > 1:
            fact *= m - 1
        total += d[m] * u ** (m - 1) / fact
    return total


@pytest.fixture(scope="session")
def worked_pair():
    return validate_pair(WORKED_A, WORKED_B)


@pytest.fixture(scope="session")
def worked_construction(worked_pair):
    return Construction(worked_pair)


@pytest.fixture(scope="session")
def worked_measure(worked_pair, worked_construction):
    return build_measure(worked_pair, construction=worked_construction)


@pytest.fixture(scope="session")
def random_pair3():
    return validate_pair(*random_instance(7, 3))


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entries = ACCEPTANCE[number]
        ok = all(e[0] for e in entries)
        details = "; ".join(e[1] for e in entries)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {details}")
