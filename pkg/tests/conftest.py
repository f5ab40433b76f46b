"""Shared instances and oracles for the test suite."""
import numpy as np
import pytest

from dadp.market_model import EnergyServiceProvider, LoadAggregator, Scenario


def make_scenario(alphas, betas, ms, ns, caps, d_mins=None, market="electricity",
                  scene_id="", thermals=None):
    d_mins = d_mins if d_mins is not None else [0.0] * len(alphas)
    thermals = thermals if thermals is not None else [None] * len(alphas)
    las = [LoadAggregator(f"LA{i + 1}", float(a), float(b), float(lo), th)
           for i, (a, b, lo, th) in enumerate(zip(alphas, betas, d_mins, thermals))]
    esps = [EnergyServiceProvider(f"ESP{j + 1}", float(m), float(n), float(c))
            for j, (m, n, c) in enumerate(zip(ms, ns, caps))]
    return Scenario(market, las, esps, scene_id)


def symmetric_scenario(n_las, n_esps, alpha=20.0, beta=0.5, m=0.3, n=2.0, cap=30.0):
    return make_scenario([alpha] * n_las, [beta] * n_las, [m] * n_esps, [n] * n_esps,
                         [cap] * n_esps, scene_id=f"sym{n_las}x{n_esps}")


def five_by_five():
    """Heterogeneous 5-LA/5-ESP instance used for convergence behaviour."""
    return make_scenario([20, 30, 25, 40, 35], [0.5, 0.4, 0.6, 0.3, 0.5],
                         [0.2, 0.3, 0.25, 0.4, 0.35], [2, 3, 1, 2.5, 1.5], [30] * 5,
                         scene_id="5x5")


def kelly_gap_instance():
    """Two LAs with a six-fold spread in linear value; weights matter a lot."""
    return make_scenario([30, 5], [0.2, 0.2], [0.3] * 3, [2.0] * 3, [30] * 3,
                         scene_id="spread")


def grid_argmax(fun, lo, hi, step):
    grid = np.arange(lo, hi + 0.5 * step, step)
    vals = fun(grid)
    return float(grid[int(np.argmax(vals))])


@pytest.fixture
def scenario_5x5():
    return five_by_five()


ACCEPTANCE_RESULTS = []


def record_criterion(label, ok, detail):
    """Print and keep one PASS/FAIL line for the end-of-run summary."""
    line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_RESULTS.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
