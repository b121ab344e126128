import numpy as np
import pytest

from bolab.spectral import Field, Grid1D


def random_field(grid, rng, band=None, amplitude=1.0, mean_zero=False):
    """Real random field with modes |m| <= band (default N/4), unit L2 times amplitude."""
    n = grid.n_points
    band = n // 4 if band is None else band
    c = np.zeros(n, dtype=complex)
    m = np.arange(1, band + 1)
    c[m] = rng.standard_normal(band) + 1j * rng.standard_normal(band)
    c[-m] = np.conj(c[m])
    if not mean_zero:
        c[0] = rng.standard_normal()
    f = Field.from_spectrum(grid, c)
    return f * (amplitude / f.norm())


def single_mode(grid, m, phase=0.0):
    return Field(grid, np.cos(2 * np.pi * m * grid.x / grid.length + phase))


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    den = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (den if den > 0 else 1.0)


@pytest.fixture
def grid():
    return Grid1D(256, 2 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance bookkeeping: criterion -> list of (part, ok, detail)
ACCEPTANCE = {}


def record(criterion, title, part, ok, detail=""):
    """Store one checked part of an acceptance criterion and echo it."""
    ACCEPTANCE.setdefault(criterion, (title, []))[1].append((part, bool(ok), detail))
    print(f"{criterion} {part}: {'PASS' if ok else 'FAIL'} {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        title, parts = ACCEPTANCE[crit]
        ok = all(p[1] for p in parts)
        failed = [f"{p[0]} ({p[2]})" for p in parts if not p[1]]
        line = f"{crit} {title}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += " -- failing: " + "; ".join(failed)
        terminalreporter.write_line(line)
