import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bolab.littlewood_paley import DyadicPartition, SpaceTimePartition
from bolab.norms import (
    NORM_CSV_HEADER,
    NormSpec,
    Taper,
    WindowedTrajectory,
    besov_norm,
    besov_sequence,
    interpolation_constant,
    mixed_norm,
    norm_row,
    seq_norm,
    sobolev_norm,
    write_norm_csv,
    xsbq_norm,
    y_constituents,
    y_norm,
)
from bolab.solver import rescale, soliton
from bolab.spectral import Field, Grid1D, Trajectory, dispersion_symbol

from conftest import random_field

INF = math.inf


def linear_trajectory(u0, span, n_times):
    t = np.linspace(0.0, span, n_times + 1)
    spec = u0.spectrum[None, :] * np.exp(-1j * np.outer(t, dispersion_symbol(u0.grid)))
    return Trajectory(u0.grid, t, np.fft.ifft(spec, axis=-1).real * u0.grid.n_points)


def band_field(grid, rng, lo, hi):
    g = grid
    r = np.abs(g.modes)
    c = (rng.standard_normal(g.n_points) + 1j * rng.standard_normal(g.n_points))
    c = c * ((r >= lo) & (r <= hi) & (g.sign == 1))
    c = c + np.conj(np.roll(c[::-1], 1))
    return Field.from_spectrum(g, c)


def test_spec_validation():
    with pytest.raises(ValueError):
        NormSpec("holder")
    with pytest.raises(ValueError):
        NormSpec("besov", p=0.5)
    with pytest.raises(ValueError):
        NormSpec("xsbq")
    with pytest.raises(ValueError):
        NormSpec("besov", b=0.5)


@pytest.mark.parametrize("p", [1, 2, 4, INF])
def test_single_shell_besov(grid, p):
    P = DyadicPartition(grid)
    rng = np.random.default_rng(11)
    for j0 in range(1, P.j_max):
        f = band_field(grid, rng, 2 ** j0 + 1, 2 ** (j0 + 2) - 1)
        lp = np.max(np.abs(f.values)) if p == INF else (grid.dx * np.sum(np.abs(f.values) ** p)) ** (1 / p)
        f = f * (1.0 / lp)
        ratio = besov_norm(f, NormSpec.besov(0, p, 1))
        assert 1.0 - 1e-12 <= ratio <= 3.0
        for s in (-0.5, 0.5, 1.0):
            r = besov_norm(f, NormSpec.besov(s, p, 1)) / 2.0 ** (j0 * s)
            assert 2.0 ** -abs(s) <= r <= 3.0 * 2.0 ** abs(s)


def test_l2_besov_comparable_to_l2(grid, rng):
    P = DyadicPartition(grid)
    psi2 = sum(P.delta_symbol(j) ** 2 for j in P.shells)
    lo, hi = np.sqrt(psi2.min()), np.sqrt(psi2.max())
    assert lo >= 1 / np.sqrt(2) - 1e-12
    for _ in range(20):
        f = random_field(grid, rng)
        r = besov_norm(f, NormSpec.besov(0, 2, 2)) / f.norm()
        assert lo - 1e-12 <= r <= hi + 1e-12


def test_rescaling_shifts_shells():
    g = Grid1D(256, 2 * np.pi)
    u = random_field(g, np.random.default_rng(2))
    ul = rescale(u, 2)
    P = DyadicPartition(g)
    Pl = DyadicPartition(ul.grid, unit=P.unit)
    assert Pl.j_max == P.j_max + 1
    a = besov_sequence(u, NormSpec.besov(0, 2, 2), P)
    b = besov_sequence(ul, NormSpec.besov(0, 2, 2), Pl)
    # shell j of u becomes shell j + 1 of u_2, amplified by 2^{1/2}
    np.testing.assert_allclose(b[2:], np.sqrt(2) * a[1:], rtol=1e-12, atol=1e-14)
    # the inhomogeneous low piece S_0 u splits over S_0 and Delta_0 of u_2
    assert b[0] ** 2 + b[1] ** 2 == pytest.approx(2 * a[0] ** 2, rel=1e-12)


def test_constant_in_time_lb_equals_besov(grid, rng):
    f = random_field(grid, rng)
    tr = Trajectory(grid, np.linspace(0, 1, 9), np.tile(f.values, (9, 1)))
    for p, q in [(2, 1), (INF, 2), (4, INF)]:
        lb = mixed_norm(tr, NormSpec.lb(INF, 0.3, p, q))
        assert lb == pytest.approx(besov_norm(f, NormSpec.besov(0.3, p, q)), rel=1e-13)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_lb_equals_bl_when_rho_is_p(p):
    g = Grid1D(128, 2 * np.pi)
    u0 = band_field(g, np.random.default_rng(4), 9, 30)
    tr = linear_trajectory(u0, 0.3, 256)
    a = mixed_norm(tr, NormSpec.lb(p, 0.5, p, 2))
    b = mixed_norm(tr, NormSpec.bl(0.5, p, 2, p))
    assert abs(a - b) / a < 1e-8


def test_soliton_profile_lb_self_convergence():
    # frozen values: 6.01270, 6.01727, 6.01842 at (N, M) = (1024,100), (2048,200), (4096,400)
    spec = NormSpec.lb(4, 0.25, INF, 1)
    vals = []
    for n, m in [(1024, 100), (2048, 200)]:
        u0 = soliton(Grid1D(n, 100.0), 1.0)
        vals.append(mixed_norm(linear_trajectory(u0, 1.0, m), spec))
    assert np.all(np.isfinite(vals))
    assert abs(vals[1] - vals[0]) / vals[1] < 0.02


def test_mixed_norm_rejects_other_families(grid, rng):
    tr = linear_trajectory(random_field(grid, rng), 0.1, 8)
    with pytest.raises(ValueError):
        mixed_norm(tr, NormSpec.besov(0, 2, 2))


# ---------------------------------------------------------------------------
# conormal norms
# ---------------------------------------------------------------------------

def windowed_linear(band, seed=0, n_points=128, n_times=512, span=0.05):
    g = Grid1D(n_points, 2 * np.pi)
    u0 = random_field(g, np.random.default_rng(seed), band=band)
    return u0, WindowedTrajectory(linear_trajectory(u0, span, n_times))


def taper_besov(wt, b, q):
    """B^{b,q} norm of the taper on the time circle, from its own transform."""
    stp = SpaceTimePartition.for_trajectory(DyadicPartition(wt.trajectory.grid), wt.tapered)
    chi = np.fft.fft(wt.window[:-1]) / stp.n_times
    e = np.array([stp.period * np.sum(np.abs(chi) ** 2 * stp.k_symbol(k) ** 2)
                  for k in stp.k_shells])
    w = np.array([2.0 ** (b * max(k, 0)) for k in stp.k_shells])
    return float(np.linalg.norm(w * np.sqrt(e), ord=q))


@pytest.mark.parametrize("s,b,q", [(0.0, 0.5, 1), (0.5, 0.5, 2), (0.25, 0.0, 2), (-0.25, 1.0, 1)])
def test_tapered_free_evolution_bounded_by_taper(s, b, q):
    # for a linear solution the profile is chi(t) u0, so the conormal norm
    # factors exactly into the data norm times the taper norm
    consts = []
    for band in (4, 12, 40):
        u0, wt = windowed_linear(band)
        spec = NormSpec.besov(s, 2, q)
        u0 = u0 * (1.0 / besov_norm(u0, spec))
        wt = WindowedTrajectory(linear_trajectory(u0, wt.span, len(wt.trajectory) - 1))
        x = xsbq_norm(wt, NormSpec.xsbq(s, b, q))
        consts.append(x)
        assert x == pytest.approx(taper_besov(wt, b, q), rel=1e-10)
    assert max(consts) / min(consts) == pytest.approx(1.0, abs=1e-10)


def test_zero_trajectory_norms(grid):
    tr = Trajectory(grid, np.linspace(0, 1, 17), np.zeros((17, grid.n_points)))
    wt = WindowedTrajectory(tr)
    assert xsbq_norm(wt, NormSpec.xsbq(0.5, 0.5, 1)) == 0.0
    assert y_norm(tr, 0.25) == 0.0
    assert besov_norm(tr.frame(0), NormSpec.besov(1, 2, 1)) == 0.0


def test_xsbq_plancherel_bounds():
    _, wt = windowed_linear(20)
    x = xsbq_norm(wt, NormSpec.xsbq(0, 0, 2))
    tr = wt.tapered
    full = np.sqrt(tr.grid.dx * tr.dt * np.sum(tr.values[:-1] ** 2))
    # two overlapping partitions: sum of squared symbols lies in [1/4, 1]
    assert 0.5 * full <= x <= full * (1 + 1e-12)


def test_xsbq_requires_window():
    _, wt = windowed_linear(4)
    with pytest.raises(TypeError):
        xsbq_norm(wt.trajectory, NormSpec.xsbq(0, 0.5, 1))
    with pytest.raises(ValueError):
        xsbq_norm(wt, NormSpec.besov(0, 2, 2))


def test_xsbq_warns_on_unresolved_conormal_mass():
    g = Grid1D(128, 2 * np.pi)
    u0 = random_field(g, np.random.default_rng(0), band=40)
    wt = WindowedTrajectory(linear_trajectory(u0, 2.0, 16))
    with pytest.warns(RuntimeWarning, match="unresolved"):
        xsbq_norm(wt, NormSpec.xsbq(0, 0.5, 1))


def test_taper_shape():
    t = np.linspace(0, 1, 1001)
    w = Taper()(t, 0.0, 1.0)
    assert np.all(w[(t >= 0.25) & (t <= 0.75)] == 1.0)
    assert np.all(w[(t <= 1 / 16) | (t >= 15 / 16)] == 0.0)
    assert np.all((w >= 0) & (w <= 1))


def test_y_norm_dominates_constituents():
    _, wt = windowed_linear(10)
    parts = y_constituents(wt.tapered, 0.25)
    assert len(parts) == 4
    y = y_norm(wt.tapered, 0.25)
    assert all(y >= v for v in parts.values())
    assert y in parts.values()


def test_y_embeds_in_conormal_norm():
    # fit one constant on half of the ensemble and check it on the other half
    ratios = []
    for seed in range(20):
        band = (6, 10, 16, 24)[seed % 4]
        _, wt = windowed_linear(band, seed=seed, span=0.02)
        ratios.append(y_norm(wt.tapered, 0.25) / xsbq_norm(wt, NormSpec.xsbq(0.25, 0.5, 1)))
    C = max(ratios[:10])
    assert max(ratios[10:]) <= 2 * C
    assert max(ratios) / min(ratios) < 4


# ---------------------------------------------------------------------------
# norm axioms
# ---------------------------------------------------------------------------

def _all_norms(u_field, tr, wt):
    return {
        "besov": besov_norm(u_field, NormSpec.besov(0.5, 4, 1)),
        "sobolev": sobolev_norm(u_field, 0.5),
        "lb": mixed_norm(tr, NormSpec.lb(4, 0.25, INF, 1)),
        "bl": mixed_norm(tr, NormSpec.bl(0.75, INF, 1, 2)),
        "xsbq": xsbq_norm(wt, NormSpec.xsbq(0.25, 0.5, 1)),
        "y": y_norm(tr, 0.25),
    }


def _sample(seed):
    g = Grid1D(64, 2 * np.pi)
    u0 = random_field(g, np.random.default_rng(seed), band=12)
    tr = linear_trajectory(u0, 0.05, 128)
    return u0, tr, WindowedTrajectory(tr)


def test_homogeneity_and_triangle():
    for seed in range(10):
        ua, ta, wa = _sample(2 * seed)
        ub, tb, wb = _sample(2 * seed + 1)
        na, nb = _all_norms(ua, ta, wa), _all_norms(ub, tb, wb)
        lam = -2.5
        ns = _all_norms(ua * lam, ta.with_values(lam * ta.values),
                        WindowedTrajectory(ta.with_values(lam * ta.values)))
        tab = ta.with_values(ta.values + tb.values)
        nsum = _all_norms(ua + ub, tab, WindowedTrajectory(tab))
        for k in na:
            assert ns[k] == pytest.approx(abs(lam) * na[k], rel=1e-10)
            assert nsum[k] <= na[k] + nb[k] + 1e-10 * (na[k] + nb[k])


def test_besov_monotone_in_s(grid, rng):
    for _ in range(10):
        f = random_field(grid, rng)
        vals = [besov_norm(f, NormSpec.besov(s, 2, 1)) for s in (-1, -0.5, 0, 0.25, 1, 2)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


@given(
    st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=1, max_size=40),
    st.floats(min_value=-2.0, max_value=1.0),
    st.floats(min_value=0.05, max_value=1.0),
    st.floats(min_value=0.05, max_value=1.0),
)
@settings(max_examples=200, deadline=None)
def test_interpolation_inequality(a, s0, d0, d1):
    s, s1 = s0 + d0, s0 + d0 + d1
    th = (s1 - s) / (s1 - s0)
    a = np.array(a)
    lhs = seq_norm(a, s, 1)
    rhs = (interpolation_constant(s0, s, s1)
           * seq_norm(a, s0, INF) ** th * seq_norm(a, s1, INF) ** (1 - th))
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


def test_interpolation_constant_domain():
    with pytest.raises(ValueError):
        interpolation_constant(1.0, 0.5, 2.0)


def test_norm_csv(tmp_path, grid, rng):
    spec = NormSpec.besov(0.5, 2, 1)
    v = besov_norm(random_field(grid, rng), spec)
    path = tmp_path / "norms.csv"
    write_norm_csv(path, [norm_row(spec, v, "none", grid.grid_id)])
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == NORM_CSV_HEADER
    assert float(rows[1][6]) == v
    assert rows[1][2] == ""


def test_norm_csv_blanks_unused_exponents():
    assert norm_row(NormSpec("y", s=0.25), 1.0, "none", "g")[2:6] == ["", "", "", ""]
    assert norm_row(NormSpec.besov(0, 2, 1), 1.0, "none", "g")[2:6] == ["", "2", "", "1"]
    assert norm_row(NormSpec.lb(4, 0, INF, 1), 1.0, "none", "g")[2:6] == ["", "inf", "4", "1"]
