"""Randomized stress tests of the linear and bilinear estimates.

Every ``A <~ B`` becomes a measured ratio ``A / B`` swept over a dyadic
parameter; a bounded constant shows up as a plateau of the envelope (the
largest ratio over seeds at each sweep point).

Two labs are used.

* Linear lab: ``L = 2 pi`` (unit frequency 1), window ``[0, kappa]`` with a
  small ``kappa`` so that wave packets cross the torus at most a few times.
  Shell j data lives on a grid with ``2^{j+4}`` points; the time grid
  resolves the fastest phase ``kappa * 2^{2j+4}``.
* Block lab: ``L = T = 2 pi``.  Then all space and time frequencies are
  integers, the interaction picture is exactly periodic, and products of
  conormal blocks are lattice convolutions evaluated without sampling.
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.fft import next_fast_len
from scipy.integrate import simpson
from scipy.signal import fftconvolve

from .littlewood_paley import DyadicPartition, cutoff_profile
from .norms import (INF, NormSpec, Taper, WindowedTrajectory, besov_norm, mixed_norm,
                    xsbq_energies, xsbq_norm)
from .solver import SolverConfig, run
from .spectral import Field, Grid1D, Trajectory, dispersion_symbol, padded_product

__all__ = [
    "EstimateReport",
    "ShellEnsemble",
    "FlowPair",
    "plateau",
    "linear_estimates",
    "strichartz_ratio",
    "maximal_ratio",
    "smoothing_ratio",
    "bilinear_ratio",
    "plancherel_bilinear_identity",
    "bump",
    "BlockCase",
    "BLOCK_CASES",
    "block_product",
    "block_product_ratio",
    "case_scale",
    "random_block",
    "LatticeBlock",
    "support_vanishes",
    "vanishing_sweep",
    "commutator_ratio",
    "theta_l1",
    "flow_holder_experiment",
    "fit_slope",
    "write_report_csv",
    "REPORT_CSV_HEADER",
]


@dataclass
class EstimateReport:
    estimate_id: str
    params: dict
    seed: int
    lhs: float
    rhs_scale: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs_scale if self.rhs_scale > 0 else math.nan


def plateau(reports, key: str = "j"):
    """Envelope (max ratio over seeds) per value of ``params[key]``.

    Returns ``(factor, envelope)`` with ``factor = max / min`` of the
    envelope.  Reports with zero right-hand side are skipped.
    """
    env = {}
    for r in reports:
        if not r.rhs_scale > 0:
            continue
        k = r.params[key]
        env[k] = max(env.get(k, 0.0), r.ratio)
    if not env:
        return math.nan, env
    vals = np.array(list(env.values()))
    return float(vals.max() / vals.min()), dict(sorted(env.items()))


# ---------------------------------------------------------------------------
# linear lab
# ---------------------------------------------------------------------------

@dataclass
class ShellEnsemble:
    """Seeded random data on dyadic shells, evolved by the free flow.

    ``model="gaussian"``: independent complex Gaussian coefficients times the
    shell symbol (random phases, spread over the torus).
    ``model="packet"``: one Gaussian amplitude times the shell symbol with
    phases aligned so the packet focuses at a random point at mid-window.
    """

    seeds: tuple = tuple(range(20))
    kappa: float = 0.01
    model: str = "gaussian"
    length: float = 2 * np.pi
    taper: Taper = dc_field(default_factory=Taper)
    min_times: int = 1024
    oversample: float = 2.0

    def __post_init__(self):
        if self.model not in ("gaussian", "packet"):
            raise ValueError(f"unknown data model {self.model!r}")

    def grid(self, j: int) -> Grid1D:
        return Grid1D(max(2 ** (j + 4), 64), self.length)

    def n_times(self, j: int) -> int:
        unit = 2 * np.pi / self.length
        phase = self.kappa * (2.0 ** (j + 2) * unit) ** 2
        need = self.oversample * phase / np.pi
        return max(self.min_times, 2 ** int(np.ceil(np.log2(max(need, 1.0)))))

    def rng(self, *key) -> np.random.Generator:
        return np.random.default_rng([abs(int(k)) for k in key])

    def data(self, grid: Grid1D, symbol, rng, focus=None) -> Field:
        """Real unit-L^2 field with spectrum supported where ``symbol != 0``."""
        n = grid.n_points
        sym = np.asarray(symbol, dtype=float) * (grid.sign == 1)
        if self.model == "gaussian":
            c = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * sym
        else:
            xc = rng.uniform(0, grid.length) if focus is None else focus
            a = rng.standard_normal() + 1j * rng.standard_normal()
            phase = -grid.xi * xc + dispersion_symbol(grid) * self.kappa / 2
            c = a * sym * np.exp(1j * phase)
        c = c + np.conj(np.roll(c[::-1], 1))
        f = Field.from_spectrum(grid, c)
        nrm = f.norm()
        return f if nrm == 0 else f.with_values(f.values / nrm)

    def linear(self, u0: Field, n_times: int) -> WindowedTrajectory:
        t = np.linspace(0.0, self.kappa, n_times + 1)
        th = dispersion_symbol(u0.grid)
        spec = u0.spectrum[None, :] * np.exp(-1j * np.outer(t, th))
        frames = np.fft.ifft(spec, axis=-1).real * u0.grid.n_points
        return WindowedTrajectory(Trajectory(u0.grid, t, frames), self.taper)


def _x_norm(wt, s, P, energies=None):
    return xsbq_norm(wt, NormSpec.xsbq(s, 0.5, 1), P, energies=energies)


LINEAR_ESTIMATES = ("strichartz", "maximal", "smoothing")


def _linear_specs(s):
    # (lhs norm, regularity of the X norm on the right)
    return {
        "strichartz": (NormSpec.lb(4, s, INF, 1), s),
        "maximal": (NormSpec.bl(0, 4, 1, INF), 0.25),
        "smoothing": (NormSpec.bl(s + 0.5, INF, 1, 2), s),
    }


def linear_estimates(ensemble: ShellEnsemble, j_range, s: float = 0.0,
                     which=LINEAR_ESTIMATES, amplitude: float = 1.0) -> dict:
    """Reports for the Strichartz, maximal and smoothing ratios.

    The three share the data: one tapered free wave and one set of conormal
    block energies per (j, seed).
    """
    specs = _linear_specs(s)
    out = {name: [] for name in which}
    for j in j_range:
        g = ensemble.grid(j)
        P = DyadicPartition(g)
        M = ensemble.n_times(j)
        for seed in ensemble.seeds:
            u0 = ensemble.data(g, P.delta_symbol(j), ensemble.rng(j, seed))
            u0 = u0.with_values(amplitude * u0.values)
            wt = ensemble.linear(u0, M)
            E = xsbq_energies(wt, P)
            for name in which:
                lhs_spec, s_x = specs[name]
                rhs = _x_norm(wt, s_x, P, E)
                lhs = mixed_norm(wt.tapered, lhs_spec, P) if rhs > 0 else 0.0
                out[name].append(EstimateReport(name, {"j": j, "s": s}, seed, lhs, rhs))
    return out


def strichartz_ratio(ensemble: ShellEnsemble, s: float, j_range, amplitude=1.0):
    """``||u||_{L^4_t B^{s,1}_inf} / ||u||_{X^{s,1/2,1}}`` on tapered free waves."""
    return linear_estimates(ensemble, j_range, s, ("strichartz",), amplitude)["strichartz"]


def maximal_ratio(ensemble: ShellEnsemble, j_range, amplitude=1.0):
    """``||u||_{B^{0,1}_4 L^inf_t} / ||u||_{X^{1/4,1/2,1}}``."""
    return linear_estimates(ensemble, j_range, 0.0, ("maximal",), amplitude)["maximal"]


def smoothing_ratio(ensemble: ShellEnsemble, s: float, j_range, amplitude=1.0):
    """``||u||_{B^{s+1/2,1}_inf L^2_t} / ||u||_{X^{s,1/2,1}}``."""
    return linear_estimates(ensemble, j_range, s, ("smoothing",), amplitude)["smoothing"]


def bilinear_ratio(ensemble: ShellEnsemble, j_range):
    """``||S_{j-1}u Delta_j v||_{L^2_{t,x}}`` against ``2^{-j/2} |u|_X |v|_X``.

    ``u`` carries every frequency below the shell (mean excluded), ``v`` the
    shell itself; both are tapered free waves.  With the packet model both
    focus at the same point.
    """
    out = []
    for j in j_range:
        g = ensemble.grid(j)
        P = DyadicPartition(g)
        M = ensemble.n_times(j)
        low = P.s_symbol(j - 1).copy()
        low[0] = 0.0
        for seed in ensemble.seeds:
            rng = ensemble.rng(j, seed, 7)
            focus = rng.uniform(0, g.length)
            u = ensemble.linear(ensemble.data(g, low, rng, focus), M)
            v = ensemble.linear(ensemble.data(g, P.delta_symbol(j), rng, focus), M)
            a = P.s_j(u.tapered, j - 1).values
            b = P.delta_j(v.tapered, j).values
            prod = padded_product(a, b)
            lhs = math.sqrt(np.trapezoid(g.dx * np.sum(prod ** 2, axis=1), u.trajectory.times))
            rhs = 2.0 ** (-j / 2) * _x_norm(u, 0.0, P) * _x_norm(v, 0.0, P)
            out.append(EstimateReport("bilinear", {"j": j}, seed, lhs, rhs))
    return out


# ---------------------------------------------------------------------------
# bilinear Plancherel identity
# ---------------------------------------------------------------------------

def bump(eta, a: float, b: float):
    """C-infinity bump supported on the open interval (a, b)."""
    eta = np.asarray(eta, dtype=float)
    y = (2 * eta - (a + b)) / (b - a)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


def plancherel_bilinear_identity(f, g, h: float, span: float, n_times: int | None = None):
    """Both sides of the bilinear identity for disjointly supported f, g.

    ``f`` and ``g`` are samples on the frequency grid ``eta_n = n h``
    (arrays indexed by n from 0; mode n sits at frequency ``n h``).

    LHS = int_{-span}^{span} int |I(t, xi)|^2 dxi dt,
          I(t, xi) = int exp(-it (xi - eta)^2) conj(g(eta - xi)) exp(it eta^2) f(eta) deta,
    RHS = pi int int |f(eta)|^2 |g(lam)|^2 / |eta - lam| deta dlam.

    Returns ``(lhs, rhs, rel_err)``.  The t-integrand is the overlap of two
    wave packets moving apart, so the truncation error decays fast in span;
    ``h`` must be small enough that the packets do not meet again on the
    dual period ``2 pi / h`` within the span: the recurrence time is
    ``pi / (h max|eta - lam|)`` and spans beyond 0.9 of it are rejected.
    """
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if f.shape != g.shape:
        raise ValueError("f and g must share the frequency grid")
    sf, sg = np.abs(f) > 0, np.abs(g) > 0
    if np.any(sf & sg):
        raise ValueError("supports of f and g overlap")
    n = f.size
    eta = h * np.arange(n)
    iu, il = np.nonzero(sf)[0], np.nonzero(sg)[0]
    if iu.size == 0 or il.size == 0:
        raise ValueError("f and g must be nonzero")
    reach = h * max(abs(iu.max() - il.min()), abs(il.max() - iu.min()))
    if span >= 0.9 * np.pi / (h * reach):
        raise ValueError("time span reaches the lattice recurrence; refine h")
    if n_times is None:
        n_times = 2 * int(20 * span) + 1
    # xi = k h for k in (-n, n); I[t, k] = h sum_n a_t[n - k] b_t[n]
    K = 1 << int(np.ceil(np.log2(4 * n)))
    times = np.linspace(-span, span, n_times)
    ph = np.exp(1j * np.outer(times, eta ** 2))
    A = np.fft.fft(np.conj(np.conj(g)[None, :] * np.conj(ph)), n=K, axis=-1)
    B = np.fft.fft(f[None, :] * ph, n=K, axis=-1)
    # I[t, k] = h sum_m a[m] b[m + k]: a circular correlation, no wrap since K >= 4n
    corr = np.fft.ifft(np.conj(A) * B, axis=-1) * h
    phi = h * np.sum(np.abs(corr) ** 2, axis=-1)
    lhs = float(simpson(phi, x=times))
    d = np.abs(eta[:, None] - eta[None, :])
    wf, wg = np.abs(f) ** 2, np.abs(g) ** 2
    rhs = float(np.pi * h * h * np.sum(wf[iu, None] * wg[None, il] / d[np.ix_(iu, il)]))
    return lhs, rhs, abs(lhs - rhs) / rhs


# ---------------------------------------------------------------------------
# conormal block products on the exact periodic lattice
# ---------------------------------------------------------------------------

def _k_symbol(sigma, k):
    r = np.abs(sigma).astype(float)
    if k == -1:
        return cutoff_profile(r)
    return cutoff_profile(r / 2.0 ** (k + 1)) - cutoff_profile(r / 2.0 ** k)


def _j_symbol(m, j):
    r = np.abs(m).astype(float)
    if j == -1:
        return cutoff_profile(r)
    return cutoff_profile(r / 2.0 ** (j + 1)) - cutoff_profile(r / 2.0 ** j)


def _block_modes(j, sign):
    hi = 2 ** (j + 2) if j >= 0 else 2
    m = np.arange(0, hi + 1) if sign > 0 else -np.arange(1, hi + 1)
    w = _j_symbol(m, j)
    keep = w > 0
    return m[keep], w[keep]


def _block_sigmas(k):
    hi = 2 ** (k + 2) if k >= 0 else 2
    s = np.arange(-hi, hi + 1)
    w = _k_symbol(s, k)
    nz = np.nonzero(w)[0]
    # contiguous range: the annulus keeps its zero middle
    keep = slice(nz[0], nz[-1] + 1)
    return s[keep], w[keep]


@dataclass
class LatticeBlock:
    """Coefficients ``V[sigma, m]`` of a conormal block in the interaction picture."""

    j: int
    k: int
    sign: int
    modes: np.ndarray
    sigmas: np.ndarray
    coef: np.ndarray
    factors: tuple | None = None

    @property
    def norm(self) -> float:
        return float(2 * np.pi * np.linalg.norm(self.coef))


def random_block(j, k, sign, rng, model="gaussian") -> LatticeBlock:
    """Random data on one block.

    ``model="gaussian"``: unit complex Gaussian coefficients times the block
    symbol.  ``model="packet"``: a tensor product ``|a_sigma| |b_m|`` of
    Gaussian magnitudes times the symbol; all phases vanish, so the block is
    a coherent packet focused at ``(t, x) = (0, 0)``.
    """
    m, wm = _block_modes(j, sign)
    s, ws = _block_sigmas(k)
    if model == "gaussian":
        c = rng.standard_normal((s.size, m.size)) + 1j * rng.standard_normal((s.size, m.size))
        return LatticeBlock(j, k, sign, m, s, c * np.outer(ws, wm))
    if model == "packet":
        hs = np.abs(rng.standard_normal(s.size) + 1j * rng.standard_normal(s.size)) * ws
        gm = np.abs(rng.standard_normal(m.size) + 1j * rng.standard_normal(m.size)) * wm
        return LatticeBlock(j, k, sign, m, s, np.outer(hs, gm).astype(complex), (hs, gm))
    raise ValueError(f"unknown block data model {model!r}")


def block_product(u: LatticeBlock, v: LatticeBlock, j_out: int, k_out: int | None,
                  chunk: int = 1 << 21) -> float:
    """``|| Delta^+_{j_out k_out}(u v) ||_{L^2}`` over the (2 pi)^2 torus.

    Exact lattice evaluation: a pair of modes (m, m') feeds output mode
    ``m + m'`` at modulation ``sigma + sigma' + Omega`` where
    ``Omega = theta(m + m') - theta(m) - theta(m')``.  Pairs whose resonance
    puts them out of reach of the output shell are skipped.  ``k_out=None``
    keeps every modulation.
    """
    mo, wmo = _block_modes(j_out, 1)
    a, b = np.meshgrid(np.arange(u.modes.size), np.arange(v.modes.size), indexing="ij")
    a, b = a.ravel(), b.ravel()
    mm = u.modes[a] + v.modes[b]
    theta = lambda x: x * np.abs(x)
    omega = theta(mm) - theta(u.modes[a]) - theta(v.modes[b])
    ok = np.isin(mm, mo)
    a, b, mm, omega = a[ok], b[ok], mm[ok], omega[ok]
    plan = []
    for st1, c1 in _segments(u):
        for st2, c2 in _segments(v):
            plan.append((st1 + st2, c1.shape[0] + c2.shape[0] - 1, c1, c2))
    lo_s = min(s0 for s0, _, _, _ in plan) + (int(omega.min()) if omega.size else 0)
    hi_s = max(s0 + lc - 1 for s0, lc, _, _ in plan) + (int(omega.max()) if omega.size else 0)
    if k_out is not None:
        so, _ = _block_sigmas(k_out)
        lo_s, hi_s = max(lo_s, int(so.min())), min(hi_s, int(so.max()))
    if a.size == 0 or hi_s < lo_s:
        return 0.0
    span = hi_s - lo_s + 1
    if mo.size * span > 1 << 26:
        raise MemoryError("output block too large for the dense lattice accumulator")
    row = np.searchsorted(mo, mm)
    acc = np.zeros((mo.size, span), dtype=complex)
    if u.factors is not None and v.factors is not None:
        _rank_one_accumulate(acc, u, v, a, b, row, omega, lo_s)
        plan = []
    for s0, lc, c1, c2 in plan:
        start = s0 - lo_s + omega
        keep = (start + lc > 0) & (start < span)
        pa, pb, pr, ps = a[keep], b[keep], row[keep], start[keep]
        if pa.size == 0:
            continue
        K = next_fast_len(lc)
        F1 = np.fft.fft(c1, n=K, axis=0)
        F2 = np.fft.fft(c2, n=K, axis=0)
        step = max(1, chunk // K)
        for i in range(0, pa.size, step):
            conv = np.fft.ifft(F1[:, pa[i:i + step]] * F2[:, pb[i:i + step]], axis=0).T
            for c, r, st in zip(conv, pr[i:i + step], ps[i:i + step]):
                lo, hi = max(st, 0), min(st + lc, span)
                acc[r, lo:hi] += c[lo - st:hi - st]
    weight = wmo[:, None] * np.ones((1, span))
    if k_out is not None:
        weight = weight * _k_symbol(np.arange(lo_s, hi_s + 1), k_out)[None, :]
    return float(2 * np.pi * np.linalg.norm(weight * acc))


def _rank_one_accumulate(acc, u, v, a, b, row, omega, lo_s):
    """Tensor-product data: one modulation convolution serves every pair.

    Each pair drops an impulse of weight ``g[m] g'[m']`` at its resonance
    offset; convolving the impulse rows with the common profile gives the
    product.
    """
    h = np.convolve(u.factors[0], v.factors[0]) if min(u.sigmas.size, v.sigmas.size) < 64 \
        else fftconvolve(u.factors[0], v.factors[0])
    s0 = int(u.sigmas[0] + v.sigmas[0])
    start = s0 - lo_s + omega
    lo_i = int(start.min())
    D = np.zeros((acc.shape[0], int(start.max()) - lo_i + 1))
    np.add.at(D, (row, start - lo_i), u.factors[1][a] * v.factors[1][b])
    full = fftconvolve(D, h[None, :], axes=1)
    span = acc.shape[1]
    lo, hi = max(lo_i, 0), min(lo_i + full.shape[1], span)
    if hi > lo:
        acc[:, lo:hi] += full[:, lo - lo_i:hi - lo_i]


def _segments(block: LatticeBlock):
    """Maximal runs of modulation rows carrying nonzero coefficients."""
    nz = np.any(block.coef != 0, axis=1)
    edges = np.flatnonzero(np.diff(np.concatenate(([0], nz.astype(int), [0]))))
    return [(int(block.sigmas[lo]), block.coef[lo:hi]) for lo, hi in zip(edges[::2], edges[1::2])]


@dataclass(frozen=True)
class BlockCase:
    """One line of the case table.

    ``configure(n)`` maps the sweep index to ``(j, k, j', k', j'', k'')`` for
    ``Delta^+_{j''k''}(Delta^+_{jk} u  Delta^{v_sign}_{j'k'} v)``;
    ``bound(jf, jn, js, kf, kn, ks)`` is the predicted scale with the indices
    sorted into flat <= natural <= sharp.  ``asserted=False`` rows are
    reported only: the data models do not saturate their bound.
    """

    case_id: str
    v_sign: int
    relation: str
    k_sharp: str
    configure: object
    bound: object
    sweep: tuple
    model: str = "gaussian"
    asserted: bool = True

    @property
    def signs(self) -> str:
        return "+" + ("+" if self.v_sign > 0 else "-") + "+"


def _sobolev(jf, jn, js, kf, kn, ks):
    return 2.0 ** (jf / 2 + kf / 2)


def _conormal_nat(jf, jn, js, kf, kn, ks):
    return 2.0 ** (kf / 2 + (kn - jn) / 2)


def _conormal_flat(jf, jn, js, kf, kn, ks):
    return 2.0 ** (kf / 2 + (kn - jf) / 2)


def _quarter(jf, jn, js, kf, kn, ks):
    return 2.0 ** (kf / 2 + kn / 4)


BLOCK_CASES = {
    # off-shell blocks (k >= 2j + 2): Bernstein on the smallest block is sharp
    # for coherent packets; random phases never saturate it
    "sobolev": BlockCase("sobolev", 1, "j<<j'~j''", "k'=k''",
                         lambda n: (n, n + 4, n + 2, 2 * n + 6, n + 2, 2 * n + 6),
                         _sobolev, tuple(range(-1, 4)), model="packet"),
    # low-high, output modulation on the resonance 2 m m' ~ 2^{j+j'}
    "+++2": BlockCase("+++2", 1, "j'<<j~j''", "k''",
                      lambda n: (5, 6, n, 6, 5, n + 7), _conormal_nat, tuple(range(-1, 4))),
    # high-high to low, opposite signs: resonance 2 m'' m
    "+-+2": BlockCase("+-+2", -1, "j''<<j~j'", "k''",
                      lambda n: (5, 4, 5, 4, n, n + 7), _conormal_flat, tuple(range(-1, 4))),
    # low-high with a negative low factor
    "+-+1": BlockCase("+-+1", -1, "j'<<j~j''", "k''",
                      lambda n: (5, 4, n, 4, 5, n + 7), _conormal_nat, tuple(range(-1, 4))),
    # comparable frequencies: stationary resonance gives the 1/4
    "+++21": BlockCase("+++21", 1, "j~j'~j''", "k''",
                       lambda n: (n, 4, n, 4, n + 1, 2 * n + 3), _quarter, tuple(range(2, 7))),
    # comparable frequencies, the input modulation is sharp
    "+-+0": BlockCase("+-+0", -1, "j~j'~j''", "k",
                      lambda n: (n + 1, 2 * n + 2, n, 4, n, 4), _quarter, tuple(range(2, 7)),
                      model="packet", asserted=False),
}


def case_scale(case: BlockCase, cfg) -> float:
    """The better of the case bound and the Sobolev bound."""
    j, k, jp, kp, jo, ko = cfg
    js = sorted((j, jp, jo))
    ks = sorted((k, kp, ko))
    return min(case.bound(*js, *ks), _sobolev(*js, *ks))


def block_product_ratio(case_spec, seeds, sweep=None, model: str | None = None):
    """Ratio of ``||Delta^+_{j''k''}(Delta^+_{jk} u  Delta^{+-}_{j'k'} v)||`` to
    ``case_scale * ||u|| ||v||`` over the sweep index ``n``.

    Raises ValueError for a configuration that vanishes by support; use
    :func:`vanishing_sweep` for those.
    """
    case = BLOCK_CASES[case_spec] if isinstance(case_spec, str) else case_spec
    model = model or case.model
    out = []
    for n in (case.sweep if sweep is None else sweep):
        cfg = case.configure(n)
        j, k, jp, kp, jo, ko = cfg
        if support_vanishes(j, jp, jo, case.v_sign):
            raise ValueError(f"{case.case_id} at n={n} vanishes by support")
        scale = case_scale(case, cfg)
        for seed in seeds:
            rng = np.random.default_rng([n + 16, seed])
            u = random_block(j, k, 1, rng, model)
            v = random_block(jp, kp, case.v_sign, rng, model)
            lhs = block_product(u, v, jo, ko)
            params = dict(n=n, j=j, k=k, jp=jp, kp=kp, jpp=jo, kpp=ko, signs=case.signs)
            out.append(EstimateReport(case.case_id, params, seed, lhs, scale * u.norm * v.norm))
    return out


def _interval(j, sign):
    """Open support of Delta_j^sign on the real line (as (lo, hi))."""
    lo, hi = (0.0, 2.0) if j == -1 else (2.0 ** j, 2.0 ** (j + 2))
    if sign > 0:
        return (-1e-300 if j == -1 else lo), hi
    return -hi, (1e-300 if j == -1 else -lo)


def support_vanishes(j, jp, jo, v_sign) -> bool:
    """Interval arithmetic: does supp(Delta_j^+) + supp(Delta_{j'}^{v_sign})
    miss supp(Delta_{j''}^+)?"""
    a = _interval(j, 1)
    b = _interval(jp, v_sign)
    o = _interval(jo, 1)
    lo, hi = a[0] + b[0], a[1] + b[1]
    return hi <= o[0] or lo >= o[1]


def vanishing_sweep(j_max: int = 6, k: int = 1, seed: int = 0):
    """Every (j, j', j'', v sign) with j, j', j'' <= j_max that vanishes by
    support, as ``(indices, relative output)`` pairs."""
    rng = np.random.default_rng(seed)
    out = []
    for j, jp, jo in itertools.product(range(-1, j_max + 1), repeat=3):
        for vs in (1, -1):
            if not support_vanishes(j, jp, jo, vs):
                continue
            u = random_block(j, k, 1, rng, "gaussian")
            v = random_block(jp, k, vs, rng, "gaussian")
            lhs = block_product(u, v, jo, None)
            out.append(((j, jp, jo, vs), lhs / (u.norm * v.norm)))
    return out


# ---------------------------------------------------------------------------
# commutators
# ---------------------------------------------------------------------------

def theta_l1(unit: float = 1.0, extent: float = 4000.0, n: int = 1 << 20) -> float:
    """``int |x| |phi(x)| dx`` for the kernel phi of S_0 (``phi-hat(xi/unit)``)."""
    dxi = 2 * np.pi / extent
    xi = np.fft.fftfreq(n, d=1.0 / (n * dxi))
    phat = cutoff_profile(np.abs(xi) / unit)
    phi = np.fft.ifft(phat).real * n * dxi / (2 * np.pi)
    x = np.fft.fftfreq(n, d=1.0 / extent)
    return float(np.sum(np.abs(x) * np.abs(phi)) * extent / n)


def _lp(values, p, dx):
    if p == INF:
        return float(np.max(np.abs(values)))
    return float((dx * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def commutator_ratio(ensemble: ShellEnsemble, j_range, p_g: float = INF, p_f: float = 2.0,
                     operator: str = "S", g_field=None, amplitude: float = 1.0):
    """``||[S_j, g] f||_2 2^j / (||g'||_{p_g} ||f||_{p_f})`` with ``1/p_g + 1/p_f = 1/2``.

    ``g`` is smooth random data on modes ``|m| <= 4`` (or ``g_field(grid)``),
    ``f`` random shell-j data scaled by ``amplitude``.
    """
    if abs(1.0 / p_g + 1.0 / p_f - 0.5) > 1e-12:
        raise ValueError("exponents must satisfy 1/p_g + 1/p_f = 1/2")
    out = []
    for j in j_range:
        grid = ensemble.grid(j)
        P = DyadicPartition(grid)
        low = (np.abs(grid.modes) <= 4).astype(float)
        low[0] = 0
        for seed in ensemble.seeds:
            rng = ensemble.rng(seed, 99)
            g = g_field(grid) if g_field is not None else ensemble.data(grid, low, rng)
            f = ensemble.data(grid, P.delta_symbol(j), ensemble.rng(j, seed, 5))
            f = f.with_values(amplitude * f.values)
            if operator == "S":
                c = P.commutator_s_j(g, f, j)
            else:
                c = P.commutator_delta_j(g, f, j)
            gx = np.fft.ifft(g.spectrum * 1j * grid.xi).real * grid.n_points
            lhs = _lp(c.values, 2, grid.dx) * 2.0 ** j
            rhs = _lp(gx, p_g, grid.dx) * _lp(f.values, p_f, grid.dx)
            out.append(EstimateReport(f"commutator_{operator}", {"j": j, "p_g": p_g, "p_f": p_f},
                                      seed, lhs, rhs))
    return out


# ---------------------------------------------------------------------------
# flow map continuity
# ---------------------------------------------------------------------------

@dataclass
class FlowPair:
    u0: Field
    v0: Field
    u: Trajectory
    v: Trajectory

    @property
    def epsilon(self) -> float:
        return (self.u0 - self.v0).norm()

    def difference_norms(self, partition=None) -> dict:
        d = self.u - self.v
        P = partition or DyadicPartition(d.grid)
        l2 = max(d.frame(i).norm() for i in range(len(d)))
        bm = max(besov_norm(d.frame(i), NormSpec.besov(-0.5, 2, 1), P) for i in range(len(d)))
        wt = WindowedTrajectory(d)
        # conormal shells of the difference; the high-k tail is reported, not dropped
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            x = xsbq_norm(wt, NormSpec.xsbq(0.0, 0.5, 1), P)
        return {"C_t L2": l2, "C_t B^{-1/2,1}_2": bm, "X^{0,1/2,1}": x}


def fit_slope(eps, values) -> float:
    """Least-squares slope of log(values) against log(eps)."""
    return float(np.polyfit(np.log(eps), np.log(values), 1)[0])


def flow_holder_experiment(u0: Field, direction: Field, eps_ladder, t_end: float,
                           dt: float | None = None, record_every: int = 1):
    """Run ``u0`` and ``u0 + eps * direction`` for every eps; fit log-log slopes.

    ``direction`` is normalized to unit L^2 (and must be resolved on the
    grid: its top-third spectrum must be negligible).
    """
    g = u0.grid
    spec = direction.spectrum
    band = np.abs(g.modes) > g.n_points / 3
    if np.sum(np.abs(spec[band]) ** 2) > 1e-20 * np.sum(np.abs(spec) ** 2):
        raise ValueError("perturbation is under-resolved on this grid")
    d = direction.with_values(direction.values / direction.norm())
    cfg = SolverConfig(g, t_end, dt=dt, record_every=record_every)
    ref, _ = run(cfg, u0)
    norms = {}
    pairs = []
    for eps in eps_ladder:
        v0 = u0.with_values(u0.values + eps * d.values)
        tr, _ = run(cfg, v0)
        pair = FlowPair(u0, v0, ref, tr)
        pairs.append(pair)
        for k, val in pair.difference_norms().items():
            norms.setdefault(k, []).append(val)
    eps = np.asarray(eps_ladder, dtype=float)
    slopes = {k: fit_slope(eps, np.asarray(v)) for k, v in norms.items()}
    return {"eps": eps, "norms": {k: np.asarray(v) for k, v in norms.items()},
            "slopes": slopes, "pairs": pairs}


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

REPORT_CSV_HEADER = ("estimate_id", "j", "k", "j'", "k'", "j''", "k''", "signs",
                     "seed", "lhs", "rhs_scale", "ratio")


def _f(v):
    return "" if v is None else format(float(v), ".17g")


def write_report_csv(path, reports) -> None:
    rows = sorted(reports, key=lambda r: (r.estimate_id, sorted(
        (k, str(v)) for k, v in r.params.items()), r.seed))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_CSV_HEADER)
        for r in rows:
            p = r.params
            w.writerow([r.estimate_id, p.get("j", ""), p.get("k", ""), p.get("jp", ""),
                        p.get("kp", ""), p.get("jpp", ""), p.get("kpp", ""), p.get("signs", ""),
                        r.seed, _f(r.lhs), _f(r.rhs_scale), _f(r.ratio)])
