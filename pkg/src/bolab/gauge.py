"""Gauge renormalization of the Benjamin-Ono flow.

Sign convention (H = -i sgn xi, free flow exp(-i t xi|xi|)): positive
frequencies satisfy ``(d_t - i d_x^2) u^+ = -Delta^+(u u_x)``, and the factor
that cancels the low-high interaction ``u_{<j} d_x u_j^+`` is
``F = exp(+i U / 2)``.  So

    w_j^+ = S_{j-1}(F) Delta_j^+ u,      w_j^- = conj(w_j^+),

and for the lowest shell ``w_{-1}^+ = P^+ S_0 u`` (no gauge).  The real field
is ``w = sum_j (w_j^+ + w_j^-)``.

Inputs must be mean-zero so that ``int^x u`` is periodic; subtract the mean
of the data beforehand with :func:`bolab.solver.galilean_reduce`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import cumulative_simpson

from .littlewood_paley import DyadicPartition
from .spectral import Field, Trajectory, apply_multiplier, hilbert, padded_product

__all__ = [
    "AntiDerivative",
    "GaugedPair",
    "GaugeInverseResult",
    "GaugeDivergenceError",
    "ResidualReport",
    "SIGN_CONVENTION",
    "bump_psi",
    "antiderivative",
    "antiderivative_residuals",
    "time_derivative",
    "gauge_factor",
    "gauge_forward",
    "gauge_inverse",
    "localized_terms",
    "paralinearization",
    "paralinearization_check",
    "renorm_residual",
    "write_residual_csv",
]

SIGN_CONVENTION = "w_j^+ = S_{j-1}(exp(+iU/2)) Delta_j^+ u ; H = -i sgn(xi)"
MEAN_TOL = 1e-12


def _spec(values):
    return np.fft.fft(values, axis=-1) / values.shape[-1]


def _vals(spec):
    return np.fft.ifft(spec, axis=-1) * spec.shape[-1]


def _mult(values, symbol):
    return _vals(_spec(values) * symbol)


def _dx(values, grid, order=1):
    sym = (1j * grid.xi) ** order
    if order % 2:
        sym = sym.copy()
        sym[grid.nyquist_index] = 0
    return _mult(values, sym)


def bump_psi(grid, center=None, width=None) -> Field:
    """Normalized Gaussian bump, ``dx * sum(psi) == 1`` exactly."""
    L = grid.length
    center = L / 2 if center is None else center
    width = L / 32 if width is None else width
    y = (grid.x - center + L / 2) % L - L / 2
    psi = np.exp(-0.5 * (y / width) ** 2)
    return Field(grid, psi / (grid.dx * psi.sum()))


def time_derivative(values, times, order: int = 4):
    """Centered difference along axis 0 on a uniform time grid.

    Returns ``(interior_indices, derivative)``; ``order`` is 2 or 4.
    """
    values = np.asarray(values)
    h = times[1] - times[0]
    m = len(times)
    if order == 2:
        idx = np.arange(1, m - 1)
        d = (values[2:] - values[:-2]) / (2 * h)
    elif order == 4:
        idx = np.arange(2, m - 2)
        d = (values[:-4] - 8 * values[1:-3] + 8 * values[3:-1] - values[4:]) / (12 * h)
    else:
        raise ValueError("order must be 2 or 4")
    if idx.size == 0:
        raise ValueError("trajectory too short for a centered difference")
    return idx, d


# ---------------------------------------------------------------------------
# anti-derivative
# ---------------------------------------------------------------------------

@dataclass
class AntiDerivative:
    """``U = int psi(y) int_y^x u dz dy + G(t)`` on every frame."""

    U: Trajectory
    psi: Field
    g_correction: np.ndarray
    g_rate: np.ndarray


def _check_mean(values, grid):
    m = np.max(np.abs(values.mean(axis=-1)))
    if m > MEAN_TOL:
        raise ValueError(f"input has nonzero spatial mean {m:.3e}; subtract it first")


def _periodic_primitive(values, grid):
    xi = grid.xi
    sym = np.zeros_like(xi, dtype=complex)
    nz = xi != 0
    sym[nz] = 1.0 / (1j * xi[nz])
    sym[grid.nyquist_index] = 0
    return _mult(values, sym).real


def _g_rate(values, grid, psi: Field):
    # G'(t) = -int (H psi') u - (1/2) int psi u^2
    hpsi_x = _dx(hilbert(psi).values, grid).real
    return grid.dx * (-(values @ hpsi_x) - 0.5 * (values ** 2) @ psi.values)


def antiderivative(traj: Trajectory, psi: Field | None = None,
                   check_mean: bool = True) -> AntiDerivative:
    """Anti-derivative with the time correction G, G(0) = 0.

    G is integrated with cumulative Simpson over the recorded times, which
    makes ``d_t U = -H u_x - u^2 / 2`` hold to the accuracy of the frames.
    """
    g = traj.grid
    psi = bump_psi(g) if psi is None else psi
    u = np.asarray(traj.values, dtype=float)
    if check_mean:
        _check_mean(u, g)
    V = _periodic_primitive(u, g)
    V = V - g.dx * (V @ psi.values)[..., None]
    rate = _g_rate(u, g, psi)
    if u.ndim == 1:
        G = np.zeros(())
        return AntiDerivative(Field(g, V), psi, G, rate)
    G = cumulative_simpson(rate, x=np.asarray(traj.times), initial=0.0)
    return AntiDerivative(traj.with_values(V + G[:, None]), psi, G, rate)


def antiderivative_residuals(traj: Trajectory, ad: AntiDerivative, order: int = 4) -> dict:
    """Relative residuals of ``d_x U = u`` and ``d_t U = -H u_x - u^2/2``."""
    g = traj.grid
    u = traj.values
    U = ad.U.values
    ux = _dx(U, g).real
    rx = np.linalg.norm(ux - u) / max(np.linalg.norm(u), 1e-300)
    idx, Ut = time_derivative(U, np.asarray(traj.times), order)
    hux = _dx(hilbert(traj).values, g).real
    rhs = -hux[idx] - 0.5 * u[idx] ** 2
    den = max(np.linalg.norm(rhs), np.linalg.norm(Ut))
    rt = 0.0 if den == 0 else np.linalg.norm(Ut - rhs) / den
    return {"space": float(rx), "time": float(rt)}


# ---------------------------------------------------------------------------
# forward gauge
# ---------------------------------------------------------------------------

def gauge_factor(U_values, sign: int = 1):
    """``exp(sign * i U / 2)``, unimodular pointwise."""
    return np.exp(0.5j * sign * U_values)


@dataclass
class GaugedPair:
    u: Trajectory
    partition: DyadicPartition
    psi: Field
    times: np.ndarray
    w_plus: dict
    convention: str = SIGN_CONVENTION
    antiderivative: AntiDerivative | None = None

    @property
    def grid(self):
        return self.partition.grid

    def w_minus(self, j):
        return np.conj(self.w_plus[j])

    @property
    def w(self) -> Trajectory:
        total = sum(self.w_plus[j] for j in self.partition.shells)
        return self.u.with_values(2 * total.real)


def _shell_plus_symbol(P, j):
    return P.delta_symbol(j) * (P.grid.sign == 1)


def _w_shells(u_vals, F, P):
    w = {}
    spec = _spec(u_vals)
    Fspec = _spec(F)
    w[-1] = _vals(spec * _shell_plus_symbol(P, -1))
    for j in range(0, P.j_max + 1):
        SF = _vals(Fspec * P.s_symbol(j - 1))
        uj = _vals(spec * _shell_plus_symbol(P, j))
        w[j] = padded_product(SF, uj)
    return w


def gauge_forward(traj: Trajectory, partition: DyadicPartition | None = None,
                  psi: Field | None = None, gauge_traj: Trajectory | None = None) -> GaugedPair:
    """Shell-by-shell gauge transform.

    ``gauge_traj`` renormalizes ``traj`` with the phase of a different
    solution (defaults to ``traj`` itself).
    """
    P = partition or DyadicPartition(traj.grid)
    src = traj if gauge_traj is None else gauge_traj
    ad = antiderivative(src, psi)
    _check_mean(np.asarray(traj.values), traj.grid)
    F = gauge_factor(ad.U.values)
    w = _w_shells(np.asarray(traj.values, dtype=float), F, P)
    times = np.asarray(getattr(traj, "times", np.zeros(1)))
    return GaugedPair(traj, P, ad.psi, times, w, antiderivative=ad)


# ---------------------------------------------------------------------------
# inverse gauge
# ---------------------------------------------------------------------------

class GaugeDivergenceError(RuntimeError):
    def __init__(self, msg, norm_u0, iterations, history):
        super().__init__(msg)
        self.norm_u0 = norm_u0
        self.iterations = iterations
        self.history = history


@dataclass
class GaugeInverseResult:
    u: Trajectory
    iterations: int
    history: list = dc_field(default_factory=list)


def _l2_frames(a, dx):
    return np.sqrt(dx * np.sum(np.abs(a) ** 2, axis=-1))


def gauge_inverse(w: GaugedPair, u_seed=None, tol: float = 1e-10, max_iter: int = 200,
                  max_norm: float = 0.5) -> GaugeInverseResult:
    """Recover u from the gauged shells ``w.w_plus``.

    Only the w side of the pair (shells, psi, partition, times) is read.  Each
    sweep rebuilds the phase F from the current iterate and corrects every
    shell with the approximate inverse ``S_{j-3}(conj F)``:

        u_j^+  <-  u_j^+ + 1_j S_{j-3}(conj F) (w_j^+ - S_{j-1}(F) u_j^+),

    whose first sweep from zero is ``Delta_j u^+ ~ S_{j-3}(F^{-1}) w_j^+``.
    Iteration stops when successive iterates differ by less than ``tol`` in
    L^2 (worst frame).  Growth of the update for three sweeps in a row, a
    non-finite iterate or ``max_iter`` sweeps raise GaugeDivergenceError.
    """
    P = w.partition
    g = P.grid
    wt = w.w
    vals0 = np.asarray(wt.values)
    norm0 = float(np.max(_l2_frames(np.atleast_2d(vals0)[:1], g.dx)))
    if norm0 > max_norm:
        raise ValueError(f"||u0||_2 ~ {norm0:.3g} exceeds the contraction bound {max_norm}")
    u = np.array(vals0 if u_seed is None else getattr(u_seed, "values", u_seed), dtype=float)
    masks = {j: (_shell_plus_symbol(P, j) != 0) for j in P.shells}
    sym = {j: _shell_plus_symbol(P, j) for j in P.shells}
    history = []
    growth = 0
    for it in range(1, max_iter + 1):
        ad = antiderivative(wt.with_values(u), w.psi, check_mean=False)
        F = gauge_factor(ad.U.values)
        Fs, Fb = _spec(F), _spec(np.conj(F))
        spec = _spec(u)
        corr = _vals(masks[-1] * (_spec(w.w_plus[-1]) - spec * sym[-1]))
        for j in range(0, P.j_max + 1):
            uj = _vals(spec * sym[j])
            SF = _vals(Fs * P.s_symbol(j - 1))
            SFb = _vals(Fb * P.s_symbol(j - 3))
            r = w.w_plus[j] - padded_product(SF, uj)
            corr = corr + _vals(_spec(padded_product(SFb, r)) * masks[j])
        new = u + 2 * corr.real
        new = new - new.mean(axis=-1, keepdims=True)
        if not np.all(np.isfinite(new)):
            raise GaugeDivergenceError("non-finite iterate", norm0, it, history)
        diff = float(np.max(_l2_frames(np.atleast_2d(new - u), g.dx)))
        history.append(diff)
        u = new
        if diff < tol:
            return GaugeInverseResult(wt.with_values(u), it, history)
        growth = growth + 1 if len(history) > 1 and diff > history[-2] else 0
        if growth >= 3:
            raise GaugeDivergenceError(
                f"gauge inverse diverges at ||u0||_2 = {norm0:.3g}", norm0, it, history)
    raise GaugeDivergenceError(
        f"no convergence in {max_iter} sweeps at ||u0||_2 = {norm0:.3g}", norm0, max_iter, history)


# ---------------------------------------------------------------------------
# paralinearization and the renormalized equation
# ---------------------------------------------------------------------------

def localized_terms(u_vals, grid, P: DyadicPartition, j: int):
    """Four terms summing exactly to ``d_x Delta_j^+ (u^2)``.

    With ``u_< = S_{j-1} u`` and ``u_~^+ = P^+ sum_{|k-j|<=1} Delta_k u``:

    t1 = 2 u_< d_x u_j^+
    t2 = 2 [Delta_j^+, u_<] d_x u_~^+
    t3 = 2 Delta_j^+ ((d_x u_<) u_~^+)
    t4 = Delta_j^+ d_x (u^2 - 2 u_< u_~^+)      (high-high and remaining)
    """
    spec = _spec(u_vals)
    dj = _shell_plus_symbol(P, j)
    near = sum(P.delta_symbol(k) for k in range(j - 1, j + 2) if -1 <= k <= P.j_max)
    low = _vals(spec * P.s_symbol(j - 1))
    til = _vals(spec * near * (grid.sign == 1))
    dx_til = _dx(til, grid)
    uj_x = _dx(_vals(spec * dj), grid)
    t1 = 2 * padded_product(low, uj_x)
    t2 = 2 * (_mult(padded_product(low, dx_til), dj) - padded_product(low, uj_x))
    t3 = 2 * _mult(padded_product(_dx(low, grid), til), dj)
    rest = padded_product(u_vals, u_vals) - 2 * padded_product(low, til)
    t4 = _dx(_mult(rest, dj), grid)
    return t1, t2, t3, t4


def paralinearization(u_vals, grid, P: DyadicPartition, j: int):
    """``(f_{j,1}, f_{j,2}, f_{j,3})`` with sum ``-Delta_j^+(u u_x)``."""
    t1, t2, t3, t4 = localized_terms(u_vals, grid, P, j)
    return -0.5 * t1, -0.5 * (t2 + t3), -0.5 * t4


def paralinearization_check(u: Field, P: DyadicPartition | None = None) -> float:
    """Relative error of ``sum_j (t1+t2+t3+t4)`` against ``d_x P^+(u^2)``."""
    g = u.grid
    P = P or DyadicPartition(g)
    v = np.asarray(u.values, dtype=float)
    total = sum(sum(localized_terms(v, g, P, j)) for j in P.shells)
    ref = _dx(_mult(padded_product(v, v), g.sign == 1), g)
    den = np.linalg.norm(ref)
    return 0.0 if den == 0 else float(np.linalg.norm(total - ref) / den)


@dataclass
class ResidualReport:
    j: int
    residual: float
    dt: float
    lhs_norm: float
    rhs_norm: float
    refinement_factor: float | None = None


def renorm_residual(pair: GaugedPair, j: int, order: int = 4) -> ResidualReport:
    """Residual of the equation satisfied by ``w_j^+``.

    LHS = d_t w_j^+ - i d_x^2 w_j^+   (centered differences in t)
    RHS = S_{j-1}(F) (f_{j,1} + f_{j,2} + f_{j,3})
          + u_j^+ S_{j-1}(F d_x u^-)
          - 2i d_x S_{j-1}(F) d_x u_j^+

    where ``(d_t - i d_x^2) F = F d_x u^-`` follows from the equation for U.
    The first and last groups combine into the commutator
    ``(S_{j-1}(uF) - S_{j-1}(F) S_{j-1}(u)) d_x u_j^+``: the gauge removes the
    low-high derivative loss.  Returns ``|LHS - RHS| / max(|LHS|, |RHS|)``.
    """
    P = pair.partition
    g = P.grid
    if not 0 <= j <= P.j_max:
        raise ValueError(f"shell {j} not resolved on this grid (j_max = {P.j_max})")
    times = pair.times
    idx, dtw = time_derivative(pair.w_plus[j], times, order)
    wj = pair.w_plus[j][idx]
    lhs = dtw - 1j * _dx(wj, g, 2)
    u = np.asarray(pair.u.values, dtype=float)[idx]
    U = pair.antiderivative.U.values[idx]
    F = gauge_factor(U)
    Fs = _spec(F)
    SF = _vals(Fs * P.s_symbol(j - 1))
    spec = _spec(u)
    uj = _vals(spec * _shell_plus_symbol(P, j))
    f1, f2, f3 = paralinearization(u, g, P, j)
    dx_um = _dx(_vals(spec * (g.sign == -1)), g)
    rhs = (padded_product(SF, f1 + f2 + f3)
           + padded_product(uj, _mult(padded_product(F, dx_um), P.s_symbol(j - 1)))
           - 2j * padded_product(_dx(SF, g), _dx(uj, g)))
    nl, nr = np.linalg.norm(lhs), np.linalg.norm(rhs)
    den = max(nl, nr)
    res = 0.0 if den == 0 else float(np.linalg.norm(lhs - rhs) / den)
    scale = np.sqrt(g.dx * (times[1] - times[0]))
    return ResidualReport(j, res, float(times[1] - times[0]), float(nl * scale), float(nr * scale))


def write_residual_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("j", "residual", "dt", "refinement_factor"))
        for r in reports:
            rf = "" if r.refinement_factor is None else format(r.refinement_factor, ".17g")
            w.writerow((r.j, format(r.residual, ".17g"), format(r.dt, ".17g"), rf))
