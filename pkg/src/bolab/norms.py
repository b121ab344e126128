"""Besov, mixed space-time, Y^s and conormal (X^{s,b,q}) norm estimators.

Weights: shell j contributes ``2^{s * max(j, 0)}``, so the low-frequency piece
S_0 = Delta_{-1} is unweighted and every norm is monotone in s.

Restriction norms X^{s,b,q}_T are defined by an infimum over extensions; here
the trajectory is multiplied by one fixed smooth taper and the global norm of
the product is reported.  That value is an upper bound for the restriction
norm on the central half of the window, never an estimate of the infimum.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .littlewood_paley import DyadicPartition, SpaceTimePartition, smooth_step
from .spectral import Field, Trajectory

__all__ = [
    "NormSpec",
    "Taper",
    "WindowedTrajectory",
    "besov_norm",
    "besov_sequence",
    "mixed_norm",
    "mixed_sequence",
    "xsbq_norm",
    "xsbq_energies",
    "y_norm",
    "y_constituents",
    "sobolev_norm",
    "lq_norm",
    "seq_norm",
    "interpolation_constant",
    "norm_row",
    "write_norm_csv",
    "NORM_CSV_HEADER",
]

FAMILIES = ("besov", "lb", "bl", "xsbq", "y", "sobolev")
INF = math.inf


@dataclass(frozen=True)
class NormSpec:
    """Parameters of one norm.

    ``lb`` is ``2^{js} ||Delta_j u||_{L^rho_t(L^p_x)}`` in l^q (time outside),
    ``bl`` is ``2^{js} ||Delta_j u||_{L^p_x(L^rho_t)}`` in l^q (space outside).
    """

    family: str
    s: float = 0.0
    b: float | None = None
    p: float = 2.0
    rho: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown norm family {self.family!r}")
        for name in ("p", "rho", "q"):
            v = getattr(self, name)
            if not 1 <= v <= INF:
                raise ValueError(f"exponent {name}={v} outside [1, inf]")
        if (self.b is not None) != (self.family == "xsbq"):
            raise ValueError("b is required for xsbq and only for xsbq")

    @classmethod
    def lb(cls, rho, s, p, q):
        return cls("lb", s=s, p=p, rho=rho, q=q)

    @classmethod
    def bl(cls, s, p, q, rho):
        return cls("bl", s=s, p=p, rho=rho, q=q)

    @classmethod
    def besov(cls, s, p, q):
        return cls("besov", s=s, p=p, q=q)

    @classmethod
    def xsbq(cls, s, b, q):
        return cls("xsbq", s=s, b=b, q=q)


# ---------------------------------------------------------------------------
# sequence helpers
# ---------------------------------------------------------------------------

def lq_norm(a, q, axis=None):
    a = np.abs(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0.0
    if q == INF:
        return np.max(a, axis=axis)
    return np.sum(a ** q, axis=axis) ** (1.0 / q)


def seq_norm(a, s, q):
    """``(sum_n (2^{s n} |a_n|)^q)^{1/q}`` for a sequence indexed from n = 0."""
    a = np.asarray(a, dtype=float)
    n = np.arange(a.size)
    return float(lq_norm(2.0 ** (s * n) * np.abs(a), q))


def interpolation_constant(s0, s, s1):
    """Constant C with ``|a|_{l^s_1} <= C |a|_{l^{s0}_inf}^th |a|_{l^{s1}_inf}^(1-th)``.

    Bound the sum by the s0 envelope below a cut N and by the s1 envelope above
    it; the two geometric tails give the constant for every choice of N.
    """
    if not s0 < s < s1:
        raise ValueError("need s0 < s < s1")
    return 1.0 / (1.0 - 2.0 ** (-(s - s0))) + 1.0 / (1.0 - 2.0 ** (-(s1 - s)))


def _weights(shells, s):
    return np.array([2.0 ** (s * max(j, 0)) for j in shells])


def _lp_space(values, p, dx, axis=-1):
    if p == INF:
        return np.max(np.abs(values), axis=axis)
    return (dx * np.sum(np.abs(values) ** p, axis=axis)) ** (1.0 / p)


def _lp_time(values, rho, times, axis=0):
    if rho == INF:
        return np.max(np.abs(values), axis=axis)
    return np.trapezoid(np.abs(values) ** rho, times, axis=axis) ** (1.0 / rho)


# ---------------------------------------------------------------------------
# tapers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Taper:
    """Smooth window: 0 on [0, edge*T], 1 on [T/4, 3T/4], C-infinity between."""

    edge: float = 1.0 / 16.0

    @property
    def taper_id(self) -> str:
        return f"expglue-edge{self.edge:g}-flat0.25"

    def __call__(self, t, t0, span):
        r = (np.asarray(t, dtype=float) - t0) / span
        up = smooth_step((r - self.edge) / (0.25 - self.edge))
        down = smooth_step((1.0 - self.edge - r) / (0.25 - self.edge))
        return up * down


class WindowedTrajectory:
    """A trajectory together with the taper used for restriction norms."""

    def __init__(self, trajectory: Trajectory, taper: Taper | None = None):
        self.trajectory = trajectory
        self.taper = taper or Taper()

    @property
    def span(self) -> float:
        return self.trajectory.span

    @cached_property
    def window(self) -> np.ndarray:
        tr = self.trajectory
        return self.taper(tr.times, tr.times[0], tr.span)

    @cached_property
    def tapered(self) -> Trajectory:
        tr = self.trajectory
        return tr.with_values(tr.values * self.window[:, None])

    @property
    def taper_id(self) -> str:
        return self.taper.taper_id


def _as_traj(obj) -> Trajectory:
    return obj.trajectory if isinstance(obj, WindowedTrajectory) else obj


def _partition(grid, partition):
    if partition is None:
        return DyadicPartition(grid)
    if partition.grid != grid:
        raise ValueError("partition built on a different grid")
    return partition


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def besov_sequence(field: Field, spec: NormSpec, partition=None) -> np.ndarray:
    """``2^{s max(j,0)} ||Delta_j f||_{L^p}`` for j = -1 .. j_max."""
    P = _partition(field.grid, partition)
    seq = [0.0 if d is None else _lp_space(d, spec.p, field.grid.dx)
           for _, d in _shell_values(field, P)]
    return _weights(P.shells, spec.s) * np.array(seq)


def besov_norm(field: Field, spec: NormSpec, partition=None) -> float:
    if spec.family != "besov":
        raise ValueError("besov_norm needs a besov NormSpec")
    return float(lq_norm(besov_sequence(field, spec, partition), spec.q))


def sobolev_norm(field: Field, s: float) -> float:
    """H^s norm with weight (1 + xi^2)^{s/2}."""
    w = (1.0 + field.grid.xi ** 2) ** s
    return float(np.sqrt(field.grid.length * np.sum(w * np.abs(field.spectrum) ** 2)))


def _shell_values(obj, P):
    """Yield ``(j, Delta_j obj)`` one shell at a time.

    Shells holding less than 1e-30 of the energy (round-off) give None.
    """
    spec = obj.spectrum
    power = np.abs(spec) ** 2
    if power.ndim > 1:
        power = power.sum(axis=tuple(range(power.ndim - 1)))
    total = power.sum()
    for j in P.shells:
        sym = P.delta_symbol(j)
        if np.sum(power * sym ** 2) <= 1e-30 * total:
            yield j, None
            continue
        yield j, obj.with_spectrum(spec * sym).values


def mixed_sequence(obj, spec: NormSpec, partition=None) -> np.ndarray:
    traj = _as_traj(obj)
    if spec.family not in ("lb", "bl"):
        raise ValueError("mixed_norm needs family 'lb' or 'bl'")
    P = _partition(traj.grid, partition)
    seq = []
    for _, d in _shell_values(traj, P):
        if d is None:
            seq.append(0.0)
        elif spec.family == "lb":
            inner = _lp_space(d, spec.p, traj.grid.dx, axis=-1)
            seq.append(_lp_time(inner, spec.rho, traj.times))
        else:
            inner = _lp_time(d, spec.rho, traj.times, axis=0)
            seq.append(_lp_space(inner, spec.p, traj.grid.dx))
    return _weights(P.shells, spec.s) * np.array(seq)


def mixed_norm(obj, spec: NormSpec, partition=None) -> float:
    """LB / BL norm of a trajectory over its own time interval (no taper)."""
    return float(lq_norm(mixed_sequence(obj, spec, partition), spec.q))


def xsbq_energies(wt: WindowedTrajectory, partition=None, stp=None):
    """Squared block norms ``||Delta_{jk}(chi u)||^2`` indexed [j+1, k+1]."""
    tr = wt.tapered
    P = _partition(tr.grid, partition)
    stp = stp or SpaceTimePartition.for_trajectory(P, tr)
    E = stp.energies(tr)
    return E[1] + E[-1], stp


def xsbq_norm(wt: WindowedTrajectory, spec: NormSpec, partition=None, stp=None,
              unresolved_tol: float = 1e-6, energies=None) -> float:
    """Upper surrogate for X^{s,b,q}_T: l^q of ``2^{js+kb} ||Delta_{jk}(chi u)||``.

    Mass in the top conormal shell (which absorbs everything the time grid
    cannot split) above ``unresolved_tol`` of the total triggers a warning.
    ``energies`` takes a precomputed ``xsbq_energies`` result.
    """
    if spec.family != "xsbq":
        raise ValueError("xsbq_norm needs an xsbq NormSpec")
    if not isinstance(wt, WindowedTrajectory):
        raise TypeError("xsbq_norm needs a WindowedTrajectory")
    E, stp = energies if energies is not None else xsbq_energies(wt, partition, stp)
    total = E.sum()
    if total == 0:
        return 0.0
    top = E[:, -1].sum() / total
    if top > unresolved_tol:
        warnings.warn(
            f"{top:.2e} of the mass sits in the unresolved conormal shell k={stp.k_max}",
            RuntimeWarning, stacklevel=2)
    wj = _weights(stp.space.shells, spec.s)
    wk = _weights(stp.k_shells, spec.b)
    return float(lq_norm(np.outer(wj, wk) * np.sqrt(E), spec.q))


def y_constituents(obj, s: float, partition=None) -> dict[str, float]:
    """The four norms whose intersection is Y^s."""
    specs = {
        "lb_inf_2_1": NormSpec.lb(INF, s, 2, 1),
        "lb_4_inf_1": NormSpec.lb(4, s, INF, 1),
        "bl_inf_1_2": NormSpec.bl(s + 0.5, INF, 1, 2),
        "bl_4_1_inf": NormSpec.bl(s - 0.25, 4, 1, INF),
    }
    return {name: mixed_norm(obj, sp, partition) for name, sp in specs.items()}


def y_norm(obj, s: float, partition=None) -> float:
    return max(y_constituents(obj, s, partition).values())


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

NORM_CSV_HEADER = ("family", "s", "b", "p", "rho", "q", "value", "taper_id", "grid_id")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


# exponents that enter each family; the others are written as blanks
_USED = {"besov": ("p", "q"), "lb": ("p", "rho", "q"), "bl": ("p", "rho", "q"),
         "xsbq": ("b", "q"), "y": (), "sobolev": ()}


def norm_row(spec: NormSpec, value: float, taper_id: str, grid_id: str) -> list[str]:
    used = _USED.get(spec.family, ("b", "p", "rho", "q"))
    ex = [_fmt(getattr(spec, k)) if k in used else "" for k in ("b", "p", "rho", "q")]
    return [spec.family, _fmt(spec.s), *ex, _fmt(value), taper_id, grid_id]


def write_norm_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NORM_CSV_HEADER)
        w.writerows(rows)
