"""Dyadic Littlewood-Paley multipliers, paraproducts and conormal blocks.

Shell calibration: with ``r = |xi| / unit`` (default ``unit = 2 pi / L``, so r
is the integer mode number) the low-pass ``S_j`` has symbol ``phi(r / 2^j)``
and ``Delta_j = S_{j+1} - S_j`` lives on ``2^j < r < 2^{j+2}``.  ``S_0`` is
also called ``Delta_{-1}``; ``S_j`` for negative j is zero.  The top shell
``Delta_{j_max}`` absorbs every mode above ``2^{j_max}`` so that the
decomposition is exact on the whole grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .spectral import Grid1D, Trajectory, apply_multiplier, dispersion_symbol, padded_product

__all__ = [
    "smooth_step",
    "cutoff_profile",
    "DyadicPartition",
    "SpaceTimeBlockIndex",
    "SpaceTimePartition",
    "interaction_profile",
    "from_interaction_profile",
]


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, exp(-1/x) glue between."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def cutoff_profile(r):
    """phi-hat: equal to 1 on |r| <= 1, 0 on |r| >= 2."""
    return 1.0 - smooth_step(np.abs(r) - 1.0)


class DyadicPartition:
    """The S_j / Delta_j family on one grid.

    Parameters
    ----------
    grid : Grid1D
    unit : float, optional
        Frequency that counts as ``r = 1``.  Defaults to ``2 pi / L``.
        Rescaling studies pass the unit of a reference grid so that shells
        keep their physical meaning.
    margin : int
        Gap K used for the "much lower than" cutoffs ``u_{<j} = S_{j-K}u``.
    """

    profile_name = "expglue-1-2"

    def __init__(self, grid: Grid1D, unit: float | None = None, margin: int = 3):
        self.grid = grid
        self.unit = 2 * np.pi / grid.length if unit is None else float(unit)
        self.margin = int(margin)
        r_nyq = (np.pi / grid.dx) / self.unit
        self.j_max = int(np.floor(np.log2(r_nyq) + 1e-9)) - 2
        if self.j_max < 0:
            raise ValueError("grid too coarse for a dyadic partition")
        self._r = np.abs(grid.xi) / self.unit

    @property
    def partition_id(self) -> str:
        return f"{self.profile_name}/unit={self.unit:.10g}/K={self.margin}"

    def __eq__(self, other):
        return (isinstance(other, DyadicPartition) and self.grid == other.grid
                and self.unit == other.unit and self.margin == other.margin)

    def __hash__(self):
        return hash((self.grid, self.unit, self.margin))

    # ---- symbols -------------------------------------------------------
    def s_symbol(self, j: int) -> np.ndarray:
        """phi-hat(r / 2^j).  For j < 0 and the default unit only the mean survives."""
        if j < 0:
            return cutoff_profile(self._r / 2.0 ** j)
        if j > self.j_max:
            return np.ones_like(self._r)
        return self._s_cache[j]

    @cached_property
    def _s_cache(self):
        return [cutoff_profile(self._r / 2.0 ** j) for j in range(self.j_max + 1)]

    def delta_symbol(self, j: int) -> np.ndarray:
        self._check_j(j)
        if j == -1:
            return self.s_symbol(0)
        return self.s_symbol(j + 1) - self.s_symbol(j)

    def delta_pm_symbol(self, j: int, sign: int) -> np.ndarray:
        return self.delta_symbol(j) * (self.grid.sign == sign)

    def shell_support(self, j: int) -> np.ndarray:
        """Boolean mask of modes where Delta_j is nonzero."""
        return self.delta_symbol(j) != 0

    def _check_j(self, j):
        if not -1 <= j <= self.j_max:
            raise ValueError(f"shell index {j} outside [-1, {self.j_max}]")

    @property
    def shells(self) -> range:
        return range(-1, self.j_max + 1)

    # ---- operators -----------------------------------------------------
    def s_j(self, obj, j: int):
        if j > self.j_max + 1:
            raise ValueError(f"S_{j} not defined, j_max = {self.j_max}")
        return apply_multiplier(obj, self.s_symbol(j))

    def delta_j(self, obj, j: int):
        return apply_multiplier(obj, self.delta_symbol(j))

    def delta_j_pm(self, obj, j: int, sign: int):
        return apply_multiplier(obj, self.delta_pm_symbol(j, sign), real=False)

    def low(self, obj, j: int):
        """u_{<j}: S_{j-K} u."""
        return self.s_j(obj, j - self.margin)

    def near(self, obj, j: int, sign: int | None = None, width: int = 1):
        """u_{~j}: sum of Delta_k over |k - j| <= width.

        With the default width Delta_j(near(u, j)) == Delta_j u.
        """
        sym = sum(self.delta_symbol(k) for k in range(j - width, j + width + 1)
                  if -1 <= k <= self.j_max)
        if sign is not None:
            sym = sym * (self.grid.sign == sign)
            return apply_multiplier(obj, sym, real=False)
        return apply_multiplier(obj, sym)

    def decompose(self, obj):
        """List of Delta_j obj for j = -1 .. j_max (sums back to obj)."""
        spec = obj.spectrum
        return [obj.with_spectrum(spec * self.delta_symbol(j)) for j in self.shells]

    # ---- bilinear ------------------------------------------------------
    def _check_pair(self, a, b):
        if a.grid != self.grid or b.grid != self.grid:
            raise ValueError("grid mismatch between operands and partition")

    def paraproduct(self, g, f):
        """T_g f = sum_j S_{j-1}(g) Delta_j(f)."""
        self._check_pair(g, f)
        gs, fs = g.spectrum, f.spectrum
        total = 0
        for j in range(1, self.j_max + 1):
            lo = g.with_spectrum(gs * self.s_symbol(j - 1)).values
            hi = f.with_spectrum(fs * self.delta_symbol(j)).values
            total = total + padded_product(lo, hi)
        if np.isscalar(total):
            total = np.zeros(np.broadcast_shapes(g.values.shape, f.values.shape))
        return f.with_values(total)

    def remainder(self, u, v):
        """R(u, v) = sum_{|j - j'| <= 1} Delta_j v Delta_{j'} u."""
        self._check_pair(u, v)
        us, vs = u.spectrum, v.spectrum
        total = 0
        for j in self.shells:
            near = sum(self.delta_symbol(i) for i in (j - 1, j, j + 1)
                       if -1 <= i <= self.j_max)
            a = v.with_spectrum(vs * self.delta_symbol(j)).values
            b = u.with_spectrum(us * near).values
            total = total + padded_product(a, b)
        return u.with_values(total)

    def commutator_s_j(self, g, f, j: int):
        """[S_j, g] f = S_j(g f) - g S_j f."""
        self._check_pair(g, f)
        sgf = self.s_j(f.with_values(padded_product(g.values, f.values)), j)
        return sgf.with_values(sgf.values - padded_product(g.values, self.s_j(f, j).values))

    def commutator_delta_j(self, g, f, j: int, sign: int | None = None):
        """[Delta_j, g] f (or [Delta_j^sign, g] f)."""
        self._check_pair(g, f)
        if sign is None:
            sym = self.delta_symbol(j)
        else:
            sym = self.delta_pm_symbol(j, sign)
        real = sign is None and g.is_real and f.is_real
        dgf = apply_multiplier(f.with_values(padded_product(g.values, f.values)), sym, real=real)
        df = apply_multiplier(f, sym, real=real)
        return dgf.with_values(dgf.values - padded_product(g.values, df.values))


# ---------------------------------------------------------------------------
# space-time blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimeBlockIndex:
    j: int
    k: int
    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.j < -1 or self.k < -1:
            raise ValueError("shell indices start at -1")


def interaction_profile(traj: Trajectory) -> np.ndarray:
    """Samples of ``S_0(-t) u(t)`` (complex, one row per time)."""
    th = dispersion_symbol(traj.grid)
    phase = np.exp(1j * np.outer(traj.times, th))
    return np.fft.ifft(traj.spectrum * phase, axis=-1) * traj.grid.n_points


def from_interaction_profile(grid: Grid1D, times, v: np.ndarray, real: bool = False) -> Trajectory:
    """Inverse of :func:`interaction_profile`: ``u(t) = S_0(t) v(t)``."""
    th = dispersion_symbol(grid)
    spec = np.fft.fft(v, axis=-1) * np.exp(-1j * np.outer(times, th))
    vals = np.fft.ifft(spec, axis=-1)
    return Trajectory(grid, times, vals.real if real else vals)


class SpaceTimePartition:
    """Conormal blocks Delta_{jk}^{+-} on a periodic time window.

    The modulation variable is ``sigma = tau + xi|xi|``: the distance of a
    space-time frequency to the surface carried by the free flow.  Blocks
    are evaluated in the interaction picture ``v = S_0(-t)u``, where sigma is
    just the time frequency, so the time grid only has to resolve
    modulations, not the full dispersion ``xi^2``.

    The time window is the first ``n_times`` samples of a trajectory whose
    last sample closes the period (``t_M = t_0 + period``).  The k shells use
    ``unit = 2 pi / period``.
    """

    def __init__(self, partition: DyadicPartition, n_times: int, period: float):
        self.space = partition
        self.n_times = int(n_times)
        self.period = float(period)
        self.tau = 2 * np.pi * np.fft.fftfreq(self.n_times, d=self.period / self.n_times)
        self.time_unit = 2 * np.pi / self.period
        r_nyq = self.n_times / 2
        self.k_max = int(np.floor(np.log2(r_nyq) + 1e-9)) - 2
        if self.k_max < 0:
            raise ValueError("too few time samples for conormal shells")
        self._rt = np.abs(self.tau) / self.time_unit
        self._sign_x = np.where(partition.grid.xi >= 0, 1, -1)
        self._sign_x[partition.grid.nyquist_index] = 0

    @classmethod
    def for_trajectory(cls, partition: DyadicPartition, traj: Trajectory):
        n = len(traj) - 1
        if n < 8:
            raise ValueError("trajectory too short for conormal shells")
        return cls(partition, n, traj.span)

    def k_symbol(self, k: int) -> np.ndarray:
        if not -1 <= k <= self.k_max:
            raise ValueError(f"conormal shell k={k} not resolved (k_max={self.k_max})")
        if k == -1:
            return cutoff_profile(self._rt)
        lo = cutoff_profile(self._rt / 2.0 ** k)
        hi = np.ones_like(self._rt) if k == self.k_max else cutoff_profile(self._rt / 2.0 ** (k + 1))
        return hi - lo

    def j_symbol(self, j: int, sign: int) -> np.ndarray:
        """Spatial shell times the half-line indicator; xi = 0 counts as '+'."""
        return self.space.delta_symbol(j) * (self._sign_x == sign)

    @property
    def k_shells(self) -> range:
        return range(-1, self.k_max + 1)

    def profile_spectrum(self, traj: Trajectory) -> np.ndarray:
        """2-D coefficients of the interaction profile, shape (n_times, N)."""
        if traj.grid != self.space.grid:
            raise ValueError("grid mismatch")
        if len(traj) - 1 != self.n_times:
            raise ValueError("trajectory length does not match the time partition")
        v = interaction_profile(traj)[:-1]
        return np.fft.fft2(v) / v.size

    def block(self, traj: Trajectory, index: SpaceTimeBlockIndex) -> Trajectory:
        """Delta_{jk}^{sign} of ``traj`` (complex trajectory)."""
        V = self.profile_spectrum(traj)
        return self._block_from_profile(traj, V, index)

    def _block_from_profile(self, traj, V, index):
        mult = np.outer(self.k_symbol(index.k), self.j_symbol(index.j, index.sign))
        v = np.fft.ifft2(V * mult) * V.size
        v = np.vstack([v, v[:1]])
        return from_interaction_profile(traj.grid, traj.times, v)

    def energies(self, traj: Trajectory) -> dict[int, np.ndarray]:
        """Squared L^2_{t,x} norms of every block.

        Returns ``{sign: E}`` with ``E[j + 1, k + 1] = ||Delta_{jk}^sign u||^2``.
        """
        V = self.profile_spectrum(traj)
        return self.energies_from_spectrum(V)

    def energies_from_spectrum(self, V: np.ndarray) -> dict[int, np.ndarray]:
        P = np.abs(V) ** 2
        K = np.stack([self.k_symbol(k) ** 2 for k in self.k_shells])
        scale = self.period * self.space.grid.length
        out = {}
        for s in (1, -1):
            J = np.stack([self.j_symbol(j, s) ** 2 for j in self.space.shells])
            out[s] = scale * (J @ P.T @ K.T)
        return out
