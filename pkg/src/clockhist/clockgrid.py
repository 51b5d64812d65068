"""Finite periodic clock lattice: time/frequency bases and envelope states.

Discretization convention: the N clock basis vectors are orthonormal,
<t_k|t_l> = delta_kl, with t_k = t_min + k*dt on the half-open window
[t_min, t_max).  Continuum formulas map onto the lattice via
|t> <-> |t_k>/sqrt(dt) and integral dt <-> sum_k dt, so every stored vector
stays normalizable.  The frequency lattice is the signed set
omega_j = 2*pi*j/(N*dt), j = -N/2 .. N/2-1, realized spectrally through the
unitary DFT; the clock is therefore periodic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GuardError
from .tensor import Operator, SpaceLabel, StateVector

ENVELOPE_NORM_TOL = 1e-12


class TruncationWarning(UserWarning):
    """An envelope does not comfortably fit inside the clock window."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ClockGrid:
    """Uniform time lattice of N = power-of-two samples on [t_min, t_max)."""

    n: int
    t_min: float
    t_max: float

    def __post_init__(self):
        if not isinstance(self.n, int) or not _is_power_of_two(self.n) or self.n < 8:
            raise ValueError(f"N must be a power of two >= 8, got {self.n}")
        if not self.t_max > self.t_min:
            raise ValueError(f"need t_max > t_min, got [{self.t_min}, {self.t_max})")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.n

    @cached_property
    def times(self) -> np.ndarray:
        t = self.t_min + self.dt * np.arange(self.n)
        t.setflags(write=False)
        return t

    @cached_property
    def omegas(self) -> np.ndarray:
        """Frequency lattice in signed order, j = -N/2 .. N/2-1."""
        j = np.arange(-self.n // 2, self.n // 2)
        w = 2.0 * np.pi * j / (self.n * self.dt)
        w.setflags(write=False)
        return w

    @cached_property
    def omegas_fft_order(self) -> np.ndarray:
        w = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dt)
        w.setflags(write=False)
        return w

    @property
    def label(self) -> SpaceLabel:
        return SpaceLabel("T", self.n)

    def contains(self, t: float) -> bool:
        return self.t_min <= t < self.t_max

    def nearest_index(self, t: float) -> int:
        """Snap a time inside the window to its nearest lattice index."""
        if not (self.t_min - 0.5 * self.dt <= t < self.t_max):
            raise ValueError(f"time {t} outside window [{self.t_min}, {self.t_max})")
        return min(int(round((t - self.t_min) / self.dt)), self.n - 1)

    def omega_value(self, j: int) -> float:
        if not -self.n // 2 <= j < self.n // 2:
            raise ValueError(f"frequency index {j} outside [-{self.n//2}, {self.n//2})")
        return 2.0 * np.pi * j / (self.n * self.dt)


def make_grid(n: int, t_min: float, t_max: float) -> ClockGrid:
    return ClockGrid(n, float(t_min), float(t_max))


def commensurate_grid(n: int, energy: float, periods: int = 1, t_min: float = 0.0) -> ClockGrid:
    """Grid whose window spans an integer number of 2*pi/|energy| periods.

    With such a window the frequency +-energy falls exactly on the lattice,
    which makes frequency conditioning an exact dichotomy.
    """
    if energy == 0:
        raise ValueError("energy must be nonzero")
    if periods < 1:
        raise ValueError("periods must be >= 1")
    span = 2.0 * np.pi * periods / abs(energy)
    return make_grid(n, t_min, t_min + span)


@dataclass(frozen=True)
class Envelope:
    """Unit-norm clock weights phi_k (the amplitude that the clock reads t_k)."""

    grid: ClockGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=complex)
        if w.shape != (self.grid.n,):
            raise ValueError(f"envelope length {w.shape} != grid size {self.grid.n}")
        nrm = np.linalg.norm(w)
        if abs(nrm - 1.0) > ENVELOPE_NORM_TOL:
            raise ValueError(f"envelope norm {nrm} != 1 beyond {ENVELOPE_NORM_TOL}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def is_flat(self) -> bool:
        return bool(np.max(np.abs(self.weights - self.weights[0])) <= 1e-12)

    def clock_state(self) -> StateVector:
        return StateVector((self.grid.label,), self.weights)


def flat_envelope(grid: ClockGrid) -> Envelope:
    """Equal weight on every lattice point (the regularized all-times state)."""
    return Envelope(grid, np.full(grid.n, 1.0 / math.sqrt(grid.n), dtype=complex))


def gaussian_envelope(grid: ClockGrid, n: float) -> Envelope:
    """Gaussian weights phi_k proportional to exp(-t_k^2 / n), renormalized.

    Warns when the window does not contain +-3 amplitude standard deviations
    (sigma = sqrt(n/2)) around t = 0; raises if the sampled weights underflow
    to zero entirely.
    """
    if n <= 0:
        raise ValueError(f"width parameter must be positive, got {n}")
    half_support = 3.0 * math.sqrt(n / 2.0)
    if grid.t_min > -half_support or grid.t_max < half_support:
        warnings.warn(
            f"window [{grid.t_min}, {grid.t_max}) truncates the Gaussian envelope "
            f"(needs +-{half_support:.3g} around 0)",
            TruncationWarning,
            stacklevel=2,
        )
    w = np.exp(-grid.times.astype(complex) ** 2 / n)
    nrm = np.linalg.norm(w)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise GuardError("Gaussian envelope underflowed to zero on this window")
    return Envelope(grid, w / nrm)


def time_operator(grid: ClockGrid) -> Operator:
    """Diagonal clock-reading operator diag(t_0 .. t_{N-1})."""
    return Operator((grid.label,), np.diag(grid.times.astype(complex)))


def frequency_vector(grid: ClockGrid, j: int) -> StateVector:
    """Orthonormal frequency basis column: components e^{i omega_j t_k}/sqrt(N)."""
    w = grid.omega_value(j)
    amps = np.exp(1j * w * grid.times) / math.sqrt(grid.n)
    return StateVector((grid.label,), amps)


def omega_operator(grid: ClockGrid) -> Operator:
    """Clock frequency operator, diagonal in the DFT basis with the signed lattice."""
    cols = np.exp(1j * np.outer(grid.times, grid.omegas)) / math.sqrt(grid.n)
    mat = (cols * grid.omegas) @ cols.conj().T
    return Operator((grid.label,), mat)


def apply_omega(grid: ClockGrid, values: np.ndarray) -> np.ndarray:
    """Apply the frequency operator along axis 0 of ``values`` via the FFT.

    Equivalent to contracting with the dense :func:`omega_operator` matrix, but
    O(N log N) and never materializes it.
    """
    values = np.asarray(values, dtype=complex)
    if values.shape[0] != grid.n:
        raise ValueError(f"axis 0 has length {values.shape[0]}, expected {grid.n}")
    spec = np.fft.fft(values, axis=0)
    shape = (grid.n,) + (1,) * (values.ndim - 1)
    spec *= grid.omegas_fft_order.reshape(shape)
    return np.fft.ifft(spec, axis=0)


def spectral_derivative(grid: ClockGrid, values: np.ndarray) -> np.ndarray:
    """d/dt along axis 0, computed as i * Omega (exact for lattice frequencies)."""
    return 1j * apply_omega(grid, values)


def commutator_floor(grid: ClockGrid, n: float, frequencies=(0.0,)) -> float:
    """Residual scale of the canonical commutation relation on this grid.

    Measures max ||([T, Omega] - i) g|| / ||g|| over Gaussian test vectors of
    width parameter ``n`` (optionally modulated by e^{i f t}).  Exact canonical
    commutation is impossible on a finite lattice; this number is the honest
    floor against which constraint residuals should be compared.
    """
    t = grid.times
    out = 0.0
    for f in frequencies:
        g = np.exp(-t.astype(complex) ** 2 / n) * np.exp(1j * f * t)
        g /= np.linalg.norm(g)
        r = t * apply_omega(grid, g) - apply_omega(grid, t * g) - 1j * g
        out = max(out, float(np.linalg.norm(r)))
    return out
