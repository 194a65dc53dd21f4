"""Noise bases and Brownian increments driving the random maps.

A basis holds the deterministic drift ``a`` and the mode fields ``e_i`` of the
per-step map x -> x + a*dt + sum_i e_i * deta_i.  Modes here are synthesised
from a finite Fourier dictionary, which keeps derivatives analytic for the
test oracles and makes divergence-free projection exact.

Divergence-free means divergence-free *for the discrete operator*: wave
amplitudes are projected orthogonal to the modified wavevector
sin(kappa_p h_p)/h_p (the centered-difference symbol), so the measured
divergence vanishes to round-off, not just to O(h^2).  For axis-aligned
wavevectors this coincides with the analytic projection.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calculus import derivative, divergence
from .grid import Array, Grid, VectorField


@dataclass(frozen=True)
class ModeSpec:
    """One Fourier entry: integer wavevector (cycles per domain), amplitude
    vector, solenoidal flag, and wave type ("sin", "cos" or "both")."""

    k: tuple[int, ...]
    amplitude: tuple[float, ...]
    solenoidal: bool = True
    wave: str = "sin"

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(self.k))
        object.__setattr__(self, "amplitude", tuple(float(a) for a in self.amplitude))
        if self.wave not in ("sin", "cos", "both"):
            raise ValueError(f"wave must be sin, cos or both, got {self.wave!r}")
        for kk in self.k:
            if float(kk) != int(kk):
                raise ValueError(f"wavevector entries must be integers (cycles per domain), got {self.k}")
        object.__setattr__(self, "k", tuple(int(kk) for kk in self.k))


@dataclass(frozen=True)
class NoiseBasis:
    """Mode fields e_i and drift a on one grid."""

    grid: Grid
    modes: tuple[VectorField, ...]
    drift: VectorField
    divergence_free: bool = False

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        for e in self.modes:
            if e.grid != self.grid:
                raise ValueError("all modes must live on the basis grid")
        if self.drift.grid != self.grid:
            raise ValueError("drift must live on the basis grid")
        if self.divergence_free:
            for i, e in enumerate(self.modes):
                div_max = float(np.abs(divergence(e).values).max())
                scale = max(e.max_norm(), 1.0)
                if div_max > 1e-12 * scale:
                    raise ValueError(f"mode {i} claims divergence-free but max|div| = {div_max:.3e}")
        has_drift = any(np.any(c.values) for c in self.drift.components)
        object.__setattr__(self, "_has_drift", has_drift)

    @property
    def has_drift(self) -> bool:
        return self._has_drift  # type: ignore[attr-defined]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def is_null(self) -> bool:
        """No modes and identically-zero drift: perturbation degenerates to nothing."""
        return self.n_modes == 0 and not self.has_drift

    def with_drift(self, drift: VectorField) -> "NoiseBasis":
        return NoiseBasis(self.grid, self.modes, drift, self.divergence_free)


@dataclass(frozen=True)
class BrownianIncrements:
    """One draw of the mode increments: dt plus eta_i ~ N(0, dt)."""

    dt: float
    eta: Array
    generator_state: str | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        eta = np.asarray(self.eta, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "eta", eta)

    @property
    def n_modes(self) -> int:
        return self.eta.shape[0]


def modified_wavevector(grid: Grid, k: Sequence[int]) -> Array:
    """Symbol of the centered difference on the wave exp(i kappa.x)."""
    kappa = 2.0 * np.pi * np.asarray(k, dtype=np.float64) / np.asarray(grid.extents)
    h = np.asarray(grid.spacing)
    return np.sin(kappa * h) / h


def fourier_mode_field(grid: Grid, spec: ModeSpec, wave: str) -> VectorField:
    """Realise one wave of a ModeSpec as a vector field on the grid."""
    kappa = 2.0 * np.pi * np.asarray(spec.k, dtype=np.float64) / np.asarray(grid.extents)
    amp = np.asarray(spec.amplitude, dtype=np.float64)
    if amp.shape != (grid.dim,):
        raise ValueError(f"amplitude must have {grid.dim} entries")
    if spec.solenoidal:
        ktil = modified_wavevector(grid, spec.k)
        k2 = float(ktil @ ktil)
        if k2 > 0:
            amp = amp - (amp @ ktil) / k2 * ktil
            if float(np.abs(amp).max()) < 1e-15:
                raise ValueError(f"amplitude of mode k={spec.k} is parallel to the wavevector; "
                                 "solenoidal projection leaves a zero field")
    coords = grid.coords()
    phase = sum(kappa[p] * coords[p] for p in range(grid.dim))
    osc = np.sin(phase) if wave == "sin" else np.cos(phase)
    return VectorField.from_arrays(grid, [amp[p] * osc for p in range(grid.dim)])


def build_fourier_basis(grid: Grid, mode_specs: Sequence[ModeSpec],
                        drift: VectorField | None = None) -> NoiseBasis:
    """Assemble a NoiseBasis from Fourier mode specs (drift defaults to zero).

    A spec with ``wave="both"`` contributes a sin mode and a cos mode.  The
    zero wavevector yields a constant field (once, whatever the wave type).
    """
    modes: list[VectorField] = []
    all_solenoidal = True
    for spec in mode_specs:
        if all(kk == 0 for kk in spec.k):
            modes.append(VectorField.constant(grid, spec.amplitude))
            continue
        waves = ("sin", "cos") if spec.wave == "both" else (spec.wave,)
        for w in waves:
            modes.append(fourier_mode_field(grid, spec, w))
        all_solenoidal = all_solenoidal and spec.solenoidal
    if drift is None:
        drift = VectorField.zeros(grid)
    flag = all_solenoidal and len(mode_specs) > 0
    return NoiseBasis(grid, tuple(modes), drift, divergence_free=flag)


def sample_increments(m: int, dt: float, rng: np.random.Generator) -> BrownianIncrements:
    """Draw eta_i ~ N(0, dt) for i = 1..m; deterministic given the rng state."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    state = repr(rng.bit_generator.state)
    eta = rng.normal(0.0, np.sqrt(dt), size=m)
    return BrownianIncrements(dt=dt, eta=eta, generator_state=state)


def ito_drift_correction(basis: NoiseBasis, factor: float = 1.0) -> VectorField:
    """factor * sum_i (e_i . grad) e_i, the drift relating the map conventions.

    factor 1 gives the drift that makes the map reproduce transport-noise
    equations written with the Ito advecting velocity; factor 1/2 gives the
    Stratonovich-corrected drift.
    """
    grid = basis.grid
    comps = [np.zeros(grid.shape) for _ in range(grid.dim)]
    for e in basis.modes:
        for p in range(grid.dim):
            acc = np.zeros(grid.shape)
            for q in range(grid.dim):
                acc += e.components[q].values * derivative(e.components[p], q).values
            comps[p] += acc
    return VectorField.from_arrays(grid, [factor * c for c in comps])
