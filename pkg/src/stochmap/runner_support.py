"""Shared construction helpers for the batch runner and the verify suite."""
from __future__ import annotations

import numpy as np

from .config import ConfigError, RunConfig
from .grid import Grid, ScalarField, VectorField
from .models import TSWParams, TSWState
from .noise import ModeSpec, NoiseBasis, build_fourier_basis, ito_drift_correction


def smooth_scalar(grid: Grid, rng: np.random.Generator, offset: float = 0.0,
                  amplitude: float = 1.0, kmax: int = 2) -> ScalarField:
    """Band-limited random field: offset plus low-wavenumber cosines with
    seeded coefficients, scaled so the fluctuation maximum is ~amplitude."""
    coords = grid.coords()
    acc = np.zeros(grid.shape)
    ks = _wavevectors(grid.dim, kmax)
    coeffs = rng.normal(size=len(ks))
    phases = rng.uniform(0, 2 * np.pi, size=len(ks))
    for (k, c, ph) in zip(ks, coeffs, phases):
        kappa = 2.0 * np.pi * np.asarray(k) / np.asarray(grid.extents)
        phase = sum(kappa[p] * coords[p] for p in range(grid.dim))
        acc += c * np.cos(phase + ph)
    peak = np.abs(acc).max()
    if peak > 0:
        acc *= amplitude / peak
    return ScalarField(grid, offset + acc)


def smooth_vector(grid: Grid, rng: np.random.Generator, amplitude: float = 1.0,
                  kmax: int = 2) -> VectorField:
    return VectorField(
        grid,
        tuple(smooth_scalar(grid, rng, 0.0, amplitude, kmax) for _ in range(grid.dim)),
    )


def _wavevectors(dim: int, kmax: int) -> list[tuple[int, ...]]:
    ranges = [range(-kmax, kmax + 1)] * dim
    out = []
    for k in np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, dim):
        kt = tuple(int(x) for x in k)
        if all(x == 0 for x in kt):
            continue
        # one representative per +-k pair (cos covers both)
        if kt < tuple(-x for x in kt):
            continue
        out.append(kt)
    return out


def build_basis(grid: Grid, config: RunConfig) -> NoiseBasis:
    """Noise basis from the config's mode entries plus its drift selection."""
    base = build_fourier_basis(grid, config.modes)
    drift = config.drift
    if isinstance(drift, str):
        if drift == "zero":
            return base
        if drift == "lu":
            return base.with_drift(ito_drift_correction(base, 1.0))
        if drift == "salt":
            return base.with_drift(ito_drift_correction(base, 0.5))
        raise ConfigError(f"unknown drift selection {drift!r}")
    # explicit mode list: synthesise the drift like noise modes (no projection
    # unless asked)
    field = VectorField.zeros(grid)
    for i, table in enumerate(drift):
        spec_kw = dict(table)
        spec_kw.setdefault("solenoidal", False)
        try:
            spec = ModeSpec(
                k=tuple(spec_kw["k"]) if isinstance(spec_kw["k"], (list, tuple)) else (spec_kw["k"],),
                amplitude=tuple(spec_kw["amp"]) if isinstance(spec_kw["amp"], (list, tuple)) else (spec_kw["amp"],),
                solenoidal=bool(spec_kw["solenoidal"]),
                wave=str(spec_kw.get("wave", "cos")),
            )
        except (KeyError, ValueError) as err:
            raise ConfigError(f"drift mode #{i + 1}: {err}") from err
        helper = build_fourier_basis(grid, [spec])
        for mode in helper.modes:
            field = field + mode
    return base.with_drift(field)


def tsw_params(config: RunConfig) -> TSWParams:
    return TSWParams(
        kappa=config.tsw_kappa,
        h0=config.tsw_h0,
        theta0=config.tsw_theta0,
        fcor=config.tsw_fcor,
    )


def tsw_initial_state(grid: Grid, config: RunConfig, rng: np.random.Generator) -> TSWState:
    if config.tsw_ic == "rest":
        return TSWState(
            ScalarField.constant(grid, config.tsw_h0),
            ScalarField.constant(grid, config.tsw_theta0),
            VectorField.zeros(grid),
        )
    amp = config.tsw_ic_amplitude
    h = smooth_scalar(grid, rng, offset=config.tsw_h0, amplitude=amp)
    theta = smooth_scalar(grid, rng, offset=config.tsw_theta0, amplitude=amp)
    u = smooth_vector(grid, rng, amplitude=amp)
    return TSWState(h, theta, u)
