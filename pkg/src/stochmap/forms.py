"""Closed-form perturbation increments for each tensor class.

Every operator returns the increment decomposed as

    drift * dt  +  sum_i noise_i * eta_i   (Ito bookkeeping, eta_i^2 -> dt)

together with the realised combination for the increment's actual eta draw.
Noise coefficients are evaluated at the input field (explicit in time).

`oracle_remap` is the formula-free cross-check: it remaps the field through
the sampled map itself, using cubic interpolation and finite-difference
Jacobians, and is what the convergence tests compare the closed forms
against.

Sign caution for n-vectors: `pushforward_nvector(g, d)` transports g along
d's *forward* map.  The mixed covariant/variant pair (and the shallow-water
density contrast built on it) transports the variant part along the
*inverse* map so that the n-form/n-vector pairing is preserved; that is
`pushforward_nvector(g, inverse_increment(d))`, which `perturb_mixed_pair`
does for you.

Internals work on raw arrays (these assemblies sit in the inner loop of
ensemble runs); only the returned parts are wrapped as fields.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from .calculus import derivative, sample_at
from .grid import Array, Grid, ScalarField, TensorClass, VectorField
from .maps import DiffeoIncrement, displacement_field, forward_map, inverse_increment, inverse_map

Fieldish = Union[ScalarField, VectorField]


class NFormMode(Enum):
    """Assembly of the n-form increment: literal coefficients or divergence
    (flux) form.  Flux differencing telescopes, so the domain integral of the
    realised increment vanishes to round-off."""

    POINTWISE = "pointwise"
    FLUX = "flux"


@dataclass(frozen=True)
class PerturbationResult:
    drift: Fieldish
    noise: tuple[Fieldish, ...]
    realized: Fieldish

    @classmethod
    def assemble(cls, drift: Fieldish, noise: tuple[Fieldish, ...], d: DiffeoIncrement) -> "PerturbationResult":
        realized = drift * d.dt
        for n_i, eta_i in zip(noise, d.increments.eta):
            realized = realized + n_i * float(eta_i)
        return cls(drift, tuple(noise), realized)


# ---------------------------------------------------------------------------
# raw-array helpers

def _d(v: Array, axis: int, grid: Grid) -> Array:
    h = grid.spacing[axis]
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2.0 * h)


def _grad(v: Array, grid: Grid) -> list[Array]:
    return [_d(v, p, grid) for p in range(grid.dim)]


def _hessian(grads: list[Array], grid: Grid) -> list[list[Array]]:
    dim = grid.dim
    hess: list[list[Array]] = [[None] * dim for _ in range(dim)]  # type: ignore[list-item]
    for p in range(dim):
        for q in range(p, dim):
            hess[p][q] = _d(grads[p], q, grid)
            hess[q][p] = hess[p][q]
    return hess


def _mode_arrays(d: DiffeoIncrement) -> list[list[Array]]:
    return [[c.values for c in e.components] for e in d.basis.modes]


def _drift_arrays(d: DiffeoIncrement) -> list[Array]:
    return [c.values for c in d.basis.drift.components]


def _div(vecs: list[Array], grid: Grid) -> Array:
    out = _d(vecs[0], 0, grid)
    for p in range(1, grid.dim):
        out = out + _d(vecs[p], p, grid)
    return out


def _mode_quadratic(modes: list[list[Array]], hess: list[list[Array]], grid: Grid) -> Array:
    """(1/2) sum_i e_i^p e_i^q d_p d_q f (symmetric pairs folded)."""
    acc = np.zeros(grid.shape)
    for e in modes:
        for p in range(grid.dim):
            acc += 0.5 * e[p] * e[p] * hess[p][p]
            for q in range(p + 1, grid.dim):
                acc += e[p] * e[q] * hess[p][q]
    return acc


def _jacobian_wedge(e: list[list[Array] | Array], grid: Grid, de: list[list[Array]], dive: Array) -> Array:
    """J = (div e)^2 - sum_pq (d_p e^q)(d_q e^p), identically zero in 1D."""
    acc = dive * dive
    for p in range(grid.dim):
        for q in range(grid.dim):
            acc = acc - de[p][q] * de[q][p]
    return acc


def volume_jacobian_coefficient(e: VectorField) -> ScalarField:
    """Quadratic wedge term of the volume multiplier for one mode field."""
    grid = e.grid
    ev = [c.values for c in e.components]
    de = [[_d(ev[q], p, grid) for q in range(grid.dim)] for p in range(grid.dim)]
    dive = sum(de[p][p] for p in range(grid.dim))
    return ScalarField(grid, _jacobian_wedge(ev, grid, de, dive))


def _assemble(grid: Grid, drift: Array, noise: list[Array], d: DiffeoIncrement) -> PerturbationResult:
    realized = drift * d.dt
    for nv, eta in zip(noise, d.increments.eta):
        realized = realized + nv * float(eta)
    return PerturbationResult(
        ScalarField(grid, drift),
        tuple(ScalarField(grid, nv) for nv in noise),
        ScalarField(grid, realized),
    )


def _assemble_vector(grid: Grid, drift: list[Array], noise: list[list[Array]], d: DiffeoIncrement) -> PerturbationResult:
    realized = [dv * d.dt for dv in drift]
    for nvs, eta in zip(noise, d.increments.eta):
        for j in range(grid.dim):
            realized[j] = realized[j] + nvs[j] * float(eta)
    return PerturbationResult(
        VectorField.from_arrays(grid, drift),
        tuple(VectorField.from_arrays(grid, nvs) for nvs in noise),
        VectorField.from_arrays(grid, realized),
    )


# ---------------------------------------------------------------------------
# the five tensor classes

def perturb_0form(f: ScalarField, d: DiffeoIncrement) -> PerturbationResult:
    """Scalar transported as a plain function: advection plus mode diffusion.

    drift   = a.grad f + (1/2) sum_i e_i^p e_i^q d_p d_q f
    noise_i = e_i.grad f
    """
    grid = f.grid
    fv = f.values
    grads = _grad(fv, grid)
    hess = _hessian(grads, grid)
    modes = _mode_arrays(d)
    drift = _mode_quadratic(modes, hess, grid)
    if d.basis.has_drift:
        a = _drift_arrays(d)
        for p in range(grid.dim):
            drift = drift + a[p] * grads[p]
    noise = [sum(e[p] * grads[p] for p in range(grid.dim)) for e in modes]
    return _assemble(grid, drift, noise, d)


def perturb_volume_multiplier(d: DiffeoIncrement) -> PerturbationResult:
    """Multiplier increment picked up by the volume element under the map.

    drift = div a + (1/2) sum_i J_i,  noise_i = div e_i.  The realised field
    is multiplier - 1; it vanishes identically when the basis satisfies the
    incompressibility pair div e_i = 0 and d_p d_q (sum_i e_i^p e_i^q) = 0.
    """
    grid = d.grid
    modes = _mode_arrays(d)
    drift = _div(_drift_arrays(d), grid)
    noise = []
    for e in modes:
        de = [[_d(e[q], p, grid) for q in range(grid.dim)] for p in range(grid.dim)]
        dive = sum(de[p][p] for p in range(grid.dim))
        drift = drift + 0.5 * _jacobian_wedge(e, grid, de, dive)
        noise.append(dive)
    return _assemble(grid, drift, noise, d)


def perturb_nform(f: ScalarField, d: DiffeoIncrement, mode: NFormMode = NFormMode.FLUX) -> PerturbationResult:
    """Density-like scalar (coefficient of the full volume form).

    Pointwise assembly is the literal coefficient formula

      drift   = (div a + (1/2) J) f + (a^p + e^p div e) d_p f
                + (1/2) e e : grad grad f
      noise_i = div e_i f + e_i.grad f

    while flux assembly writes the same increment as a discrete divergence,
    so that integrate(realized) telescopes to zero for every realisation.
    """
    grid = f.grid
    fv = f.values
    modes = _mode_arrays(d)
    a = _drift_arrays(d)
    grads = _grad(fv, grid)
    if mode is NFormMode.POINTWISE:
        hess = _hessian(grads, grid)
        drift = _div(a, grid) * fv + _mode_quadratic(modes, hess, grid)
        for p in range(grid.dim):
            drift = drift + a[p] * grads[p]
        noise = []
        for e in modes:
            de = [[_d(e[q], p, grid) for q in range(grid.dim)] for p in range(grid.dim)]
            dive = sum(de[p][p] for p in range(grid.dim))
            drift = drift + 0.5 * _jacobian_wedge(e, grid, de, dive) * fv
            for p in range(grid.dim):
                drift = drift + e[p] * dive * grads[p]
            noise.append(dive * fv + sum(e[p] * grads[p] for p in range(grid.dim)))
        return _assemble(grid, drift, noise, d)

    # flux form: drift = d_p [ F^p f + (1/2) sum_i e_i^p (e_i . grad f) ]
    brackets = []
    for p in range(grid.dim):
        brackets.append(a[p] * fv)
    for e in modes:
        de = [[_d(e[q], p, grid) for q in range(grid.dim)] for p in range(grid.dim)]
        dive = sum(de[p][p] for p in range(grid.dim))
        egradf = sum(e[q] * grads[q] for q in range(grid.dim))
        for p in range(grid.dim):
            adv_p = sum(de[q][p] * e[q] for q in range(grid.dim))
            brackets[p] = brackets[p] + 0.5 * (e[p] * dive - adv_p) * fv + 0.5 * e[p] * egradf
    drift = sum(_d(brackets[p], p, grid) for p in range(grid.dim))
    noise = [sum(_d(e[p] * fv, p, grid) for p in range(grid.dim)) for e in modes]
    return _assemble(grid, drift, noise, d)


def perturb_1form(v: VectorField, d: DiffeoIncrement) -> PerturbationResult:
    """Covector components f_j dx^j (momentum-like velocity representation).

    drift^j   = a.grad v^j + (1/2) e e : grad grad v^j
                + (d_j a^p) v^p + sum_i (d_j e_i^p) (e_i . grad v^p)
    noise_i^j = e_i.grad v^j + (d_j e_i^p) v^p
    """
    grid = v.grid
    if grid.dim < 2:
        raise ValueError("1-form transport needs dim >= 2")
    modes = _mode_arrays(d)
    a = _drift_arrays(d)
    vv = [c.values for c in v.components]
    grads = [_grad(c, grid) for c in vv]      # grads[p][q] = d_q v^p
    hess = [_hessian(g, grid) for g in grads]
    da = [[_d(a[p], j, grid) for p in range(grid.dim)] for j in range(grid.dim)]
    dmodes = [[[_d(e[p], j, grid) for p in range(grid.dim)] for j in range(grid.dim)] for e in modes]
    drift = []
    for j in range(grid.dim):
        dj = _mode_quadratic(modes, hess[j], grid)
        for p in range(grid.dim):
            dj = dj + a[p] * grads[j][p] + da[j][p] * vv[p]
        for e, de in zip(modes, dmodes):
            for p in range(grid.dim):
                adv = sum(e[q] * grads[p][q] for q in range(grid.dim))
                dj = dj + de[j][p] * adv
        drift.append(dj)
    noise = []
    for e, de in zip(modes, dmodes):
        comps = []
        for j in range(grid.dim):
            nj = sum(e[p] * grads[j][p] for p in range(grid.dim))
            nj = nj + sum(de[j][p] * vv[p] for p in range(grid.dim))
            comps.append(nj)
        noise.append(comps)
    return _assemble_vector(grid, drift, noise, d)


def pushforward_nvector(g: ScalarField, d: DiffeoIncrement) -> PerturbationResult:
    """Density-dual scalar (coefficient of the full multivector), transported
    along d's forward map.

    drift   = (div a + (1/2) J) g
              + (-(a^p + e^p div e) + (e.grad) e^p) d_p g + (1/2) e e : grad grad g
    noise_i = div e_i g - e_i.grad g

    The divergence and advection velocities differ, and the noise sign is
    opposite to the 0-form case.
    """
    grid = g.grid
    gv = g.values
    modes = _mode_arrays(d)
    a = _drift_arrays(d)
    grads = _grad(gv, grid)
    hess = _hessian(grads, grid)
    drift = _div(a, grid) * gv + _mode_quadratic(modes, hess, grid)
    for p in range(grid.dim):
        drift = drift - a[p] * grads[p]
    noise = []
    for e in modes:
        de = [[_d(e[q], p, grid) for q in range(grid.dim)] for p in range(grid.dim)]
        dive = sum(de[p][p] for p in range(grid.dim))
        drift = drift + 0.5 * _jacobian_wedge(e, grid, de, dive) * gv
        for p in range(grid.dim):
            adv_p = sum(de[q][p] * e[q] for q in range(grid.dim))
            drift = drift + (adv_p - e[p] * dive) * grads[p]
        noise.append(dive * gv - sum(e[p] * grads[p] for p in range(grid.dim)))
    return _assemble(grid, drift, noise, d)


def perturb_mixed_pair(
    f_nform: ScalarField,
    g_nvector: ScalarField,
    d: DiffeoIncrement,
    mode: NFormMode = NFormMode.FLUX,
) -> tuple[PerturbationResult, PerturbationResult]:
    """Covariant/variant pair sharing one increment: the n-form is pulled back
    through the map, the n-vector is pushed forward through its inverse, so
    the pointwise pairing f*g is preserved to the scheme's order."""
    if f_nform.grid != g_nvector.grid:
        raise ValueError("mixed pair must live on one grid")
    if f_nform.grid != d.grid:
        raise ValueError("mixed pair and increment must share the grid")
    return (
        perturb_nform(f_nform, d, mode),
        pushforward_nvector(g_nvector, inverse_increment(d)),
    )


# ---------------------------------------------------------------------------
# direct remapping oracle

def map_jacobian(d: DiffeoIncrement) -> list[list[ScalarField]]:
    """Finite-difference Jacobian J[j][p] = d_j T^p of the forward map at the nodes."""
    grid = d.grid
    disp = displacement_field(d)
    jac: list[list[ScalarField]] = []
    for j in range(grid.dim):
        row = []
        for p in range(grid.dim):
            entry = derivative(disp.components[p], j)
            if j == p:
                entry = entry + 1.0
            row.append(entry)
        jac.append(row)
    return jac


def jacobian_determinant(d: DiffeoIncrement) -> ScalarField:
    grid = d.grid
    j = map_jacobian(d)
    if grid.dim == 1:
        det = j[0][0].values
    elif grid.dim == 2:
        det = j[0][0].values * j[1][1].values - j[0][1].values * j[1][0].values
    else:
        det = (
            j[0][0].values * (j[1][1].values * j[2][2].values - j[1][2].values * j[2][1].values)
            - j[0][1].values * (j[1][0].values * j[2][2].values - j[1][2].values * j[2][0].values)
            + j[0][2].values * (j[1][0].values * j[2][1].values - j[1][1].values * j[2][0].values)
        )
    return ScalarField(grid, det)


def oracle_remap(theta_class: TensorClass, fields, d: DiffeoIncrement):
    """Remap fields through the sampled map itself (no closed-form algebra).

    0-form:      f o T
    n-form:      (f o T) det J_T                (Jacobian at the source point)
    volume form: det J_T
    1-form:      (f^p o T) d_j T^p
    n-vector:    (g o T^{-1}) (det J_T o T^{-1})
    mixed pair:  (n-form remap of f, n-vector remap of g)
    """
    grid = d.grid
    pts = grid.points()
    if theta_class is TensorClass.ZERO_FORM:
        fwd = forward_map(d, pts)
        return fields.with_values(sample_at(fields, fwd).reshape(grid.shape))
    if theta_class is TensorClass.VOLUME_FORM:
        return jacobian_determinant(d)
    if theta_class is TensorClass.N_FORM:
        fwd = forward_map(d, pts)
        det = jacobian_determinant(d)
        return fields.with_values(sample_at(fields, fwd).reshape(grid.shape) * det.values)
    if theta_class is TensorClass.ONE_FORM:
        fwd = forward_map(d, pts)
        jac = map_jacobian(d)
        sampled = [sample_at(c, fwd).reshape(grid.shape) for c in fields.components]
        comps = []
        for j in range(grid.dim):
            acc = np.zeros(grid.shape)
            for p in range(grid.dim):
                acc += sampled[p] * jac[j][p].values
            comps.append(acc)
        return VectorField.from_arrays(grid, comps)
    if theta_class is TensorClass.N_VECTOR:
        inv = inverse_map(d, pts)
        det = jacobian_determinant(d)
        gvals = sample_at(fields, inv).reshape(grid.shape)
        dvals = sample_at(det, inv).reshape(grid.shape)
        return fields.with_values(gvals * dvals)
    if theta_class is TensorClass.MIXED_PAIR:
        f, g = fields
        return (
            oracle_remap(TensorClass.N_FORM, f, d),
            oracle_remap(TensorClass.N_VECTOR, g, d),
        )
    raise ValueError(f"unsupported tensor class {theta_class}")
