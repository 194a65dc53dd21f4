"""Full SPDE assembly: deterministic right-hand side plus map perturbation.

The forecast step is literal two-phase: an explicit Euler update with the
deterministic right-hand side, then the tensor-class perturbation of the
updated fields with one freshly sampled map increment shared by every state
variable.  With an empty noise basis the second phase is skipped entirely,
so trajectories are bit-identical to the plain deterministic Euler solver.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .calculus import derivative, second_derivative
from .forms import (
    NFormMode,
    PerturbationResult,
    perturb_0form,
    perturb_1form,
    perturb_nform,
    pushforward_nvector,
)
from .grid import Grid, ScalarField, TensorClass, VectorField
from .maps import Convention, DiffeoIncrement, inverse_increment, make_increment
from .noise import NoiseBasis, ito_drift_correction

Fieldish = Union[ScalarField, VectorField]
State = dict[str, Fieldish]


class StabilityError(RuntimeError):
    """Explicit step size violates the advective/diffusive stability bound."""


class PositivityError(RuntimeError):
    """A sign-definite state variable lost positivity; aborting, not clipping."""


# ---------------------------------------------------------------------------
# generic two-step forecast

def check_stability(grid: Grid, dt: float, velocity_scale: float, diffusivity: float,
                    c_stab: float = 1.0, step: int | None = None) -> None:
    h = grid.min_spacing
    limit = np.inf
    if diffusivity > 0:
        limit = min(limit, h * h / (2.0 * grid.dim * diffusivity))
    if velocity_scale > 0:
        limit = min(limit, h / velocity_scale)
    if dt > c_stab * limit:
        where = "" if step is None else f" at step {step}"
        raise StabilityError(
            f"dt = {dt:.3e} exceeds stability bound {c_stab * limit:.3e}{where} "
            f"(velocity scale {velocity_scale:.3g}, diffusivity {diffusivity:.3g})"
        )


def noise_scales(basis: NoiseBasis) -> tuple[float, float]:
    """(velocity scale, diffusivity) contributed by the map coefficients."""
    vel = basis.drift.max_norm()
    diff = 0.5 * sum(e.max_norm() ** 2 for e in basis.modes)
    return vel, diff


def apply_increment(field: Fieldish, tensor_class: TensorClass, d: DiffeoIncrement,
                    nform_mode: NFormMode = NFormMode.FLUX) -> PerturbationResult:
    """Class-appropriate perturbation of one state variable.

    N_VECTOR rides the inverse increment (the pairing-preserving transport
    used for mixed covariant/variant state); the forward-map transport is
    available directly through forms.pushforward_nvector.
    """
    if tensor_class is TensorClass.ZERO_FORM:
        if isinstance(field, VectorField):
            parts = [perturb_0form(c, d) for c in field.components]
            drift = VectorField(field.grid, tuple(p.drift for p in parts))
            noise = tuple(
                VectorField(field.grid, tuple(p.noise[i] for p in parts))
                for i in range(d.basis.n_modes)
            )
            realized = VectorField(field.grid, tuple(p.realized for p in parts))
            return PerturbationResult(drift, noise, realized)
        return perturb_0form(field, d)
    if tensor_class is TensorClass.N_FORM:
        return perturb_nform(field, d, nform_mode)
    if tensor_class is TensorClass.ONE_FORM:
        return perturb_1form(field, d)
    if tensor_class is TensorClass.N_VECTOR:
        return pushforward_nvector(field, inverse_increment(d))
    raise ValueError(f"no perturbation rule for tensor class {tensor_class}")


def two_step_forecast(
    state: State,
    rhs: Callable[[State], State] | None,
    assignment: Mapping[str, TensorClass],
    basis: NoiseBasis,
    dt: float,
    rng: np.random.Generator,
    *,
    convention: Convention = Convention.RAW,
    nform_mode: NFormMode = NFormMode.FLUX,
    safety: float = 1.0,
    increment: DiffeoIncrement | None = None,
) -> State:
    """One forecast step: deterministic Euler update, then perturbation.

    Noise coefficients are evaluated at the post-Euler fields.  All variables
    see the same sampled increment.  Passing ``increment`` overrides sampling
    (used by the correspondence tests); the rng is untouched in that case.
    """
    if rhs is not None:
        upd = rhs(state)
        tilde = {k: state[k] + upd[k] * dt if k in upd else state[k] for k in state}
    else:
        tilde = dict(state)
    if basis.is_null and increment is None:
        return tilde
    d = increment if increment is not None else make_increment(basis, dt, rng, convention, safety)
    out: State = {}
    for k, field in tilde.items():
        result = apply_increment(field, assignment[k], d, nform_mode)
        out[k] = field + result.realized
    return out


# ---------------------------------------------------------------------------
# stochastic advection-diffusion (0-form scalar)

def advection_diffusion_rhs(f: ScalarField, u_adv: VectorField, diffusivity: float) -> ScalarField:
    """-u.grad f + D laplace f."""
    if diffusivity < 0:
        raise ValueError(f"diffusivity must be nonnegative, got {diffusivity}")
    out = np.zeros(f.grid.shape)
    for p in range(f.grid.dim):
        df = derivative(f, p)
        out -= u_adv.components[p].values * df.values
        if diffusivity:
            out += diffusivity * derivative(df, p).values
    return f.with_values(out)


# ---------------------------------------------------------------------------
# LU / SALT correspondences

def lu_basis(basis: NoiseBasis) -> NoiseBasis:
    """Install the drift a = sum_i (e_i.grad) e_i that realises transport-noise
    equations written with the Ito advecting velocity."""
    return basis.with_drift(ito_drift_correction(basis, 1.0))


def salt_increment(basis: NoiseBasis, dt: float, rng: np.random.Generator,
                   safety: float = 1.0) -> DiffeoIncrement:
    """Map increment in the Stratonovich transport convention:
    drift (1/2)(e.grad)e, noise sign flipped."""
    half = ito_drift_correction(basis, 0.5)
    flipped = NoiseBasis(
        basis.grid,
        tuple(-e for e in basis.modes),
        half,
        divergence_free=basis.divergence_free,
    )
    return make_increment(flipped, dt, rng, Convention.SALT, safety)


def lu_discrepancy_0form(d: DiffeoIncrement, f: ScalarField) -> float:
    """Max-norm gap between perturb_0form under d and the transport-noise
    0-form increment assembled independently from d's modes (same eta)."""
    grid = f.grid
    ref_drift = ScalarField.zeros(grid)
    grads = [derivative(f, p) for p in range(grid.dim)]
    for e in d.basis.modes:
        for p in range(grid.dim):
            adv = ScalarField.zeros(grid)
            for q in range(grid.dim):
                adv = adv + e.components[q] * derivative(e.components[p], q)
            ref_drift = ref_drift + adv * grads[p]
            for q in range(grid.dim):
                ref_drift = ref_drift + 0.5 * e.components[p] * e.components[q] * second_derivative(f, p, q)
    ref = ref_drift * d.dt
    for e, eta in zip(d.basis.modes, d.increments.eta):
        noise = ScalarField.zeros(grid)
        for p in range(grid.dim):
            noise = noise + e.components[p] * grads[p]
        ref = ref + noise * float(eta)
    got = perturb_0form(f, d).realized
    return float(np.abs(got.values - ref.values).max())


def lu_correspondence_check(basis: NoiseBasis, f: ScalarField, dt: float,
                            rng: np.random.Generator) -> float:
    d = make_increment(lu_basis(basis), dt, rng, Convention.LU)
    return lu_discrepancy_0form(d, f)


def lu_discrepancy_nform(d: DiffeoIncrement, f: ScalarField) -> float:
    """Max-norm gap between the flux-form n-form increment under d and the
    transport-theorem form div((1/2 div A) f) + div((1/2) A grad f) with
    A = sum_i e_i e_i^T, noise -div(sigma dB f)."""
    grid = f.grid
    modes = d.basis.modes
    amat = [
        [
            sum((e.components[p] * e.components[q] for e in modes), start=ScalarField.zeros(grid))
            for q in range(grid.dim)
        ]
        for p in range(grid.dim)
    ]
    div_amat = []
    for p in range(grid.dim):
        acc = ScalarField.zeros(grid)
        for e in modes:
            for q in range(grid.dim):
                acc = acc + e.components[p] * derivative(e.components[q], q)
                acc = acc + derivative(e.components[p], q) * e.components[q]
        div_amat.append(acc)
    grads = [derivative(f, q) for q in range(grid.dim)]
    ref_drift = ScalarField.zeros(grid)
    for p in range(grid.dim):
        bracket = 0.5 * div_amat[p] * f
        for q in range(grid.dim):
            bracket = bracket + 0.5 * amat[p][q] * grads[q]
        ref_drift = ref_drift + derivative(bracket, p)
    ref = ref_drift * d.dt
    for e, eta in zip(modes, d.increments.eta):
        noise = sum(
            (derivative(e.components[p] * f, p) for p in range(grid.dim)),
            start=ScalarField.zeros(grid),
        )
        ref = ref + noise * float(eta)
    got = perturb_nform(f, d, NFormMode.FLUX).realized
    return float(np.abs(got.values - ref.values).max())


def lu_nform_check(basis: NoiseBasis, f: ScalarField, dt: float,
                   rng: np.random.Generator) -> float:
    d = make_increment(lu_basis(basis), dt, rng, Convention.LU)
    return lu_discrepancy_nform(d, f)


# ---------------------------------------------------------------------------
# thermal shallow water

@dataclass(frozen=True)
class TSWParams:
    kappa: float = 0.0
    h0: float = 1.0
    theta0: float = 1.0
    fcor: float = 0.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.h0 <= 0 or self.theta0 <= 0:
            raise ValueError("reference height and contrast must be positive")


@dataclass(frozen=True)
class TSWState:
    """Active-layer height h, density contrast Theta, column velocity u.

    h and Theta must stay strictly positive; construction aborts otherwise
    rather than clipping, so conservation measurements stay honest.
    """

    h: ScalarField
    theta: ScalarField
    u: VectorField

    def __post_init__(self):
        if self.h.grid.dim != 2:
            raise ValueError("thermal shallow water is two-dimensional")
        if self.theta.grid != self.h.grid or self.u.grid != self.h.grid:
            raise ValueError("state fields must share one grid")
        if self.h.min() <= 0.0:
            raise PositivityError(f"layer height lost positivity (min h = {self.h.min():.3e})")
        if self.theta.min() <= 0.0:
            raise PositivityError(f"density contrast lost positivity (min Theta = {self.theta.min():.3e})")

    @property
    def grid(self) -> Grid:
        return self.h.grid

    def as_dict(self) -> State:
        return {"h": self.h, "theta": self.theta, "u": self.u}


TSW_ASSIGNMENT: dict[str, TensorClass] = {
    "h": TensorClass.N_FORM,
    "theta": TensorClass.N_VECTOR,
    "u": TensorClass.ZERO_FORM,
}


def tsw_deterministic_rhs(state: TSWState, params: TSWParams) -> State:
    """Right-hand sides of the deterministic system.

    dh/dt     = -div(h u)                      (flux form: mass to round-off)
    dTheta/dt = -(u.grad)Theta - kappa (h Theta - h0 Theta0)
    du/dt     = -(u.grad)u - f zhat x u - grad(h Theta) + (1/2) h grad Theta
    """
    grid = state.grid
    h, theta, u = state.h, state.theta, state.u
    dh = -sum(
        (derivative(h * u.components[p], p) for p in range(2)),
        start=ScalarField.zeros(grid),
    )
    dtheta = ScalarField.zeros(grid)
    for p in range(2):
        dtheta = dtheta - u.components[p] * derivative(theta, p)
    dtheta = dtheta - params.kappa * (h * theta - params.h0 * params.theta0)
    htheta = h * theta
    du = []
    coriolis = (params.fcor * u.components[1], -params.fcor * u.components[0])
    for j in range(2):
        dj = coriolis[j] - derivative(htheta, j) + 0.5 * h * derivative(theta, j)
        for p in range(2):
            dj = dj - u.components[p] * derivative(u.components[j], p)
        du.append(dj)
    return {"h": dh, "theta": dtheta, "u": VectorField(grid, tuple(du))}


def tsw_gravity_wave_speed(state: TSWState) -> float:
    return float(np.sqrt((state.h * state.theta).max()))


def tsw_spde_step(
    state: TSWState,
    params: TSWParams,
    basis: NoiseBasis,
    dt: float,
    rng: np.random.Generator,
    *,
    rhs_enabled: bool = True,
    nform_mode: NFormMode = NFormMode.FLUX,
    convention: Convention = Convention.RAW,
    safety: float = 1.0,
    c_stab: float = 1.0,
    step: int | None = None,
    increment: DiffeoIncrement | None = None,
) -> TSWState:
    """One thermal shallow water step; all three variables share one increment."""
    vel, diff = noise_scales(basis)
    if rhs_enabled:
        vel += state.u.max_norm() + tsw_gravity_wave_speed(state)
    check_stability(state.grid, dt, vel, diff, c_stab, step)
    rhs = (lambda s: tsw_deterministic_rhs(TSWState(s["h"], s["theta"], s["u"]), params)) if rhs_enabled else None
    try:
        new = two_step_forecast(
            state.as_dict(), rhs, TSW_ASSIGNMENT, basis, dt, rng,
            convention=convention, nform_mode=nform_mode, safety=safety,
            increment=increment,
        )
        return TSWState(new["h"], new["theta"], new["u"])
    except PositivityError as err:
        if step is not None:
            raise PositivityError(f"step {step}: {err}") from err
        raise
