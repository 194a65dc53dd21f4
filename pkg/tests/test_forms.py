import numpy as np
import pytest

from stochmap.grid import Grid, ScalarField, TensorClass, VectorField
from stochmap.calculus import integrate, sample_at
from stochmap.noise import BrownianIncrements, ModeSpec, NoiseBasis, build_fourier_basis
from stochmap.maps import DiffeoIncrement, inverse_increment, inverse_map, make_increment
from stochmap.forms import (
    NFormMode,
    oracle_remap,
    perturb_0form,
    perturb_1form,
    perturb_mixed_pair,
    perturb_nform,
    perturb_volume_multiplier,
    pushforward_nvector,
    volume_jacobian_coefficient,
)

TWO_PI = 2.0 * np.pi


def grid2(n=64):
    return Grid((n, n), (TWO_PI, TWO_PI))


def constant_mode_increment(grid, amp=(1.0, 0.0), eta=0.02, dt=1e-3, drift=None):
    basis = build_fourier_basis(grid, [ModeSpec(k=(0, 0), amplitude=amp)], drift=drift)
    return DiffeoIncrement(basis, BrownianIncrements(dt=dt, eta=np.array([eta])))


def null_increment(grid, dt=1e-3):
    basis = NoiseBasis(grid, (), VectorField.zeros(grid))
    return DiffeoIncrement(basis, BrownianIncrements(dt=dt, eta=np.zeros(0)))


def smooth(grid, fn):
    return ScalarField.from_function(grid, fn)


# --- 0-form -----------------------------------------------------------------

def test_0form_constant_field_unchanged():
    g = grid2()
    d = constant_mode_increment(g)
    r = perturb_0form(ScalarField.constant(g, 2.0), d)
    assert np.all(r.realized.values == 0.0)


def test_0form_pure_drift_advection_1d():
    g = Grid((64,), (TWO_PI,))
    basis = NoiseBasis(g, (), VectorField.constant(g, (1.0,)))
    d = DiffeoIncrement(basis, BrownianIncrements(dt=1e-3, eta=np.zeros(0)))
    f = smooth(g, np.sin)
    r = perturb_0form(f, d)
    x = g.coords()[0]
    assert np.abs(r.drift.values - np.cos(x)).max() < 2 * g.spacing[0] ** 2
    assert r.noise == ()


def test_0form_constant_mode_analytic():
    # e = (1, 0), a = 0, f = sin x: drift = -sin(x)/2, noise = cos x
    g = grid2()
    d = constant_mode_increment(g, amp=(1.0, 0.0))
    f = smooth(g, lambda x, y: np.sin(x))
    r = perturb_0form(f, d)
    x, _ = g.coords()
    h = g.spacing[0]
    assert np.abs(r.drift.values + 0.5 * np.sin(x)).max() < h**2
    assert np.abs(r.noise[0].values - np.cos(x)).max() < h**2
    combo = r.drift.values * d.dt + r.noise[0].values * d.increments.eta[0]
    assert np.array_equal(r.realized.values, combo)


def test_0form_zero_increment_is_zero():
    g = grid2(32)
    d = null_increment(g)
    f = smooth(g, lambda x, y: np.sin(x) * np.cos(y))
    assert np.all(perturb_0form(f, d).realized.values == 0.0)


def test_0form_linearity():
    g = grid2(32)
    d = make_increment(
        build_fourier_basis(g, [ModeSpec(k=(1, 0), amplitude=(0.0, 0.2))]),
        1e-3, np.random.default_rng(0),
    )
    rng = np.random.default_rng(1)
    f1 = ScalarField(g, rng.standard_normal(g.shape))
    f2 = ScalarField(g, rng.standard_normal(g.shape))
    lhs = perturb_0form(2.0 * f1 + (-0.5) * f2, d).realized.values
    rhs = 2.0 * perturb_0form(f1, d).realized.values - 0.5 * perturb_0form(f2, d).realized.values
    assert np.allclose(lhs, rhs, atol=1e-14)


@pytest.mark.parametrize("op", ["nform_flux", "nform_pointwise", "nvector", "oneform"])
def test_every_operator_linear_in_the_field(op):
    g = grid2(32)
    basis = build_fourier_basis(
        g,
        [ModeSpec(k=(1, 0), amplitude=(0.0, 0.2)), ModeSpec(k=(1, 1), amplitude=(0.1, 0.1), solenoidal=False)],
        drift=VectorField.constant(g, (0.1, -0.05)),
    )
    d = make_increment(basis, 1e-3, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    al, be = 1.7, -0.4
    if op == "oneform":
        v1 = VectorField(g, tuple(ScalarField(g, rng.standard_normal(g.shape)) for _ in range(2)))
        v2 = VectorField(g, tuple(ScalarField(g, rng.standard_normal(g.shape)) for _ in range(2)))
        combo = VectorField(g, tuple(al * a + be * b for a, b in
                                     zip(v1.components, v2.components)))
        lhs = perturb_1form(combo, d).realized
        r1 = perturb_1form(v1, d).realized
        r2 = perturb_1form(v2, d).realized
        for c, a, b in zip(lhs.components, r1.components, r2.components):
            assert np.allclose(c.values, al * a.values + be * b.values, atol=1e-13)
        return
    f1 = ScalarField(g, rng.standard_normal(g.shape))
    f2 = ScalarField(g, rng.standard_normal(g.shape))
    apply = {
        "nform_flux": lambda f: perturb_nform(f, d, NFormMode.FLUX),
        "nform_pointwise": lambda f: perturb_nform(f, d, NFormMode.POINTWISE),
        "nvector": lambda f: pushforward_nvector(f, d),
    }[op]
    lhs = apply(al * f1 + be * f2).realized.values
    rhs = al * apply(f1).realized.values + be * apply(f2).realized.values
    assert np.allclose(lhs, rhs, atol=1e-13)


# --- volume multiplier ------------------------------------------------------

def test_volume_multiplier_solenoidal_constant_modes():
    g = grid2()
    d = constant_mode_increment(g, amp=(0.3, 0.4))
    r = perturb_volume_multiplier(d)
    assert np.all(r.realized.values == 0.0)


def test_volume_multiplier_divergent_drift():
    g = grid2()
    drift = VectorField(
        g,
        (smooth(g, lambda x, y: np.sin(x)), ScalarField.zeros(g)),
    )
    basis = NoiseBasis(g, (), drift)
    d = DiffeoIncrement(basis, BrownianIncrements(dt=1e-3, eta=np.zeros(0)))
    r = perturb_volume_multiplier(d)
    x, _ = g.coords()
    assert np.abs(r.drift.values - np.cos(x)).max() < 2 * g.spacing[0] ** 2


def test_volume_multiplier_lu_incompressible_basis_is_identity():
    # shear modes with the transport-noise drift: multiplier stays 1 exactly
    from stochmap.models import lu_basis

    g = grid2()
    basis = lu_basis(
        build_fourier_basis(
            g, [ModeSpec(k=(1, 0), amplitude=(0.0, 0.25)), ModeSpec(k=(0, 2), amplitude=(0.2, 0.0))]
        )
    )
    d = make_increment(basis, 1e-3, np.random.default_rng(2))
    r = perturb_volume_multiplier(d)
    assert np.abs(r.realized.values).max() < 1e-10


def test_volume_jacobian_coefficient_mixed_shear():
    # e = (A sin y, B sin x): J = -2 A B cos x cos y (up to stencil factors)
    g = grid2()
    e = VectorField(
        g, (smooth(g, lambda x, y: 0.5 * np.sin(y)), smooth(g, lambda x, y: 0.3 * np.sin(x)))
    )
    got = volume_jacobian_coefficient(e)
    x, y = g.coords()
    expect = -2.0 * 0.5 * 0.3 * np.cos(x) * np.cos(y)
    assert np.abs(got.values - expect).max() < 5 * g.spacing[0] ** 2


# --- n-form -----------------------------------------------------------------

def test_nform_flux_integral_telescopes():
    g = grid2()
    rng = np.random.default_rng(3)
    basis = build_fourier_basis(
        g,
        [ModeSpec(k=(1, 0), amplitude=(0.0, 0.3)), ModeSpec(k=(1, 1), amplitude=(0.2, 0.2), solenoidal=False)],
        drift=VectorField.constant(g, (0.1, -0.2)),
    )
    f = ScalarField(g, 1.0 + 0.5 * rng.standard_normal(g.shape))
    for _ in range(5):
        d = make_increment(basis, 1e-3, rng)
        r = perturb_nform(f, d, NFormMode.FLUX)
        l1 = np.abs(f.values).mean() * g.volume
        assert abs(integrate(r.realized)) < 1e-12 * l1


def test_nform_constant_everything_is_zero():
    g = grid2()
    d = constant_mode_increment(g, amp=(0.5, 0.2))
    f = ScalarField.constant(g, 3.0)
    for mode in NFormMode:
        r = perturb_nform(f, d, mode)
        assert np.abs(r.realized.values).max() < 1e-15


def test_nform_pointwise_vs_flux_second_order_in_h():
    # needs a mode whose products genuinely exercise the discrete product
    # rule; pure shear modes make the two assemblies agree to round-off
    diffs = {}
    for n in (32, 64):
        g = grid2(n)
        basis = build_fourier_basis(
            g,
            [ModeSpec(k=(1, 1), amplitude=(0.3, 0.1), solenoidal=False)],
            drift=VectorField.constant(g, (0.1, 0.0)),
        )
        d = DiffeoIncrement(basis, BrownianIncrements(dt=1e-3, eta=np.array([0.01])))
        f = smooth(g, lambda x, y: 1.0 + 0.4 * np.sin(x) * np.cos(y) + 0.2 * np.cos(2 * y))
        a = perturb_nform(f, d, NFormMode.POINTWISE).realized.values
        b = perturb_nform(f, d, NFormMode.FLUX).realized.values
        diffs[n] = np.abs(a - b).max()
    assert 2.5 < diffs[32] / diffs[64] < 6.0  # O(h^2) between assemblies


# --- 1-form -----------------------------------------------------------------

def test_1form_constant_everything_is_zero():
    g = grid2()
    d = constant_mode_increment(g, amp=(0.4, 0.1))
    v = VectorField.constant(g, (1.0, -2.0))
    r = perturb_1form(v, d)
    for c in r.realized.components:
        assert np.abs(c.values).max() < 1e-15


def test_1form_gradient_coupling_term():
    # v = (1, 0), e = (sin y, 0), a = 0: only noise survives, component 2
    # picks up d_y(e^x) v^x = cos y
    g = grid2()
    e = VectorField(g, (smooth(g, lambda x, y: np.sin(y)), ScalarField.zeros(g)))
    basis = NoiseBasis(g, (e,), VectorField.zeros(g))
    d = DiffeoIncrement(basis, BrownianIncrements(dt=1e-3, eta=np.array([0.01])))
    v = VectorField.constant(g, (1.0, 0.0))
    r = perturb_1form(v, d)
    _, y = g.coords()
    assert np.abs(r.noise[0].components[1].values - np.cos(y)).max() < g.spacing[1] ** 2
    assert np.abs(r.noise[0].components[0].values).max() < 1e-15
    assert np.abs(r.drift.components[0].values).max() < 1e-15


def test_1form_requires_two_dimensions():
    g = Grid((16,), (TWO_PI,))
    basis = NoiseBasis(g, (), VectorField.zeros(g))
    d = DiffeoIncrement(basis, BrownianIncrements(dt=1e-3, eta=np.zeros(0)))
    with pytest.raises(ValueError):
        perturb_1form(VectorField.constant(g, (1.0,)), d)


# --- n-vector ---------------------------------------------------------------

def test_nvector_constant_mode_signs():
    # constant e, a = 0: drift = (1/2) e e : grad grad g, noise = -e.grad g
    g = grid2()
    d = constant_mode_increment(g, amp=(1.0, 0.0))
    f = smooth(g, lambda x, y: np.sin(x))
    r = pushforward_nvector(f, d)
    x, _ = g.coords()
    h = g.spacing[0]
    assert np.abs(r.drift.values + 0.5 * np.sin(x)).max() < h**2
    assert np.abs(r.noise[0].values + np.cos(x)).max() < h**2  # opposite sign to 0-form


def test_nvector_constant_field_keeps_wedge_term():
    # g constant, divergence-free e with J != 0: noise vanishes, drift = J/2 g
    g = grid2()
    e = VectorField(
        g, (smooth(g, lambda x, y: 0.4 * np.sin(y)), smooth(g, lambda x, y: 0.3 * np.sin(x)))
    )
    basis = NoiseBasis(g, (e,), VectorField.zeros(g), divergence_free=True)
    d = DiffeoIncrement(basis, BrownianIncrements(dt=1e-3, eta=np.array([0.01])))
    const = ScalarField.constant(g, 2.0)
    r = pushforward_nvector(const, d)
    assert np.abs(r.noise[0].values).max() < 1e-15
    expect = 0.5 * volume_jacobian_coefficient(e).values * 2.0
    assert np.allclose(r.drift.values, expect, atol=1e-14)


# --- mixed pair -------------------------------------------------------------

def test_mixed_pair_identity_increment():
    g = grid2(32)
    d = null_increment(g)
    f = smooth(g, lambda x, y: 1.0 + 0.3 * np.sin(x))
    q = smooth(g, lambda x, y: 1.0 + 0.2 * np.cos(y))
    rf, rg = perturb_mixed_pair(f, q, d)
    assert np.all(rf.realized.values == 0.0)
    assert np.all(rg.realized.values == 0.0)


def test_mixed_pair_grid_mismatch():
    d = null_increment(grid2(32))
    f = ScalarField.constant(grid2(32), 1.0)
    q = ScalarField.constant(grid2(16), 1.0)
    with pytest.raises(ValueError):
        perturb_mixed_pair(f, q, d)


def test_mixed_pair_nvector_rides_the_inverse():
    g = grid2()
    basis = build_fourier_basis(g, [ModeSpec(k=(1, 0), amplitude=(0.0, 0.3))])
    d = make_increment(basis, 1e-3, np.random.default_rng(4))
    q = smooth(g, lambda x, y: 1.0 + 0.2 * np.cos(y))
    _, rg = perturb_mixed_pair(ScalarField.constant(g, 1.0), q, d)
    direct = pushforward_nvector(q, inverse_increment(d))
    assert np.array_equal(rg.realized.values, direct.realized.values)


# --- oracle remap -----------------------------------------------------------

def test_oracle_identity_increment_returns_input():
    g = grid2(32)
    d = null_increment(g)
    rng = np.random.default_rng(5)
    f = ScalarField(g, 1.0 + 0.4 * rng.standard_normal(g.shape))
    for cls in (TensorClass.ZERO_FORM, TensorClass.N_FORM, TensorClass.N_VECTOR):
        out = oracle_remap(cls, f, d)
        assert np.allclose(out.values, f.values, atol=1e-12)
    v = VectorField(g, (f, ScalarField(g, rng.standard_normal(g.shape))))
    out = oracle_remap(TensorClass.ONE_FORM, v, d)
    for c_out, c_in in zip(out.components, v.components):
        assert np.allclose(c_out.values, c_in.values, atol=1e-12)
    det = oracle_remap(TensorClass.VOLUME_FORM, None, d)
    assert np.allclose(det.values, 1.0, atol=1e-14)


def test_oracle_translation_preserves_nform_integral():
    g = grid2()
    d = constant_mode_increment(g, amp=(1.0, 0.5), eta=0.03)
    f = smooth(g, lambda x, y: 1.0 + 0.5 * np.sin(x) * np.cos(y))
    det = oracle_remap(TensorClass.VOLUME_FORM, None, d)
    assert np.allclose(det.values, 1.0, atol=1e-14)  # translations are volume-preserving
    remapped = oracle_remap(TensorClass.N_FORM, f, d)
    assert abs(integrate(remapped) - integrate(f)) < 1e-7  # interpolation error only


@pytest.mark.parametrize(
    "cls", [TensorClass.ZERO_FORM, TensorClass.N_FORM, TensorClass.N_VECTOR]
)
def test_closed_forms_track_oracle_at_small_dt(cls):
    # one-realisation sanity check at fixed dt; systematic slopes live in the
    # acceptance suite
    g = grid2(96)
    basis = build_fourier_basis(g, [ModeSpec(k=(1, 0), amplitude=(0.0, 0.25))])
    dt = 1e-4
    d = DiffeoIncrement(basis, BrownianIncrements(dt=dt, eta=np.array([np.sqrt(dt)])))
    f = smooth(g, lambda x, y: 1.2 + 0.4 * np.sin(x) * np.cos(y) + 0.2 * np.cos(2 * y))
    if cls is TensorClass.ZERO_FORM:
        r = perturb_0form(f, d)
    elif cls is TensorClass.N_FORM:
        r = perturb_nform(f, d, NFormMode.FLUX)
    else:
        r = pushforward_nvector(f, d)
    remapped = oracle_remap(cls, f, d)
    mismatch = np.abs(r.realized.values - (remapped.values - f.values)).max()
    assert mismatch < 50 * dt  # increment itself is O(sqrt(dt)) ~ 1e-2
    assert mismatch < 0.05 * np.abs(r.realized.values).max()


def test_volume_multiplier_matches_determinant_oracle():
    # antithetic pair mean of (det J - 1) equals drift*dt up to the O(dt^2)
    # determinant tail; the eta-linear parts are identical stencils
    g = grid2()
    basis = build_fourier_basis(
        g,
        [ModeSpec(k=(1, 1), amplitude=(0.2, 0.1), solenoidal=False)],
        drift=VectorField(
            g,
            (smooth(g, lambda x, y: 0.1 * np.sin(x)), ScalarField.zeros(g)),
        ),
    )
    dt = 1e-3
    mean = np.zeros(g.shape)
    for sign in (1.0, -1.0):
        d = DiffeoIncrement(basis, BrownianIncrements(dt=dt, eta=np.array([sign * np.sqrt(dt)])))
        mean += 0.5 * (oracle_remap(TensorClass.VOLUME_FORM, None, d).values - 1.0)
    drift = perturb_volume_multiplier(
        DiffeoIncrement(basis, BrownianIncrements(dt=dt, eta=np.array([0.0])))
    ).drift
    assert np.abs(mean - drift.values * dt).max() < 5 * dt**2


def test_1form_3d_oracle_consistency():
    g = Grid((48, 48, 48), (TWO_PI,) * 3)
    basis = build_fourier_basis(g, [ModeSpec(k=(1, 0, 0), amplitude=(0.0, 0.2, 0.0))])
    dt = 1e-4
    d = DiffeoIncrement(basis, BrownianIncrements(dt=dt, eta=np.array([np.sqrt(dt)])))
    u = VectorField(
        g,
        (
            smooth(g, lambda x, y, z: np.sin(z) + 0.3 * np.cos(y)),
            smooth(g, lambda x, y, z: np.sin(x)),
            smooth(g, lambda x, y, z: np.cos(x + y)),
        ),
    )
    r = perturb_1form(u, d)
    remapped = oracle_remap(TensorClass.ONE_FORM, u, d)
    for rr, oo, uu in zip(r.realized.components, remapped.components, u.components):
        assert np.abs(rr.values - (oo.values - uu.values)).max() < 50 * dt


def test_mixed_pair_pointwise_pairing_small_defect():
    g = grid2(96)
    basis = build_fourier_basis(g, [ModeSpec(k=(1, 0), amplitude=(0.0, 0.25))])
    dt = 1e-4
    d = DiffeoIncrement(basis, BrownianIncrements(dt=dt, eta=np.array([np.sqrt(dt)])))
    f = smooth(g, lambda x, y: 1.2 + 0.3 * np.sin(x) * np.cos(y))
    q = smooth(g, lambda x, y: 0.8 + 0.3 * np.cos(x + y))
    rf, rg = perturb_mixed_pair(f, q, d)
    fh = f + rf.realized
    gh = q + rg.realized
    paired = sample_at(fh * gh, inverse_map(d, g.points())).reshape(g.shape)
    defect = np.abs(paired - (f * q).values).max()
    assert defect < 50 * dt
