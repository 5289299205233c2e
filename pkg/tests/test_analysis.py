import math

import numpy as np
import pytest

from gemgmm import (
    GmmParams,
    MeanStepWeights,
    SectorBounds,
    SimplexViolationError,
    ValidationError,
    em_step,
    empirical_rate,
    lmi_check,
    lmi_matrix,
    min_feasible_rate,
    rate_bound,
    rate_certificate,
    run,
    sample,
    update_map_jacobian,
)

from conftest import make_dataset, make_params


# -------------------------------------------------------------- rate bound

@pytest.mark.parametrize("m_lo, L_hi, expected", [
    (1.0, 1.0, 0.0),
    (0.5, 1.5, 0.5),
    (0.1, 1.2, 0.9),
    (0.9, 1.0, 0.1),
])
def test_rate_bound_closed_form(m_lo, L_hi, expected):
    assert rate_bound(SectorBounds(m_lo, L_hi)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("m_lo, L_hi", [(0.0, 1.0), (-0.5, 1.0), (1.5, 0.5)])
def test_sector_bounds_validation(m_lo, L_hi):
    with pytest.raises(ValidationError):
        SectorBounds(m_lo, L_hi)


def test_sector_bounds_allow_equal_constants():
    b = SectorBounds(0.7, 0.7)
    assert rate_bound(b) == pytest.approx(0.3, abs=1e-15)


# --------------------------------------------------------------------- LMI

def test_lmi_matrix_entries():
    got = lmi_matrix(0.5, 1.0, SectorBounds(0.5, 1.5))
    assert np.allclose(got, [[-0.75, 1.0], [1.0, -1.0]], rtol=0, atol=1e-15)


def test_lmi_exactly_zero_at_unit_bounds():
    b = SectorBounds(1.0, 1.0)
    assert np.array_equal(lmi_matrix(0.0, 0.5, b), np.zeros((2, 2)))
    assert lmi_check(0.0, 0.5, b)


@pytest.mark.parametrize("mu", [0.0, 0.3, 0.6, 0.9, 0.99])
@pytest.mark.parametrize("m_lo, L_hi", [(1.0, 1.0), (0.5, 1.5), (0.2, 1.9)])
def test_small_multiplier_always_infeasible(mu, m_lo, L_hi):
    # the bottom-right entry 1 - 2*lam stays positive for lam < 1/2
    assert not lmi_check(mu, 0.4, SectorBounds(m_lo, L_hi))


def test_lmi_feasibility_boundary_at_half():
    b = SectorBounds(0.5, 1.5)
    assert lmi_check(0.5, 0.5, b)
    assert not lmi_check(0.49, 0.5, b)


def test_lmi_check_rejects_out_of_range_mu():
    b = SectorBounds(0.5, 1.5)
    with pytest.raises(ValidationError):
        lmi_check(1.0, 0.5, b)
    with pytest.raises(ValidationError):
        lmi_check(-0.01, 0.5, b)


@pytest.mark.parametrize("m_lo, L_hi", [(0.5, 1.5), (0.3, 1.2), (0.8, 1.1)])
def test_lmi_monotone_in_mu(m_lo, L_hi):
    b = SectorBounds(m_lo, L_hi)
    cert = rate_certificate(b)
    assert cert.feasible
    for mu in np.linspace(cert.mu_bound, 0.999, 7):
        assert lmi_check(float(mu), cert.multiplier, b)


# ------------------------------------------------------------- grid search

def test_min_feasible_rate_at_unit_bounds_is_zero():
    assert min_feasible_rate(SectorBounds(1.0, 1.0)) == 0.0


def test_min_feasible_rate_matches_closed_form():
    got = min_feasible_rate(SectorBounds(0.5, 1.5))
    assert got == pytest.approx(0.5, abs=1e-3 + 1e-9)


def test_min_feasible_rate_infeasible_outside_contractive_regime():
    # |1 - L| = 1.5 means no mu < 1 can be certified
    assert min_feasible_rate(SectorBounds(0.1, 2.5)) is None


def test_min_feasible_rate_rejects_bad_resolution():
    with pytest.raises(ValidationError):
        min_feasible_rate(SectorBounds(0.5, 1.5), resolution=0.0)


def test_rate_certificate_feasible_packaging():
    cert = rate_certificate(SectorBounds(0.5, 1.5))
    assert cert.feasible
    assert cert.mu_bound == pytest.approx(0.5, abs=1e-3 + 1e-9)
    assert cert.multiplier >= 0.5
    assert lmi_check(cert.mu_bound, cert.multiplier, SectorBounds(0.5, 1.5))


def test_rate_certificate_infeasible_packaging():
    cert = rate_certificate(SectorBounds(0.1, 2.5))
    assert not cert.feasible
    assert math.isnan(cert.mu_bound)
    assert math.isnan(cert.multiplier)


@pytest.mark.parametrize("m_lo", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("L_hi", [1.0, 1.4, 1.8])
def test_grid_rate_within_one_cell_of_closed_form(m_lo, L_hi):
    got = min_feasible_rate(SectorBounds(m_lo, L_hi))
    expected = rate_bound(SectorBounds(m_lo, L_hi))
    assert got is not None
    assert -1e-9 <= got - expected <= 1e-3 + 1e-9


# ----------------------------------------------------------- jacobian probes

def _feasible_vector(layout, rng):
    """Random vector with zero-sum weight block and symmetric cov blocks."""
    v = rng.normal(size=layout.size)
    wb = layout.weight_block
    v[wb] -= v[wb].mean()
    k, m = layout.n_components, layout.n_features
    for j in range(k):
        s = layout.cov_slice(j)
        block = v[s].reshape(m, m)
        v[s] = (0.5 * (block + block.T)).reshape(-1)
    return v


def test_identity_stub_jacobian_acts_as_identity_on_feasible_vectors():
    rng = np.random.default_rng(211)
    p = make_params(rng, 2, 2)
    x = make_dataset(rng, 20, 2)
    rep = update_map_jacobian(p, x, lambda q, d: q)
    for seed in range(5):
        v = _feasible_vector(p.layout, np.random.default_rng(seed))
        assert np.linalg.norm(rep.jacobian @ v - v) <= 1e-8 * np.linalg.norm(v)
    # feasible directions carry eigenvalue 1, the rest collapse to 0
    assert rep.classification == "first_order"
    k, m = 2, 2
    n_feasible = (k - 1) + k * m + k * (m * (m + 1) // 2)
    assert np.sum(rep.moduli > 0.5) == n_feasible


def test_identity_stub_weight_columns_are_centered_probes():
    rng = np.random.default_rng(213)
    p = make_params(rng, 3, 1)
    x = make_dataset(rng, 10, 1)
    rep = update_map_jacobian(p, x, lambda q, d: q)
    expected = np.eye(3) - np.full((3, 3), 1.0 / 3.0)
    assert np.allclose(rep.jacobian[:3, :3], expected, rtol=0, atol=1e-9)


def test_constant_map_jacobian_is_zero():
    rng = np.random.default_rng(217)
    p = make_params(rng, 2, 1)
    x = make_dataset(rng, 10, 1)
    rep = update_map_jacobian(p, x, lambda q, d: p)
    assert np.max(np.abs(rep.jacobian)) < 1e-9
    assert rep.classification == "newton_like"


def test_halfway_map_classifies_mixed():
    rng = np.random.default_rng(219)
    p = make_params(rng, 2, 1)
    x = make_dataset(rng, 10, 1)
    base = p.to_vector()

    def halfway(q, d):
        vec = base + 0.5 * (q.to_vector() - base)
        return GmmParams.from_vector(vec, 2, 1, symmetrize=True)

    rep = update_map_jacobian(p, x, halfway)
    assert rep.moduli[0] == pytest.approx(0.5, abs=1e-8)
    assert rep.classification == "mixed"


def test_single_gaussian_fixed_point_is_newton_like():
    rng = np.random.default_rng(223)
    x = rng.normal(1.0, 2.0, size=(60, 1))
    p = em_step(GmmParams([1.0], [[0.0]], [np.eye(1)]), x)
    rep = update_map_jacobian(p, x, "pb_gem")
    # the weight direction is trivial for K=1: the probe is identically zero
    assert np.array_equal(rep.jacobian[:, 0], np.zeros(3))
    assert rep.classification == "newton_like"
    assert np.all(rep.moduli < 0.1)


def test_overlapping_components_far_from_optimum_are_first_order():
    rng = np.random.default_rng(201)
    x = rng.normal(0.0, 1.0, size=(200, 1))
    p = GmmParams([0.5, 0.5], [[-0.1], [0.1]], [np.eye(1), np.eye(1)])
    rep = update_map_jacobian(p, x, "pb_gem")
    assert rep.moduli[0] > 0.9
    assert rep.classification == "first_order"


def test_weighted_jacobian_with_unit_betas_matches_plain():
    rng = np.random.default_rng(227)
    p = make_params(rng, 2, 1)
    x = make_dataset(rng, 30, 1)
    a = update_map_jacobian(p, x, "pb_gem")
    b = update_map_jacobian(p, x, "w_pb_gem", design=MeanStepWeights([1.0, 1.0]))
    assert np.allclose(a.jacobian, b.jacobian, rtol=0, atol=1e-12)


def test_jacobian_argument_validation():
    p = GmmParams([1.0], [[0.0]], [np.eye(1)])
    x = [[0.0], [1.0]]
    with pytest.raises(ValidationError):
        update_map_jacobian(p, x, "em")
    with pytest.raises(ValidationError):
        update_map_jacobian(p, x, "pb_gem", fd_step=0.0)
    with pytest.raises(ValidationError):
        update_map_jacobian(p, x, "w_pb_gem")


def test_jacobian_probe_failure_reports_perturbation_index():
    # one weight sits closer to zero than the probe step, so the minus
    # probe leaves the simplex
    rng = np.random.default_rng(229)
    x = make_dataset(rng, 20, 1)
    p = GmmParams([1e-7, 1.0 - 1e-7], [[-2.0], [2.0]], [np.eye(1), np.eye(1)])
    with pytest.raises(SimplexViolationError, match="perturbation"):
        update_map_jacobian(p, x, "pb_gem")


# ------------------------------------------------------------ empirical rate

def test_empirical_rate_recovers_exact_geometric_decay():
    ks = np.arange(60.0)
    arr = np.column_stack([ks, 100.0 - 0.9 ** ks])
    got = empirical_rate(arr, l_star=100.0)
    assert got == pytest.approx(0.9, abs=1e-6)


def test_empirical_rate_requires_ten_iterations():
    ks = np.arange(9.0)
    arr = np.column_stack([ks, 100.0 - 0.9 ** ks])
    assert empirical_rate(arr, l_star=100.0) is None


def test_empirical_rate_rejects_nonmonotone_tail():
    ks = np.arange(30.0)
    ll = 100.0 - 0.9 ** ks
    ll[-2] -= 1.0
    assert empirical_rate(np.column_stack([ks, ll]), l_star=100.0) is None


def test_empirical_rate_undefined_for_constant_trace():
    arr = np.column_stack([np.arange(20.0), np.full(20, -5.0)])
    assert empirical_rate(arr) is None


def test_empirical_rate_input_validation():
    with pytest.raises(ValidationError):
        empirical_rate(np.zeros(15))
    with pytest.raises(ValidationError):
        empirical_rate(np.zeros((15, 1)))


def test_empirical_rate_on_real_run_trace():
    truth = GmmParams([0.5, 0.5], [[1.0, 1.0], [-1.0, -1.0]],
                      [np.eye(2), np.eye(2)])
    data = sample(truth, 300, 233)
    start = GmmParams([0.5, 0.5], [[0.5, 0.0], [-0.5, 0.0]],
                      [np.eye(2), np.eye(2)])
    trace = run(start, data, "pb_gem", max_iters=2000)
    assert trace.reason == "tolerance"
    rate = empirical_rate(trace)
    assert rate is not None
    assert 0.0 < rate < 1.0
