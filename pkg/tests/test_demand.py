import math

import numpy as np
import pytest

from mergerfees.demand_systems import (
    AppendixBDemand,
    CustomDemand,
    Eq7Demand,
    EvaluationRegion,
    GrossKind,
    InverseModularityKind,
    LinearDemand,
    OneStopDemand,
    gross_relation,
    inverse_modularity,
)
from mergerfees.errors import DomainError
from mergerfees.reduced_form import ExponentialCdf, saturated_cdf
from mergerfees.sampling import random_linear_demand


def fd_jacobian(fn, x, h=1e-6):
    cols = []
    for k in range(len(x)):
        e = np.zeros(len(x))
        e[k] = h * max(1.0, abs(x[k]))
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * e[k]))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# Region
# ---------------------------------------------------------------------------


def test_region_validation_and_nodes():
    region = EvaluationRegion((0.0, 0.0), (1.0, 2.0), resolution=3)
    nodes = list(region.nodes())
    assert len(nodes) == 9
    assert tuple(nodes[0]) == (0.0, 0.0)
    assert tuple(nodes[-1]) == (1.0, 2.0)
    with pytest.raises(ValueError):
        EvaluationRegion((0.0,), (0.0,))
    with pytest.raises(ValueError):
        EvaluationRegion((0.0,), (1.0,), resolution=2)


# ---------------------------------------------------------------------------
# Linear family
# ---------------------------------------------------------------------------


def test_linear_inverse_at_origin():
    m = LinearDemand([1.0, 1.0], np.eye(2))
    assert np.allclose(m.inverse_demand([0.0, 0.0]), [1.0, 1.0])
    assert np.allclose(m.demand([1.0, 1.0]), [0.0, 0.0])


def test_linear_jacobians_consistent():
    rng = np.random.default_rng(1)
    m = random_linear_demand(rng, 3, "substitutes")
    q = np.array([0.2, 0.3, 0.25])
    assert np.allclose(m.inverse_jacobian(q), -m.B)
    p = m.inverse_demand(q)
    assert np.allclose(m.demand_jacobian(p) @ m.inverse_jacobian(q), np.eye(3), atol=1e-12)


def test_linear_validation():
    with pytest.raises(ValueError):
        LinearDemand([1.0], [[-1.0]])
    with pytest.raises(ValueError):
        LinearDemand([0.5, 0.5], np.eye(2), costs=[0.6, 0.0])


# ---------------------------------------------------------------------------
# Square-root-spillover family
# ---------------------------------------------------------------------------


def test_eq7_demand_at_choke_prices():
    m = Eq7Demand(0.0, 0.7)
    assert np.allclose(m.demand([1.0, 1.0, 1.0]), [0.0, 0.0, 0.0])


def test_eq7_demand_direct_substitution():
    m = Eq7Demand(0.1, 0.5)
    d = m.demand([0.5, 0.5, 0.5])
    assert d[0] == pytest.approx(0.5 + 0.1 * (0.5 + 0.5), abs=1e-15)
    assert d[1] == pytest.approx(0.6, abs=1e-15)
    assert d[2] == pytest.approx(0.5 + 0.5 * math.sqrt(1.0), abs=1e-15)


def test_eq7_domain_error():
    m = Eq7Demand(0.0, 0.5)
    with pytest.raises(DomainError):
        m.demand([1.5, 0.8, 0.5])
    with pytest.raises(ValueError):
        Eq7Demand(1.0, 0.5)


def test_eq7_inverse_closed_form_at_b_zero():
    m = Eq7Demand(0.0, 0.5)
    q = np.array([0.589, 0.589, 0.771])
    p = m.inverse_demand(q)
    assert p[0] == pytest.approx(1 - 0.589, abs=1e-12)
    assert p[2] == pytest.approx(1 - 0.771 + 0.5 * math.sqrt(1.178), abs=1e-12)
    assert p[2] == pytest.approx(0.772, abs=1e-3)


def test_eq7_round_trip_with_coupling():
    for b in (0.05, -0.05, 0.3, -0.3):
        m = Eq7Demand(b, 0.4)
        for q in ([0.5, 0.6, 0.7], [0.1, 0.9, 0.3], [0.4, 0.4, 0.01]):
            q = np.array(q)
            assert np.max(np.abs(m.demand(m.inverse_demand(q)) - q)) < 1e-10


def test_eq7_restricted_inverse_drops_absent_products():
    m = Eq7Demand(0.1, 0.5)
    # only product 3 carried: its inverse demand must be the standalone one
    p = m.portfolio_inverse(np.array([0.0, 0.0, 0.4]), (3,))
    assert p[2] == pytest.approx(0.6, abs=1e-14)
    # one coupled product + 3: solves the reduced two-equation system
    q = np.array([0.5, 0.0, 0.4])
    p = m.portfolio_inverse(q, (1, 3))
    s1 = 1 - p[0]
    s3 = 1 - p[2]
    assert s1 + 0.1 * s3 == pytest.approx(0.5, abs=1e-12)
    assert s3 + 0.5 * math.sqrt(s1) == pytest.approx(0.4, abs=1e-12)
    with pytest.raises(ValueError):
        m.portfolio_inverse(np.array([0.5, 0.2, 0.4]), (1, 3))


def test_eq7_closed_form_cross_slope_matches_differences():
    m = Eq7Demand(0.0, 0.5)
    p = np.array([0.4, 0.3, 0.6])
    jac = m.demand_jacobian(p)
    assert jac[2, 0] == pytest.approx(-0.5 * 0.5 / math.sqrt(2 - 0.4 - 0.3), abs=1e-12)
    fd = fd_jacobian(m.demand, p)
    assert np.max(np.abs(jac - fd)) < 1e-6


def test_eq7_inverse_jacobian_matches_differences():
    m = Eq7Demand(0.2, 0.5)
    q = np.array([0.4, 0.5, 0.6])
    assert np.max(np.abs(m.inverse_jacobian(q) - fd_jacobian(m.inverse_demand, q))) < 1e-6


# ---------------------------------------------------------------------------
# Log-coupled inverse-demand family
# ---------------------------------------------------------------------------


def test_appendix_b_inverse_at_origin():
    m = AppendixBDemand(b=-0.125, gamma=-0.8, alpha=0.0)
    assert np.allclose(m.inverse_demand([0.0, 0.0, 0.0]), [1.0, 1.0, 1.0])


def test_appendix_b_round_trip():
    m = AppendixBDemand(b=-0.125, gamma=-0.8, alpha=-1e-4)
    for p in ([0.5, 0.5, 0.5], [0.2, 0.7, 0.9], [0.05, 0.95, 0.4]):
        p = np.array(p)
        q = m.demand(p)
        assert np.max(np.abs(m.inverse_demand(q) - p)) < 1e-9


def test_appendix_b_demand_jacobian_matches_differences():
    """The implicit-function-theorem slopes (inverse of the closed-form
    price Jacobian) must agree with finite differences of the numerically
    inverted demand, across a price grid."""
    m = AppendixBDemand(b=-0.125, gamma=-0.8, alpha=-0.05)
    for p in EvaluationRegion((0.2,) * 3, (0.8,) * 3, 3).nodes():
        jac = m.demand_jacobian(p)
        fd = fd_jacobian(m.demand, p)
        assert np.max(np.abs(jac - fd)) < 1e-5


def test_appendix_b_cross_slope_formula():
    # cofactor expansion of the price Jacobian at asymmetric quantities
    m = AppendixBDemand(b=-0.125, gamma=-0.8, alpha=-0.05)
    q = np.array([0.2, 0.7, 0.4])
    b, g, a = m.b, m.gamma, m.alpha
    phi = (
        1 - b * b + q[0] + q[1] + q[0] * q[1]
        - a * g * (2 * (1 + q[0]) * (1 + q[1]) + b * (2 + q[0] + q[1]))
    )
    jac = np.linalg.inv(m.inverse_jacobian(q))
    assert jac[0, 1] == pytest.approx(-(1 + q[0]) * (b + a * g * (1 + q[1])) / phi, abs=1e-12)
    assert jac[0, 2] == pytest.approx(-a * (1 + q[0]) * (1 + q[1] + b) / phi, abs=1e-12)
    # the third product's slope pairs (1+q_j) with the *other* product's
    # (1+q_i+b) factor; verified against finite differences of D
    assert jac[2, 0] == pytest.approx(-g * (1 + q[1]) * (1 + q[0] + b) / phi, abs=1e-12)
    p = m.inverse_demand(q)
    fd = fd_jacobian(m.demand, p)
    assert fd[2, 0] == pytest.approx(jac[2, 0], abs=1e-7)


# ---------------------------------------------------------------------------
# One-stop and custom families
# ---------------------------------------------------------------------------


def test_one_stop_saturated_traffic_decouples():
    m = OneStopDemand([1.0, 1.2], [1.0, 0.8], saturated_cdf())
    p = np.array([0.3, 0.5])
    assert np.allclose(m.demand(p), m.sub_demand(p))


def test_one_stop_round_trip():
    m = OneStopDemand([1.0, 1.2, 0.9], [1.0, 0.8, 1.1], ExponentialCdf(1.5))
    for p in ([0.3, 0.5, 0.2], [0.6, 0.2, 0.4]):
        q = m.demand(np.array(p))
        assert np.max(np.abs(m.demand(m.inverse_demand(q)) - q)) < 1e-10
    assert np.allclose(m.inverse_demand(np.zeros(3)), m.alpha / m.beta)


def test_custom_demand_inverts_numerically():
    m = CustomDemand(
        2,
        lambda q: np.array([1.0 - q[0] - 0.2 * q[1], 1.0 - q[1] - 0.2 * q[0]]),
        quantity_region=EvaluationRegion((0.01, 0.01), (0.6, 0.6)),
        price_region=EvaluationRegion((0.1, 0.1), (0.9, 0.9)),
    )
    q = m.demand(np.array([0.4, 0.5]))
    assert np.max(np.abs(m.inverse_demand(q) - [0.4, 0.5])) < 1e-9


def test_round_trip_every_family_on_interior_points():
    rng = np.random.default_rng(4)
    models = [
        random_linear_demand(rng, 3, "complements"),
        Eq7Demand(0.1, 0.4),
        Eq7Demand(-0.1, -0.4),
        AppendixBDemand(-0.125, -0.8, -1e-4),
        OneStopDemand([1.0, 1.1, 0.9], [1.0, 1.0, 1.0], ExponentialCdf(1.0)),
    ]
    for m in models:
        region = m.default_quantity_region()
        for _ in range(5):
            q = np.array(
                [rng.uniform(lo, hi) for lo, hi in zip(region.lower, region.upper)]
            )
            err = np.max(np.abs(m.demand(m.inverse_demand(q)) - q))
            assert err <= 1e-7, f"{m.kind}: round-trip error {err}"


# ---------------------------------------------------------------------------
# Gross relations
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "b,gamma,expected",
    [
        (0.1, 0.5, GrossKind.STRICT_GROSS_COMPLEMENTS),
        (1e-4, 0.3, GrossKind.STRICT_GROSS_COMPLEMENTS),
        (-0.1, -0.5, GrossKind.STRICT_GROSS_SUBSTITUTES),
        (-1e-4, -0.3, GrossKind.STRICT_GROSS_SUBSTITUTES),
    ],
)
def test_eq7_gross_relation(b, gamma, expected):
    report = gross_relation(Eq7Demand(b, gamma))
    assert report.overall is expected
    assert all(rel.kind is expected for rel in report.pairs.values())


def test_appendix_b_gross_substitutes():
    report = gross_relation(AppendixBDemand(-0.125, -0.8, -1e-4))
    assert report.overall is GrossKind.STRICT_GROSS_SUBSTITUTES


def test_appendix_b_gross_complements_when_positive():
    report = gross_relation(
        AppendixBDemand(0.125, 0.3, 0.05), EvaluationRegion((0.3,) * 3, (0.9,) * 3, 5)
    )
    assert report.overall is GrossKind.STRICT_GROSS_COMPLEMENTS


def test_linear_decoupled_is_independent():
    report = gross_relation(LinearDemand([1.0, 1.0], np.eye(2)))
    assert report.overall is GrossKind.INDEPENDENT


def test_gross_complements_imply_nonnegative_price_cross_slopes():
    # direction check only: the converse is not asserted
    rng = np.random.default_rng(8)
    for model in [Eq7Demand(0.1, 0.5), random_linear_demand(rng, 3, "complements")]:
        report = gross_relation(model)
        assert report.overall is GrossKind.STRICT_GROSS_COMPLEMENTS
        region = model.default_quantity_region()
        for _ in range(10):
            q = np.array([rng.uniform(lo, hi) for lo, hi in zip(region.lower, region.upper)])
            jac = model.inverse_jacobian(q)
            off = jac[~np.eye(model.n, dtype=bool)]
            assert np.all(off >= -1e-10)


def test_gross_substitutes_imply_nonpositive_price_cross_slopes():
    rng = np.random.default_rng(12)
    for model in [Eq7Demand(-0.1, -0.5), random_linear_demand(rng, 3, "substitutes")]:
        report = gross_relation(model)
        assert report.overall is GrossKind.STRICT_GROSS_SUBSTITUTES
        region = model.default_quantity_region()
        for _ in range(10):
            q = np.array([rng.uniform(lo, hi) for lo, hi in zip(region.lower, region.upper)])
            jac = model.inverse_jacobian(q)
            off = jac[~np.eye(model.n, dtype=bool)]
            assert np.all(off <= 1e-10)


# ---------------------------------------------------------------------------
# Inverse-demand modularity
# ---------------------------------------------------------------------------


def test_linear_inverse_modularity_is_both():
    rng = np.random.default_rng(2)
    report = inverse_modularity(random_linear_demand(rng, 3, "complements"))
    assert report.kind is InverseModularityKind.BOTH
    assert report.weakly_supermodular and report.weakly_submodular


def test_appendix_b_inverse_modularity_weakly_submodular():
    # every cross partial vanishes identically, so weak submodularity holds
    # (jointly with weak supermodularity) for any parameter values
    for b in (-0.125, 0.0, 0.3):
        report = inverse_modularity(AppendixBDemand(b, -0.8, -1e-4))
        assert report.weakly_submodular
        assert abs(report.most_negative.value) <= 1e-8
        assert abs(report.most_positive.value) <= 1e-8


def test_eq7_spillover_curvature_blocks_supermodularity():
    report = inverse_modularity(Eq7Demand(0.0, 0.5))
    assert not report.weakly_supermodular
    assert report.kind is InverseModularityKind.WEAKLY_SUBMODULAR
    node = report.most_negative
    assert node.m == 3 and {node.i, node.j} == {1, 2}
    u = node.node[0] + node.node[1]
    assert node.value == pytest.approx(-0.5 / (4 * u ** 1.5), rel=1e-9)


def test_eq7_negative_spillover_blocks_submodularity():
    report = inverse_modularity(Eq7Demand(0.0, -0.5))
    assert not report.weakly_submodular
    assert report.kind is InverseModularityKind.WEAKLY_SUPERMODULAR


def test_eq7_with_coupling_uses_differences_and_agrees():
    # finite-difference fallback must reproduce the closed-form b=0 curvature
    closed = inverse_modularity(Eq7Demand(0.0, 0.5), EvaluationRegion((0.2,) * 3, (0.8,) * 3, 3))
    fd = inverse_modularity(Eq7Demand(1e-9, 0.5), EvaluationRegion((0.2,) * 3, (0.8,) * 3, 3))
    assert fd.most_negative.value == pytest.approx(closed.most_negative.value, rel=1e-3)
    assert not fd.weakly_supermodular
