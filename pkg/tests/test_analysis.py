import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from aloha_uncertainty.analysis import (
    TerminatingChain,
    aoi_law_given_estimate,
    average_conditional_entropy,
    build_chain,
    conditional_source_law,
    entropy_cdf,
    entropy_curve,
    entropy_timeline,
    estimate_law,
    estimate_weights,
    instantaneous_entropy,
    inter_refresh_law,
    joint_law,
)
from aloha_uncertainty.errors import DegeneratePolicy, SingularFundamentalMatrix, UnreachableCondition
from aloha_uncertainty.policy import (
    AccessPolicy,
    NetworkConfig,
    strategy_random,
    strategy_reactive,
    success_probability,
)
from aloha_uncertainty.source import SourceParams, binary_entropy, source_entropy

from conftest import networks, policies, sources

REACTIVE = strategy_reactive()


def forward_oracle(cfg, horizon):
    """Stationary (AoI, estimate, state) law by forward balance equations.

    Mass at AoI d + 1 flows from AoI d through the no-delivery kernel; mass at
    AoI 0 with estimate y is whatever was delivered in state y.  Matrix powers
    are plain numpy products summed to ``horizon``.
    """
    P = cfg.source.transition_matrix
    lam = cfg.policy.as_matrix() * success_probability(cfg)
    stay = P * (1 - lam)
    deliver = P * lam
    powers = [np.eye(2)]
    for _ in range(horizon):
        powers.append(powers[-1] @ stay)
    powers = np.array(powers)
    S = powers.sum(axis=0)
    M = S @ deliver
    # left fixed point of the 2x2 stochastic matrix M
    r = np.array([M[1, 0], M[0, 1]])
    r = r / r.sum() if r.sum() > 0 else np.array([1.0, 0.0]) if M[0, 0] == 1 else np.array([0.0, 1.0])
    occupancy = powers.sum(axis=-1)  # [d, y]
    table = occupancy * r
    table /= table.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = powers[:, :, 0] / occupancy
    return table, p0


# chain construction


def test_chain_single_node_reactive():
    src = SourceParams(0.03, 0.07)
    chain = build_chain(NetworkConfig(1, src, REACTIVE))
    np.testing.assert_allclose(chain.transient, [[0.97, 0.0], [0.0, 0.93]], atol=1e-16)
    np.testing.assert_allclose(chain.absorb, [0.03, 0.07], atol=1e-16)


def test_chain_entries_match_definition():
    src = SourceParams(0.1, 0.2)
    pol = AccessPolicy(0.1, 0.6, 0.3, 0.2)
    cfg = NetworkConfig(5, src, pol)
    ps = success_probability(cfg)
    chain = build_chain(cfg)
    expected = [[0.9 * (1 - 0.1 * ps), 0.1 * (1 - 0.6 * ps)], [0.2 * (1 - 0.3 * ps), 0.8 * (1 - 0.2 * ps)]]
    np.testing.assert_allclose(chain.transient, expected, rtol=1e-14)
    np.testing.assert_allclose(chain.absorb, [(0.1 * 0.6 + 0.9 * 0.1) * ps, (0.2 * 0.3 + 0.8 * 0.2) * ps], rtol=1e-14)
    np.testing.assert_allclose(chain.gap, np.eye(2) - chain.transient, atol=1e-15)
    assert chain.det == pytest.approx(np.linalg.det(chain.gap), rel=1e-12)


def test_degenerate_policies():
    src = SourceParams(0.02, 0.02)
    with pytest.raises(DegeneratePolicy):
        build_chain(NetworkConfig(3, src, AccessPolicy(0, 0, 0, 0)))
    with pytest.raises(DegeneratePolicy):
        build_chain(NetworkConfig(2, src, AccessPolicy(1, 1, 1, 1)))
    # state 1 is never left and never reported
    with pytest.raises(DegeneratePolicy):
        TerminatingChain(np.array([[0.5, 0.0], [0.0, 1.0]]), np.array([0.5, 0.0]))


def test_singular_fundamental_matrix_is_reported():
    chain = TerminatingChain(np.diag([0.5, 0.5]), np.array([0.5, 0.5]), det=1e-310)
    with pytest.raises(SingularFundamentalMatrix):
        chain.mean_time


@given(networks())
def test_row_conservation(cfg):
    try:
        chain = build_chain(cfg)
    except DegeneratePolicy:
        return
    assert np.abs(chain.transient.sum(axis=1) + chain.absorb - 1).max() <= 1e-12
    assert (chain.transient >= 0).all() and (chain.absorb >= 0).all()


# conditional law and instantaneous entropy


def test_conditional_law_at_refresh():
    chain = build_chain(NetworkConfig(50, SourceParams(0.1, 0.01), strategy_random(50)))
    law = conditional_source_law(chain, 0, 0)
    assert (law.p0, law.p1) == (1.0, 0.0)
    assert instantaneous_entropy(chain, 0, 1) == 0.0


def test_conditional_law_single_node_reactive_never_moves():
    chain = build_chain(NetworkConfig(1, SourceParams(0.02, 0.3), REACTIVE))
    for delta in (1, 10, 1000, 50_000):
        assert conditional_source_law(chain, delta, 0)[0] == 1.0
        assert conditional_source_law(chain, delta, 1)[1] == 1.0
        assert instantaneous_entropy(chain, delta, 0) == 0.0


def test_conditional_law_forgets_estimate():
    chain = build_chain(NetworkConfig(20, SourceParams(0.05, 0.02), AccessPolicy(0.1, 0.9, 0.5, 0.05)))
    a = conditional_source_law(chain, 10_000, 0)
    b = conditional_source_law(chain, 10_000, 1)
    assert a.p0 == pytest.approx(b.p0, abs=1e-12)


def test_entropy_reaches_source_entropy_random_policy():
    chain = build_chain(NetworkConfig(50, SourceParams(0.02, 0.02), strategy_random(50)))
    for xhat in (0, 1):
        assert abs(instantaneous_entropy(chain, 10_000, xhat) - 1.0) <= 1e-6


def test_unreachable_condition():
    chain = TerminatingChain(np.array([[0.0, 0.0], [0.0, 0.5]]), np.array([1.0, 0.5]))
    with pytest.raises(UnreachableCondition):
        conditional_source_law(chain, 1, 0)
    assert math.isnan(entropy_curve(chain, 2)[1, 0])


def test_entropy_curve_matches_pointwise():
    chain = build_chain(NetworkConfig(10, SourceParams(0.1, 0.01), strategy_random(10)))
    curve = entropy_curve(chain, 300)
    for delta in (0, 1, 7, 150, 300):
        for xhat in (0, 1):
            assert curve[delta, xhat] == pytest.approx(instantaneous_entropy(chain, delta, xhat), abs=1e-13)


@given(networks(m_max=100), st.integers(0, 5000), st.integers(0, 1))
def test_conditional_law_is_a_distribution(cfg, delta, xhat):
    try:
        chain = build_chain(cfg)
        law = conditional_source_law(chain, delta, xhat)
    except (DegeneratePolicy, UnreachableCondition):
        return
    assert 0 <= law.p0 <= 1 and 0 <= law.p1 <= 1
    assert abs(law.p0 + law.p1 - 1) <= 1e-12
    h = instantaneous_entropy(chain, delta, xhat)
    assert 0 <= h <= 1


# inter-refresh and AoI laws


def test_inter_refresh_geometric_for_single_node():
    alpha = 0.02
    chain = build_chain(NetworkConfig(1, SourceParams(alpha, 0.05), REACTIVE))
    law = inter_refresh_law(chain)
    w = np.arange(1, 200)
    np.testing.assert_allclose(law.pmf[:199, 0], (1 - alpha) ** (w - 1) * alpha, rtol=1e-12)
    assert law.mean[0] == pytest.approx(50.0, rel=1e-13)
    assert law.mean[1] == pytest.approx(20.0, rel=1e-13)
    assert (law.tail_mass < 1e-12).all()


def test_inter_refresh_immediate_absorption():
    chain = TerminatingChain(np.zeros((2, 2)), np.ones(2))
    law = inter_refresh_law(chain)
    assert law.pmf[0].tolist() == [1.0, 1.0]
    assert law.mean.tolist() == [1.0, 1.0]


def test_aoi_law_geometric_for_single_node():
    chain = build_chain(NetworkConfig(1, SourceParams(0.02, 0.02), REACTIVE))
    law = aoi_law_given_estimate(chain)
    d = np.arange(400)
    np.testing.assert_allclose(law.pmf[:400, 0], 0.98**d * 0.02, rtol=1e-12)


@given(networks(m_max=60, lo=0.005))
def test_inter_refresh_and_aoi_laws(cfg):
    try:
        chain = build_chain(cfg)
        mean = chain.mean_time
    except (DegeneratePolicy, SingularFundamentalMatrix):
        return
    assume(mean.max() < 1e5)
    w = inter_refresh_law(chain, tolerance=1e-10)
    assert np.abs(w.pmf.sum(axis=0) + w.tail_mass - 1).max() <= 1e-9
    assert (w.mean > 0).all() and np.isfinite(w.mean).all()
    gap = w.mean - w.truncated_mean
    assert (gap >= -1e-9 * w.mean).all()
    assert (gap <= w.mean_error_bound() + 1e-9 * w.mean).all()
    aoi = aoi_law_given_estimate(chain, tolerance=1e-10)
    assert np.abs(aoi.pmf.sum(axis=0) + aoi.tail_mass - 1).max() <= 1e-9
    np.testing.assert_allclose(aoi.pmf[0], 1 / mean, rtol=1e-12)


# estimate law


def test_estimate_law_symmetric_reactive():
    cfg = NetworkConfig(50, SourceParams(0.02, 0.02), REACTIVE)
    assert estimate_law(cfg) == pytest.approx([0.5, 0.5], abs=1e-15)


@given(sources(), st.integers(1, 200))
def test_reactive_weights_are_even(src, m):
    assert estimate_weights(NetworkConfig(m, src, REACTIVE)) == pytest.approx([0.5, 0.5], abs=1e-12)


def test_estimate_law_fig2_parameters():
    cfg = NetworkConfig(50, SourceParams(0.1, 0.01), REACTIVE)
    table, _ = forward_oracle(cfg, 20_000)
    assert estimate_law(cfg)[0] == pytest.approx(table[:, 0].sum(), abs=1e-10)


# joint law and average entropy


@pytest.mark.parametrize(
    "cfg",
    [
        NetworkConfig(1, SourceParams(0.02, 0.02), REACTIVE),
        NetworkConfig(50, SourceParams(0.02, 0.02), REACTIVE),
        NetworkConfig(50, SourceParams(0.1, 0.01), strategy_random(50)),
        NetworkConfig(50, SourceParams(0.1, 0.01), REACTIVE),
        NetworkConfig(7, SourceParams(0.3, 0.05), AccessPolicy(0.2, 0.0, 0.7, 0.1)),
        NetworkConfig(3, SourceParams(0.2, 0.4), AccessPolicy(0.0, 0.0, 1.0, 0.0)),
    ],
)
def test_joint_law_matches_forward_oracle(cfg):
    law = joint_law(cfg)
    table, p0 = forward_oracle(cfg, 30_000)
    n = min(len(table), law.delta_max + 1)
    np.testing.assert_allclose(law.table[:n], table[:n], atol=1e-12, rtol=1e-9)
    h = np.where(table > 0, binary_entropy(np.nan_to_num(p0, nan=0.0)), 0.0)
    assert law.entropy == pytest.approx(float(np.sum(table * h)), abs=1e-10)


@given(networks(m_max=40, lo=0.005))
def test_joint_law_matches_forward_oracle_random_configs(cfg):
    try:
        mean = build_chain(cfg).mean_time
    except (DegeneratePolicy, SingularFundamentalMatrix):
        return
    assume(mean.max() < 400)
    law = joint_law(cfg)
    table, _ = forward_oracle(cfg, 20_000)
    n = min(len(table), law.delta_max + 1)
    np.testing.assert_allclose(law.table[:n], table[:n], atol=1e-11)


def test_single_node_reactive_is_exact():
    cfg = NetworkConfig(1, SourceParams(0.02, 0.02), REACTIVE)
    law = joint_law(cfg)
    assert law.entropy == 0.0
    d = np.arange(300)
    np.testing.assert_allclose(law.aoi_marginal()[:300], 0.98**d * 0.02, rtol=1e-12)
    assert average_conditional_entropy(cfg) == 0.0


def test_tail_below_tolerance():
    for tol in (1e-6, 1e-9, 1e-12):
        law = joint_law(NetworkConfig(50, SourceParams(0.02, 0.02), REACTIVE), tol)
        assert law.tail_mass < tol
        assert not law.law_converged


def test_closure_route_agrees_with_full_sum():
    # rare deliveries: the tail is closed at the limit entropy
    cfg = NetworkConfig(200, SourceParams(0.02, 0.02), REACTIVE)
    closed = joint_law(cfg, closure_horizon=0)
    full = joint_law(cfg, closure_horizon=1 << 22)
    assert closed.law_converged
    assert full.tail_mass < 1e-12
    assert abs(closed.entropy - full.entropy) <= closed.error_bound + full.error_bound


@given(networks())
def test_joint_law_invariants(cfg):
    try:
        law = joint_law(cfg)
    except (DegeneratePolicy, SingularFundamentalMatrix):
        return
    assert abs(law.table.sum() + law.tail_mass - 1) <= 1e-9
    assert (law.entropy_table >= 0).all() and (law.entropy_table <= 1).all()
    assert law.entropy_table[0].tolist() == [0.0, 0.0]
    assert -1e-15 <= law.entropy <= source_entropy(cfg.source) + law.tail_mass + 1e-12
    assert law.estimate_pmf.sum() == pytest.approx(1.0, abs=1e-15)


def test_reactive_beats_random_symmetric():
    src = SourceParams(0.02, 0.02)
    h_random = average_conditional_entropy(NetworkConfig(50, src, strategy_random(50)))
    h_reactive = average_conditional_entropy(NetworkConfig(50, src, REACTIVE))
    assert h_reactive < h_random


def test_entropy_grows_with_nodes():
    src = SourceParams(0.02, 0.02)
    values = [average_conditional_entropy(NetworkConfig(m, src, REACTIVE)) for m in (100, 500, 1000)]
    assert values[0] <= values[1] <= values[2] <= 1.0
    assert values[-1] > 0.999


# entropy CDF


def test_entropy_cdf_edges():
    cfg = NetworkConfig(50, SourceParams(0.02, 0.02), strategy_random(50))
    cdf = entropy_cdf(cfg, thresholds=[-0.5, 0.0, 0.5, 1.0])
    assert cdf.values[0] == 0.0
    assert cdf.values[-1] == pytest.approx(1 - cdf.tail_mass, abs=1e-12)
    single = entropy_cdf(NetworkConfig(1, SourceParams(0.02, 0.02), REACTIVE), thresholds=[0.0])
    assert single.values[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        entropy_cdf(cfg, thresholds=[0.5, 0.1])


@given(networks(m_max=80), st.lists(st.floats(-0.1, 1.1), min_size=1, max_size=20))
def test_entropy_cdf_monotone(cfg, zetas):
    try:
        cdf = entropy_cdf(cfg, thresholds=sorted(zetas))
    except (DegeneratePolicy, SingularFundamentalMatrix):
        return
    assert (np.diff(cdf.values) >= 0).all()
    assert (cdf.values >= 0).all() and (cdf.upper <= 1).all()
    assert (cdf.upper >= cdf.values).all()


# timeline


def test_timeline_rises_toward_source_entropy():
    cfg = NetworkConfig(50, SourceParams(0.1, 0.01), strategy_random(50))
    limit = source_entropy(cfg.source)
    tl = entropy_timeline(cfg, [(0, 1)], 3000)
    assert tl["h"][0] == 0.0
    assert (np.diff(tl["h"]) >= -1e-15).all()
    assert tl["h"][-1] == pytest.approx(limit, abs=1e-9)


def test_timeline_overshoot_after_rare_state():
    cfg = NetworkConfig(50, SourceParams(0.1, 0.01), strategy_random(50))
    tl = entropy_timeline(cfg, [(0, 0)], 3000)
    assert tl["h"].max() > source_entropy(cfg.source) + 0.1
    assert tl["h"][-1] == pytest.approx(source_entropy(cfg.source), abs=1e-9)


def test_timeline_resets_and_every_slot_reception():
    cfg = NetworkConfig(50, SourceParams(0.1, 0.01), strategy_random(50))
    tl = entropy_timeline(cfg, [(i, i % 2) for i in range(100)], 100)
    assert (tl["h"] == 0).all()
    tl = entropy_timeline(cfg, [(5, 1), (40, 0)], 60)
    assert tl["slot"][0] == 5 and tl["delta"][35] == 0 and tl["xhat"][35] == 0
    with pytest.raises(ValueError):
        entropy_timeline(cfg, [(3, 0), (3, 1)], 10)
