import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkwave.riemann import PhaseState, demand, density_of, solve_junction, supply
from linkwave.scenarios import FIXTURE_FD

from oracles import brute_force_junction

C = 3000.0
CAPS = (C, C, C)


@pytest.mark.parametrize("q,r,expected", [(0, 0, 0.0), (3000, 0, 100.0), (0, 1, 400.0)])
def test_density_examples(q, r, expected):
    assert density_of(PhaseState(q, r), FIXTURE_FD) == pytest.approx(expected)


def test_density_above_capacity_rejected():
    with pytest.raises(ValueError):
        density_of(PhaseState(3000.5, 0), FIXTURE_FD)


def test_phase_state_validation():
    with pytest.raises(ValueError):
        PhaseState(10.0, 2)
    with pytest.raises(ValueError):
        PhaseState(-1.0, 0)


@pytest.mark.parametrize("q,r,expected", [(0, 0, 0), (1000, 1, 3000), (1000, 0, 1000)])
def test_demand_examples(q, r, expected):
    assert demand(PhaseState(q, r), C) == expected


@pytest.mark.parametrize("q,r,expected", [(0, 0, 3000), (600, 1, 600), (3000, 1, 3000)])
def test_supply_examples(q, r, expected):
    assert supply(PhaseState(q, r), C) == expected


def test_junction_free_flow_split():
    res = solve_junction(PhaseState(1000, 0), [PhaseState(0, 0), PhaseState(0, 0)], (0.5, 0.5), CAPS)
    assert res.q_hat_in == 1000
    assert res.r_hat_in == 0
    assert res.q_bar_out == (500, 500)
    assert res.r_bar_out == (0, 0)


def test_junction_limited_by_congested_outgoing():
    res = solve_junction(PhaseState(2000, 1), [PhaseState(400, 1), PhaseState(0, 0)], (0.5, 0.5), CAPS)
    assert res.q_hat_in == 800
    assert res.r_hat_in == 1
    assert res.q_bar_out == (400, 400)
    assert res.r_bar_out == (1, 0)


def test_junction_empty():
    res = solve_junction(PhaseState(0, 0), [PhaseState(0, 0), PhaseState(0, 0)], (0.5, 0.5), CAPS)
    assert res.q_hat_in == 0 and res.r_hat_in == 0
    assert res.q_bar_out == (0, 0) and res.r_bar_out == (0, 0)


def test_zero_alpha_drops_supply_term():
    res = solve_junction(PhaseState(1500, 0), [PhaseState(0, 1), PhaseState(0, 0)], (0.0, 1.0), CAPS)
    assert res.q_hat_in == 1500
    assert res.q_bar_out == (0.0, 1500)


def test_bad_alpha_row():
    with pytest.raises(ValueError):
        solve_junction(PhaseState(0, 0), [PhaseState(0, 0), PhaseState(0, 0)], (0.6, 0.6), CAPS)


flows = st.floats(0, C, allow_nan=False)
bits = st.integers(0, 1)
alphas = st.floats(0.05, 0.95)


@settings(max_examples=300, deadline=None)
@given(flows, bits, flows, bits, flows, bits, alphas)
def test_junction_properties(q0, r0, q1, r1, q2, r2, a):
    alpha = (a, 1.0 - a)
    active = PhaseState(q0, r0)
    outs = [PhaseState(q1, r1), PhaseState(q2, r2)]
    res = solve_junction(active, outs, alpha, CAPS)

    # conservation
    assert sum(res.q_bar_out) == pytest.approx(res.q_hat_in, rel=1e-12, abs=1e-9)
    # respects demand and supplies
    d = demand(active, C)
    s = [supply(o, C) for o in outs]
    assert res.q_hat_in <= d + 1e-9
    for ai, si in zip(alpha, s):
        assert ai * res.q_hat_in <= si + 1e-6
    # no holding: one of the min arguments is attained
    candidates = [d] + [si / ai for ai, si in zip(alpha, s)]
    assert min(abs(res.q_hat_in - c) for c in candidates) <= 1e-9 * max(1.0, res.q_hat_in)
    # regime monotonicity
    if r0 == 1:
        assert res.r_hat_in == 1
    for o, rb in zip(outs, res.r_bar_out):
        if o.r == 0:
            assert rb == 0


def test_brute_force_equivalence():
    rng = np.random.default_rng(2024)
    for r0, r1, r2 in itertools.product((0, 1), repeat=3):
        for _ in range(4):
            q = rng.uniform(0, C, size=3).round()
            a = float(rng.choice([0.25, 0.5, 0.75]))
            alpha = (a, 1 - a)
            res = solve_junction(PhaseState(q[0], r0), [PhaseState(q[1], r1), PhaseState(q[2], r2)], alpha, CAPS)
            ref = brute_force_junction(q[0], r0, [(q[1], r1), (q[2], r2)], alpha, C, (C, C), step=1.0)
            assert abs(res.q_hat_in - ref) <= 1.0
