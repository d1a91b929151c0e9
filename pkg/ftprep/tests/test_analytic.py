import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftprep.analytic import (
    DecayModelParams,
    ErrorClass,
    InsertionModelParams,
    Location,
    acceptance_model,
    decay_model,
    exclusive_coefficients,
    ideal_decay,
    insertion_coefficients,
    logical_error_model,
)
from ftprep.code422 import LogicalLabel
from ftprep.errors import SimulationError, UndefinedMetricError, UnknownNameError
from ftprep.prep import PrepTarget, build_prep_circuit, insert_error, outcome_probabilities

ZERO_ZERO = PrepTarget.parse('00')
THETAS = np.linspace(0, math.pi, 7)
READOUTS = [(0.0, 0.0), (0.05, 0.015), (0.108, 0.043)]


def _flip_oracle(true_probs, p0, p1):
    """Acceptance and marginal errors by enumerating every readout flip
    pattern of the five recorded bits."""
    kept = accepted = protected = gauge = joint = 0.0
    for true_index, p_true in enumerate(true_probs):
        if p_true == 0:
            continue
        true_bits = [(true_index >> (4 - k)) & 1 for k in range(5)]
        for flips in itertools.product((0, 1), repeat=5):
            weight = p_true
            for bit, flip in zip(true_bits, flips):
                if bit:
                    weight *= p0 if flip else 1 - p0
                else:
                    weight *= p1 if flip else 1 - p1
            c1, c2, c3, c4, cs = (b ^ f for b, f in zip(true_bits, flips))
            if cs != 1:
                continue
            kept += weight
            if c1 ^ c2 ^ c3 ^ c4:
                continue
            accepted += weight
            prot, gau = c1 ^ c2, c1 ^ c3
            protected += weight * prot
            gauge += weight * gau
            joint += weight * (prot & gau)
    return (
        accepted / kept,
        protected / accepted,
        gauge / accepted,
        joint / accepted,
    )


@pytest.mark.parametrize('loc', list(Location), ids=lambda loc: loc.value)
@pytest.mark.parametrize('p0, p1', READOUTS)
def test_closed_forms_match_enumeration(loc, p0, p1):
    base = build_prep_circuit(ZERO_ZERO)
    for theta in THETAS:
        true_probs = outcome_probabilities(insert_error(base, loc.value, theta))
        if (p0, p1) == (0.0, 0.0) and loc is not Location.B and theta == math.pi:
            with pytest.raises(UndefinedMetricError):
                logical_error_model(loc, 'protected', theta, p0, p1)
            continue
        acceptance, protected, gauge, joint = _flip_oracle(true_probs, p0, p1)
        assert acceptance_model(loc, theta, p0, p1) == pytest.approx(acceptance, abs=1e-10)
        for r, value in (('protected', protected), ('gauge', gauge), ('joint', joint)):
            assert logical_error_model(loc, r, theta, p0, p1) == pytest.approx(
                value, abs=1e-10
            )


def test_sites_a_and_c_share_coefficients():
    a = exclusive_coefficients('A', 0.07, 0.02)
    c = exclusive_coefficients(Location.C, 0.07, 0.02)
    assert a == c
    assert a.c_gauge == a.c_protected
    assert a.c_joint == a.c_protected


def test_marginal_is_exclusive_plus_joint():
    ex = exclusive_coefficients('B', 0.108, 0.043)
    co = insertion_coefficients('B', 0.108, 0.043)
    assert co.c_protected == pytest.approx(ex.c_protected + ex.c_joint)
    assert co.d_gauge == pytest.approx(ex.d_gauge + ex.d_joint)
    assert co.a == ex.a


def test_site_b_values():
    co = insertion_coefficients(Location.B, 0.108, 0.043)
    assert co.a == pytest.approx(0.7628, abs=1e-4)
    assert co.b == pytest.approx(0.0061, abs=1e-4)
    assert co.c_protected == pytest.approx(0.0189, abs=1e-4)
    assert co.d_gauge == pytest.approx(-0.3574, abs=1e-4)


def test_ideal_readout_limits():
    for loc in ('A', 'C'):
        co = insertion_coefficients(loc, 0, 0)
        assert (co.a, co.b) == (0.5, 0.5)
        assert co.c_protected == co.d_protected == 0
    co = insertion_coefficients('B', 0, 0)
    assert (co.a, co.b) == (1, 0)
    assert co.error_pair(ErrorClass.gauge) == (0.5, -0.5)
    assert co.error_pair('protected') == (0, 0)
    with pytest.raises(UnknownNameError):
        co.error_pair('logical')
    with pytest.raises(UnknownNameError):
        insertion_coefficients('D', 0, 0)


def test_coefficients_broadcast():
    p0 = np.linspace(0, 0.2, 5)
    co = insertion_coefficients('A', p0[:, None], p0[None, :])
    assert np.shape(co.a) == (5, 5)
    assert co.a[0, 0] == pytest.approx(0.5)


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 2 * math.pi))
@settings(max_examples=100)
def test_model_is_a_probability(p0, p1, theta):
    for loc in Location:
        assert -1e-12 <= acceptance_model(loc, theta, p0, p1) <= 1 + 1e-12


def test_insertion_params():
    params = InsertionModelParams('A', 0.05, 0.015, theta=0.3, delta=0.2)
    assert params.location is Location.A
    assert params.acceptance == pytest.approx(acceptance_model('A', 0.5, 0.05, 0.015))
    assert params.logical_error('gauge') == pytest.approx(
        logical_error_model('A', 'gauge', 0.5, 0.05, 0.015)
    )
    with pytest.raises(SimulationError):
        InsertionModelParams('A', 1.5, 0, theta=0)


def test_ideal_decay_matches_model():
    t1 = 60.0
    t = np.linspace(0, 3 * t1, 61)
    prediction = decay_model(t, DecayModelParams.pure(LogicalLabel(1, 1).index, (t1,) * 4))
    np.testing.assert_allclose(prediction.p_protected, ideal_decay(t, t1), rtol=0, atol=1e-12)
    np.testing.assert_allclose(prediction.p_gauge, ideal_decay(t, t1), rtol=0, atol=1e-12)
    u = np.exp(-t / t1)
    np.testing.assert_allclose(prediction.acceptance, u**2 + (1 - u) ** 2, atol=1e-12)


def test_ideal_decay_shape():
    t1 = 57.0
    crossover = t1 * math.log(2)
    assert ideal_decay(crossover, t1) == pytest.approx(0.5, abs=1e-12)
    assert math.exp(-crossover / t1) == pytest.approx(0.5, abs=1e-12)
    h = 1e-6
    slope = (ideal_decay(h, t1) - ideal_decay(0.0, t1)) / h
    assert abs(slope) < 1e-8
    assert ideal_decay(1e4, t1) == pytest.approx(0, abs=1e-12)
    with pytest.raises(SimulationError):
        ideal_decay(1.0, 0)


def test_decay_with_readout():
    params = DecayModelParams.pure(LogicalLabel(1, 1).index, (57, 84, 85, 81), 0.05, 0.015)
    prediction = decay_model([0.0, 20.0, 200.0], params)
    assert prediction.acceptance[0] < 1
    assert prediction.p_protected[0] < 1
    assert prediction.p_protected[0] > prediction.p_protected[1] > prediction.p_protected[2]
    zero = decay_model([0.0, 50.0], DecayModelParams.pure(LogicalLabel(0, 0).index, (50,) * 4))
    assert zero.p_protected[0] == pytest.approx(0, abs=1e-15)
    assert 0 < zero.p_protected[1] < 0.5
    with pytest.raises(SimulationError):
        decay_model([-1.0], params)


def test_decay_params_validation():
    with pytest.raises(SimulationError):
        DecayModelParams(np.ones(15) / 15, (50,) * 4)
    with pytest.raises(SimulationError):
        DecayModelParams(np.ones(16), (50,) * 4)
    with pytest.raises(SimulationError):
        DecayModelParams.pure(0, (50, 50, 50))
