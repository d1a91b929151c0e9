import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftprep.errors import NotTracePreservingError, SimulationError
from ftprep.simcore import (
    CNOT,
    H,
    X,
    KrausChannel,
    QuantumState,
    UnitarySpec,
    apply_channel,
    apply_unitary,
    expectation,
    format_bitstring,
    measure_probabilities,
    pauli_matrix,
    project_qubit,
    sample_from_probabilities,
    sample_shots,
    yrot,
    zphase,
)


def random_state(seed, n):
    rng = np.random.default_rng(seed)
    vec = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return QuantumState(n, vec / np.linalg.norm(vec))


def random_unitary(seed, k):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(2**k, 2**k)) + 1j * rng.normal(size=(2**k, 2**k))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_bit_order():
    state = apply_unitary(QuantumState.zero(3), UnitarySpec(X, (0,)))
    probs = measure_probabilities(state)
    assert probs[0b100] == pytest.approx(1)
    assert format_bitstring(4, 3) == '100'
    assert sample_shots(state, 3, seed=1) == ['100'] * 3


def test_cnot_control_first():
    state = QuantumState.from_bitstring('10')
    out = apply_unitary(state, UnitarySpec(CNOT, (0, 1)))
    assert measure_probabilities(out)[0b11] == pytest.approx(1)
    out = apply_unitary(state, UnitarySpec(CNOT, (1, 0)))
    assert measure_probabilities(out)[0b10] == pytest.approx(1)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_pure_and_mixed_paths_agree(state_seed, unitary_seed):
    state = random_state(state_seed, 3)
    u = UnitarySpec(random_unitary(unitary_seed, 2), (2, 0))
    pure = apply_unitary(state, u)
    mixed = apply_unitary(state.to_density(), u)
    assert pure.is_pure
    assert not mixed.is_pure
    np.testing.assert_allclose(pure.density_matrix(), mixed.data, atol=1e-12)


def test_gates():
    np.testing.assert_allclose(zphase(math.pi), pauli_matrix('Z'))
    np.testing.assert_allclose(yrot(math.pi), -1j * pauli_matrix('Y'), atol=1e-15)
    assert pauli_matrix('XZ').shape == (4, 4)
    with pytest.raises(SimulationError):
        pauli_matrix('XQ')


def test_bad_unitaries():
    with pytest.raises(SimulationError):
        UnitarySpec(np.ones((2, 2)), (0,))
    with pytest.raises(SimulationError) as exinfo:
        UnitarySpec(np.eye(2), (0, 1))
    assert '4x4' in str(exinfo.value)
    with pytest.raises(SimulationError):
        apply_unitary(QuantumState.zero(2), UnitarySpec(CNOT, (1, 1)))
    with pytest.raises(SimulationError):
        apply_unitary(QuantumState.zero(2), UnitarySpec(H, (2,)))


def test_register_size():
    with pytest.raises(SimulationError):
        QuantumState.zero(6)
    with pytest.raises(SimulationError):
        QuantumState(2, np.ones(3))


def test_channel_trace_preserving():
    with pytest.raises(NotTracePreservingError) as exinfo:
        KrausChannel((np.eye(2) * 0.9,), (0,))
    assert exinfo.value.deviation == pytest.approx(0.19)
    flip = KrausChannel((math.sqrt(0.75) * np.eye(2), math.sqrt(0.25) * X), (1,))
    out = apply_channel(QuantumState.zero(2), flip)
    np.testing.assert_allclose(measure_probabilities(out), [0.75, 0.25, 0, 0])
    assert np.trace(out.data) == pytest.approx(1)


def test_check_detects_bad_states():
    with pytest.raises(SimulationError):
        QuantumState(1, np.array([1, 1])).check()
    with pytest.raises(SimulationError):
        QuantumState(1, np.diag([1.5, -0.5])).check()
    QuantumState.maximally_mixed(3).check()


def test_sampling_is_reproducible():
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    a = sample_from_probabilities(probs, 200_000, seed=7, lanes=1)
    b = sample_from_probabilities(probs, 200_000, seed=7, lanes=4)
    np.testing.assert_array_equal(a, b)
    freq = np.bincount(a, minlength=4) / len(a)
    np.testing.assert_allclose(freq, probs, atol=5e-3)
    with pytest.raises(SimulationError):
        sample_from_probabilities(probs, 0, seed=7)


def test_expectation_and_projection():
    plus = apply_unitary(QuantumState.zero(2), UnitarySpec(H, (0,)))
    assert expectation(plus, pauli_matrix('XI')) == pytest.approx(1)
    assert expectation(plus.to_density(), pauli_matrix('ZI')) == pytest.approx(0)
    bell = apply_unitary(plus, UnitarySpec(CNOT, (0, 1)))
    rest = project_qubit(bell, 0, 1)
    np.testing.assert_allclose(rest, np.diag([0, 0.5]), atol=1e-15)
    with pytest.raises(SimulationError):
        project_qubit(QuantumState.zero(1), 0, 0)
