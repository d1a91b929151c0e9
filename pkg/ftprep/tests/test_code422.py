import itertools
import math

import numpy as np
import pytest

from ftprep.code422 import (
    ALL_LABELS,
    CODE,
    LogicalLabel,
    codespace_metrics,
    commutes,
    logical_basis_state,
    logical_change_of_basis,
    sector_probabilities,
    sector_projector,
    to_logical_frame,
)
from ftprep.errors import SimulationError, UndefinedMetricError
from ftprep.simcore import QuantumState, expectation, pauli_matrix


def test_commutation_structure():
    for s in CODE.stabilizers:
        for op in (*CODE.logical_x, *CODE.logical_z):
            assert commutes(s, op)
    for i, j in itertools.product(range(2), repeat=2):
        assert commutes(CODE.logical_x[i], CODE.logical_z[j]) == (i != j)
    assert not commutes(CODE.destabilizer_z, CODE.stabilizer_x)
    assert commutes(CODE.destabilizer_z, CODE.stabilizer_z)
    assert not commutes(CODE.destabilizer_x, CODE.stabilizer_z)
    assert commutes(CODE.destabilizer_x, CODE.stabilizer_x)
    with pytest.raises(SimulationError):
        commutes('XX', 'XXX')


def test_codewords():
    s = 1 / math.sqrt(2)
    zero = logical_basis_state(LogicalLabel(0, 0)).data
    expected = np.zeros(16)
    expected[[0b0000, 0b1111]] = s
    np.testing.assert_allclose(zero, expected)
    one = logical_basis_state(LogicalLabel(1, 1)).data
    expected = np.zeros(16)
    expected[[0b0110, 0b1001]] = s
    np.testing.assert_allclose(one, expected)


@pytest.mark.parametrize('label', ALL_LABELS, ids=str)
def test_label_eigenvalues(label):
    state = logical_basis_state(label)
    assert expectation(state, pauli_matrix('XXXX')) == pytest.approx((-1) ** label.s_z)
    assert expectation(state, pauli_matrix('ZZZZ')) == pytest.approx((-1) ** label.s_x)
    z1, z2 = CODE.logical_z
    assert expectation(state, pauli_matrix(z1)) == pytest.approx((-1) ** label.L1)
    assert expectation(state, pauli_matrix(z2)) == pytest.approx((-1) ** label.L2)


def test_change_of_basis_unitary():
    u = logical_change_of_basis()
    np.testing.assert_allclose(u.conj().T @ u, np.eye(16), atol=1e-14)
    u[0, 0] = 5
    assert logical_change_of_basis()[0, 0] != 5


def test_label_index():
    for i, label in enumerate(ALL_LABELS):
        assert label.index == i
        assert LogicalLabel.from_index(i) == label
    assert str(LogicalLabel(1, 0, 0, 1)) == '|10,01>'
    with pytest.raises(SimulationError):
        LogicalLabel(2, 0)
    with pytest.raises(SimulationError):
        LogicalLabel.from_index(16)


def test_logical_frame_of_basis_state():
    label = LogicalLabel(0, 1, 1, 0)
    logical = to_logical_frame(logical_basis_state(label))
    expected = np.zeros((16, 16))
    expected[label.index, label.index] = 1
    np.testing.assert_allclose(logical, expected, atol=1e-14)


def test_sector_projectors_resolve_identity():
    total = sum(sector_projector(a, b) for a, b in itertools.product((0, 1), repeat=2))
    np.testing.assert_allclose(total, np.eye(16), atol=1e-14)
    p = sector_projector(0, 0)
    np.testing.assert_allclose(p @ p, p, atol=1e-14)
    assert np.trace(p).real == pytest.approx(4)


def test_sector_probabilities():
    sectors = sector_probabilities(logical_basis_state(LogicalLabel(0, 1, 1, 0)))
    assert sectors[(1, 0)].probability == pytest.approx(1)
    assert sectors[(1, 0)].logical_state[1, 1] == pytest.approx(1)
    assert not sectors[(0, 0)].defined
    mixed = sector_probabilities(QuantumState.maximally_mixed(4))
    for sector in mixed.values():
        assert sector.probability == pytest.approx(0.25)
        np.testing.assert_allclose(sector.logical_state, np.eye(4) / 4, atol=1e-14)
    with pytest.raises(SimulationError):
        sector_probabilities(QuantumState.zero(3))


def test_codespace_metrics():
    ideal = codespace_metrics(logical_basis_state(LogicalLabel(1, 1)), LogicalLabel(1, 1))
    assert ideal.acceptance == pytest.approx(1)
    assert ideal.fidelity == pytest.approx(1)
    mixed = codespace_metrics(QuantumState.maximally_mixed(4), LogicalLabel(0, 0))
    assert mixed.acceptance == pytest.approx(0.25)
    assert mixed.fidelity == pytest.approx(0.25)
    with pytest.raises(UndefinedMetricError) as exinfo:
        codespace_metrics(logical_basis_state(LogicalLabel(0, 0, 1, 1)), LogicalLabel(0, 0))
    assert exinfo.value.denominator < 1e-12
