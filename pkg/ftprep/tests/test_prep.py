import math

import numpy as np
import pytest

from ftprep.code422 import LogicalLabel, codespace_metrics, logical_basis_state
from ftprep.errors import CircuitError, UndefinedMetricError, UnknownNameError
from ftprep.noisemodels import NoiseConfig
from ftprep.prep import (
    ALL_TARGETS,
    Basis,
    Circuit,
    CnotModel,
    Op,
    OpKind,
    PostRotation,
    PrepTarget,
    build_prep_circuit,
    fault_locations,
    insert_correlated_error,
    insert_error,
    insert_fault,
    outcome_probabilities,
    postselected_data_state,
    prepared_state,
    simulate,
    syndrome_probability,
    target_state,
    to_text,
)
from ftprep.simcore import QuantumState

ZERO_ZERO = PrepTarget.parse('00')

GOLDEN_00 = """\
0 h D1
0 h D2
0 h D3
0 h D4
0 x S1
1 cx D1 S1
1 barrier A
2 cx D2 S1
2 barrier B
3 cx D3 S1
3 barrier C
4 cx D4 S1
5 h D1
5 h D2
5 h D3
5 h D4
6 measure S1 key=cs
9 measure D1 key=c1
9 measure D2 key=c2
9 measure D3 key=c3
9 measure D4 key=c4
"""


def _bits(index):
    return [(index >> (4 - k)) & 1 for k in range(5)]


def _data_flip(circuit, qubits):
    """``circuit`` with X gates on ``qubits`` right before the data
    measurements."""
    first = next(
        i
        for i, op in enumerate(circuit.ops)
        if op.kind is OpKind.MEASURE and op.targets[0] != 4
    )
    flips = [Op(OpKind.GATE, 'x', (q,), 8) for q in qubits]
    return circuit.insert_after(first - 1, flips)


def test_parse_targets():
    assert PrepTarget.parse('01') == PrepTarget(Basis.Z, 0, 1)
    assert PrepTarget.parse('|+->') == PrepTarget(Basis.X, 0, 1)
    assert [str(t) for t in ALL_TARGETS] == ['00', '01', '10', '11', '++', '+-', '-+', '--']
    with pytest.raises(UnknownNameError) as exinfo:
        PrepTarget.parse('0+')
    assert exinfo.value.kind == 'preparation target'
    assert PrepTarget.parse('10').expected_parities == (1, 0)
    assert PrepTarget.parse('+-').expected_parities == (1, 0)


def test_golden_listing():
    assert to_text(build_prep_circuit(ZERO_ZERO)) == GOLDEN_00


def test_x_basis_listing():
    lines = to_text(build_prep_circuit(PrepTarget.parse('+-'))).splitlines()
    assert lines[17:23] == [
        '7 h D1',
        '7 h D2',
        '7 h D3',
        '7 h D4',
        '7 z D1',
        '7 z D3',
    ]
    assert lines[23:27] == ['8 h D1', '8 h D2', '8 h D3', '8 h D4']


def test_frame_mode():
    target = PrepTarget.parse('11')
    circuit = build_prep_circuit(target, post_rotation='frame')
    lines = to_text(circuit).splitlines()
    assert '7 frame D1 D3' in lines
    assert '7 frame D1 D2' in lines
    assert circuit.frame_mask == 0b01100
    physical = build_prep_circuit(target)
    np.testing.assert_allclose(
        outcome_probabilities(circuit), outcome_probabilities(physical), atol=1e-12
    )


def test_bad_options():
    with pytest.raises(UnknownNameError) as exinfo:
        build_prep_circuit(ZERO_ZERO, cnot_model='stak')
    assert 'stark' in str(exinfo.value)
    with pytest.raises(UnknownNameError):
        build_prep_circuit(ZERO_ZERO, post_rotation='virtual')
    with pytest.raises(UnknownNameError):
        insert_error(build_prep_circuit(ZERO_ZERO), 'D', 0.1)


def test_circuit_validation():
    measure = Op(OpKind.MEASURE, 'measure', (0,), 0, label='c1')
    late = Op(OpKind.GATE, 'h', (0,), 1)
    with pytest.raises(CircuitError) as exinfo:
        Circuit((measure, late), ZERO_ZERO)
    assert 'D1' in str(exinfo.value)
    with pytest.raises(CircuitError):
        Circuit((Op(OpKind.GATE, 'h', (0,), 2), Op(OpKind.GATE, 'h', (1,), 1)), ZERO_ZERO)
    with pytest.raises(CircuitError):
        Circuit((Op(OpKind.GATE, 'h', (7,), 0),), ZERO_ZERO)
    with pytest.raises(UnknownNameError):
        Op(OpKind.GATE, 'sqrtx', (0,), 0).unitary()


def test_error_insertion_listing():
    base = build_prep_circuit(ZERO_ZERO, cnot_model=CnotModel.stark, stark_theta=0.1)
    lines = to_text(insert_error(base, 'A', math.pi)).splitlines()
    i = lines.index('1 barrier A')
    assert lines[i - 1] == '1 zphase D1 theta=0.1'
    assert lines[i + 1] == '1 zphase S1 theta=3.14159'
    lines = to_text(insert_correlated_error(base, 0.5)).splitlines()
    i = lines.index('2 cx D2 S1')
    assert lines[i + 1 : i + 5] == [
        '2 zphase D2 theta=0.1',
        '2 yrot D2 theta=0.5',
        '2 yrot S1 theta=0.5',
        '2 barrier B',
    ]
    assert lines.count('4 yrot S1 theta=0.5') == 1


@pytest.mark.parametrize(
    'site, flipped', [('A', (1, 2, 3)), ('B', (2, 3)), ('C', (3,))]
)
def test_phase_error_propagates_to_controls(site, flipped):
    base = build_prep_circuit(ZERO_ZERO)
    with_error = outcome_probabilities(insert_error(base, site, math.pi))
    with_flips = outcome_probabilities(_data_flip(base, flipped))
    np.testing.assert_allclose(with_error, with_flips, atol=1e-12)


def test_site_b_flat_acceptance():
    base = build_prep_circuit(ZERO_ZERO)
    for theta in np.linspace(0, math.pi, 7):
        probs = outcome_probabilities(insert_error(base, 'B', theta))
        kept = accepted = gauge = protected = 0.0
        for index, p in enumerate(probs):
            c1, c2, c3, c4, cs = _bits(index)
            if cs != 1:
                continue
            kept += p
            if (c1 ^ c2 ^ c3 ^ c4) == 0:
                accepted += p
                protected += p * (c1 ^ c2)
                gauge += p * (c1 ^ c3)
        assert accepted / kept == pytest.approx(1, abs=1e-10)
        assert protected / accepted == pytest.approx(0, abs=1e-10)
        assert gauge / accepted == pytest.approx(math.sin(theta / 2) ** 2, abs=1e-10)


def test_fault_location_count():
    circuit = build_prep_circuit(ZERO_ZERO)
    locations = fault_locations(circuit)
    assert len(locations) == 9 * 3 + 4 * 15
    assert str(locations[0]) == 'X on D1 after op 0'


@pytest.mark.parametrize('target', ['00', '01', '10', '11'])
def test_single_faults_never_corrupt_protected_qubit(target):
    target = PrepTarget.parse(target)
    circuit = build_prep_circuit(target)
    want = target.L1
    for location in fault_locations(circuit):
        probs = outcome_probabilities(insert_fault(circuit, location))
        bad = 0.0
        for index, p in enumerate(probs):
            c1, c2, c3, c4, cs = _bits(index)
            if cs == 1 and (c1 ^ c2 ^ c3 ^ c4) == 0 and (c1 ^ c2) != want:
                bad += p
        assert bad < 1e-12, str(location)


@pytest.mark.parametrize('target', ALL_TARGETS, ids=str)
def test_ideal_preparation(target):
    state = prepared_state(target)
    metrics = codespace_metrics(state, target_state(target).data)
    assert metrics.acceptance == pytest.approx(1)
    assert metrics.fidelity == pytest.approx(1)


def test_ideal_outcomes_match_target():
    for target in ALL_TARGETS:
        probs = outcome_probabilities(build_prep_circuit(target))
        # The stabilizer measurement on |0000> gives c_s = 1 half of the time.
        assert probs[1::2].sum() == pytest.approx(0.5)
        for index in np.flatnonzero(probs > 1e-12):
            c1, c2, c3, c4, cs = _bits(index)
            if cs == 1:
                assert (c1 ^ c2 ^ c3 ^ c4) == 0
                assert (c1 ^ c2, c1 ^ c3) == target.expected_parities


def test_target_state_z_basis():
    np.testing.assert_allclose(
        target_state(PrepTarget.parse('10')).data,
        logical_basis_state(LogicalLabel(1, 0)).data,
    )


def test_gate_damping_lowers_fidelity(ideal_noise):
    noise = NoiseConfig(t1_us=(200.0,) * 5)
    target = PrepTarget.parse('11')
    state = prepared_state(target, noise)
    state.check()
    metrics = codespace_metrics(state, target_state(target).data)
    assert 0.9 < metrics.acceptance < 1
    assert metrics.fidelity < 1
    clean = prepared_state(target, ideal_noise)
    assert codespace_metrics(clean, target_state(target).data).fidelity == pytest.approx(1)


def test_device_preparation(device_config):
    target = PrepTarget.parse('11')
    state = prepared_state(target, device_config.noise.circuit_noise())
    state.check()
    metrics = codespace_metrics(state, target_state(target).data)
    assert 0.5 < metrics.acceptance < 1
    assert 0.5 < metrics.fidelity < 1


def test_postselected_data_state():
    target = PrepTarget.parse('00')
    final = simulate(build_prep_circuit(target, measure_data=False))
    assert syndrome_probability(final) == pytest.approx(0.5)
    data = postselected_data_state(final, p0_s=0.2, p1_s=0.1)
    assert np.trace(data.data).real == pytest.approx(1)
    with pytest.raises(UndefinedMetricError):
        postselected_data_state(QuantumState.zero(5))
    mixed = postselected_data_state(QuantumState.zero(5), p1_s=0.5)
    assert mixed.data[0, 0].real == pytest.approx(1)


def test_outcome_table_needs_all_measurements():
    with pytest.raises(CircuitError):
        outcome_probabilities(build_prep_circuit(ZERO_ZERO, measure_data=False))
    noisy = outcome_probabilities(
        build_prep_circuit(ZERO_ZERO), NoiseConfig().with_readout(0.1, 0.05)
    )
    assert noisy.sum() == pytest.approx(1)
    # Both syndrome branches hold 0000 and 1111 with weight 1/4 each.
    assert noisy[0b00001] == pytest.approx(0.25 * (0.95**4 + 0.1**4) * (0.9 + 0.05))
    assert PostRotation('frame') is PostRotation.frame
