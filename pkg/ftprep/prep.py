"""
The fault-tolerant preparation circuit of the [[4,2,2]] code, its
post-rotations, error-insertion variants and density-matrix simulation.

The register is ``(D1, D2, D3, D4, S1)``. The data qubits start in
:math:`|0\\rangle`, the syndrome qubit in :math:`|1\\rangle`. The :math:`S_x`
stabilizer is measured by conjugating the data with Hadamards around four
CNOTs that use ``D1 ... D4`` as controls and ``S1`` as target. A phase error on
``S1`` after CNOT ``k`` propagates to the controls of the later CNOTs, which
after the closing Hadamards is an X error on ``D(k+1) ... D4``. The barriers
``A``, ``B`` and ``C`` mark the syndrome line after CNOTs 1, 2 and 3.

Circuits are immutable. Modifying functions return new circuits.
"""
import dataclasses
import enum
import itertools
import logging
from typing import Iterable

import numpy as np

from ftprep.code422 import (
    ACCEPTANCE_FLOOR,
    CODE,
    LogicalLabel,
    logical_basis_state,
)
from ftprep.errors import CircuitError, UndefinedMetricError, UnknownNameError
from ftprep.noisemodels import NoiseConfig, amplitude_damping, apply_readout
from ftprep.simcore import (
    CNOT,
    DATA_QUBITS,
    QUBIT_NAMES,
    SYNDROME_QUBIT,
    H,
    KrausChannel,
    QuantumState,
    UnitarySpec,
    X,
    Y,
    Z,
    apply_channel,
    apply_unitary,
    measure_probabilities,
    pauli_matrix,
    project_qubit,
    yrot,
    zphase,
)

__all__ = [
    'Basis',
    'CnotModel',
    'PostRotation',
    'OpKind',
    'Op',
    'Circuit',
    'PrepTarget',
    'ALL_TARGETS',
    'FaultLocation',
    'build_prep_circuit',
    'insert_error',
    'insert_correlated_error',
    'fault_locations',
    'insert_fault',
    'to_text',
    'target_state',
    'simulate',
    'outcome_probabilities',
    'postselected_data_state',
]

logger = logging.getLogger(__name__)

SITES = ('A', 'B', 'C')

_FIXED_GATES = {'h': H, 'x': X, 'y': Y, 'z': Z, 'cx': CNOT}
_PARAMETRIC_GATES = {'zphase': zphase, 'yrot': yrot}


class Basis(enum.Enum):
    Z = 'Z'
    X = 'X'


class CnotModel(enum.Enum):
    """``ideal`` is an exact CNOT. ``stark`` follows every CNOT with a phase
    :math:`Z(\\theta_s)` on its control, the signature of a drive-induced
    Stark shift."""

    ideal = 'ideal'
    stark = 'stark'


class PostRotation(enum.Enum):
    """Whether the logical Paulis of the post-rotation are applied as gates
    (``physical``) or folded into the recorded outcomes (``frame``)."""

    physical = 'physical'
    frame = 'frame'


class OpKind(enum.Enum):
    GATE = 'gate'
    CHANNEL = 'channel'
    MEASURE = 'measure'
    BARRIER = 'barrier'
    FRAME = 'frame'


@dataclasses.dataclass(frozen=True, eq=False)
class Op:
    """One circuit operation.

    ``label`` holds the site name of a barrier, the outcome key of a
    measurement or the Pauli string of a ``pauli`` gate. ``time`` is the
    layer the operation belongs to.
    """

    kind: OpKind
    name: str
    targets: tuple[int, ...]
    time: int
    theta: float | None = None
    label: str | None = None
    channel: KrausChannel | None = None

    def unitary(self) -> UnitarySpec:
        if self.kind is not OpKind.GATE:
            raise CircuitError(f"Operation {self.name!r} is not a gate")
        if self.name in _FIXED_GATES:
            matrix = _FIXED_GATES[self.name]
        elif self.name in _PARAMETRIC_GATES:
            matrix = _PARAMETRIC_GATES[self.name](self.theta)
        elif self.name == 'pauli':
            matrix = pauli_matrix(self.label)
        else:
            raise UnknownNameError(
                self.name,
                'gate',
                [*_FIXED_GATES, *_PARAMETRIC_GATES, 'pauli'],
            )
        return UnitarySpec(matrix, self.targets)


def _gate(name, targets, time, theta=None, label=None):
    return Op(OpKind.GATE, name, tuple(targets), time, theta=theta, label=label)


@dataclasses.dataclass(frozen=True)
class PrepTarget:
    """One of the eight logical targets.

    In the Z basis the bits select :math:`|L_1 L_2\\rangle`. In the X basis
    a set bit selects :math:`|\\bar{-}\\rangle` instead of
    :math:`|\\bar{+}\\rangle`. ``L1`` is the protected qubit in the Z basis
    and the gauge qubit in the X basis.
    """

    basis: Basis
    L1: int
    L2: int

    def __post_init__(self):
        if self.L1 not in (0, 1) or self.L2 not in (0, 1):
            raise CircuitError(
                f"Target labels must be 0 or 1, not ({self.L1!r}, {self.L2!r})"
            )

    @classmethod
    def parse(cls, text: str) -> 'PrepTarget':
        """Parse ``'01'`` style Z-basis or ``'+-'`` style X-basis labels."""
        text = text.strip().strip('|>')
        z_bits = {'0': 0, '1': 1}
        x_bits = {'+': 0, '-': 1}
        if len(text) == 2 and all(c in z_bits for c in text):
            return cls(Basis.Z, z_bits[text[0]], z_bits[text[1]])
        if len(text) == 2 and all(c in x_bits for c in text):
            return cls(Basis.X, x_bits[text[0]], x_bits[text[1]])
        raise UnknownNameError(text, 'preparation target', [str(t) for t in ALL_TARGETS])

    @property
    def expected_parities(self) -> tuple[int, int]:
        """Expected values of the protected (``c1^c2``) and gauge
        (``c1^c3``) parities."""
        if self.basis is Basis.Z:
            return (self.L1, self.L2)
        return (self.L2, self.L1)

    def __str__(self):
        symbols = '01' if self.basis is Basis.Z else '+-'
        return symbols[self.L1] + symbols[self.L2]


ALL_TARGETS = tuple(
    PrepTarget(basis, l1, l2)
    for basis in Basis
    for l1, l2 in itertools.product((0, 1), repeat=2)
)


@dataclasses.dataclass(frozen=True, eq=False)
class Circuit:
    ops: tuple[Op, ...]
    target: PrepTarget
    cnot_model: CnotModel = CnotModel.ideal

    def __post_init__(self):
        ops = tuple(self.ops)
        measured = {}
        last_time = -1
        for i, op in enumerate(ops):
            if op.time < last_time:
                raise CircuitError(f"Operation {i} ({op.name}) goes back in time")
            last_time = op.time
            for q in op.targets:
                if not 0 <= q < len(QUBIT_NAMES):
                    raise CircuitError(f"Operation {i} targets unknown qubit {q}")
                if q in measured and op.kind in (OpKind.GATE, OpKind.CHANNEL):
                    raise CircuitError(
                        f"Operation {i} ({op.name}) acts on {QUBIT_NAMES[q]} after it "
                        "was measured"
                    )
            if op.kind is OpKind.MEASURE:
                measured.update({q: op.label for q in op.targets})
        object.__setattr__(self, 'ops', ops)

    @property
    def sites(self) -> dict[str, int]:
        """Index of each named barrier."""
        return {op.label: i for i, op in enumerate(self.ops) if op.kind is OpKind.BARRIER}

    @property
    def measured_qubits(self) -> dict[int, str]:
        return {
            q: op.label
            for op in self.ops
            if op.kind is OpKind.MEASURE
            for q in op.targets
        }

    @property
    def frame_mask(self) -> int:
        """XOR mask applied to the recorded outcome index."""
        mask = 0
        for op in self.ops:
            if op.kind is OpKind.FRAME:
                for q in op.targets:
                    mask ^= 1 << (len(QUBIT_NAMES) - 1 - q)
        return mask

    def insert_after(self, index: int, new_ops: Iterable[Op]) -> 'Circuit':
        ops = list(self.ops)
        ops[index + 1 : index + 1] = list(new_ops)
        return dataclasses.replace(self, ops=tuple(ops))


def _coerce_enum(value, enumtype, kind):
    if isinstance(value, enumtype):
        return value
    try:
        return enumtype(value)
    except ValueError as e:
        raise UnknownNameError(value, kind, [m.value for m in enumtype]) from e


def build_prep_circuit(
    target: PrepTarget,
    cnot_model: CnotModel | str = CnotModel.ideal,
    stark_theta: float = 0.0,
    post_rotation: PostRotation | str = PostRotation.physical,
    measure_data: bool = True,
) -> Circuit:
    """Build the preparation circuit for ``target``.

    Parameters
    ----------
    target : PrepTarget
        The logical state to prepare.
    cnot_model : CnotModel or str
        ``'ideal'`` or ``'stark'``.
    stark_theta : float
        Phase of the ``stark`` model, radians per CNOT.
    post_rotation : PostRotation or str
        How the logical Paulis of the post-rotation are applied.
    measure_data : bool
        Whether to append the X-basis measurement frame and the data
        measurements. Without them the circuit ends with the prepared
        codeword, for tomography and idle experiments.

    Raises
    ------
    UnknownNameError
        If ``cnot_model`` or ``post_rotation`` is not known.
    """
    cnot_model = _coerce_enum(cnot_model, CnotModel, 'CNOT model')
    post_rotation = _coerce_enum(post_rotation, PostRotation, 'post-rotation mode')
    s1 = SYNDROME_QUBIT
    ops = [_gate('h', (q,), 0) for q in DATA_QUBITS]
    ops.append(_gate('x', (s1,), 0))
    for k, q in enumerate(DATA_QUBITS, start=1):
        ops.append(_gate('cx', (q, s1), k))
        if cnot_model is CnotModel.stark:
            ops.append(_gate('zphase', (q,), k, theta=stark_theta))
        if k <= len(SITES):
            ops.append(Op(OpKind.BARRIER, 'barrier', (s1,), k, label=SITES[k - 1]))
    ops.extend(_gate('h', (q,), 5) for q in DATA_QUBITS)
    ops.append(Op(OpKind.MEASURE, 'measure', (s1,), 6, label='cs'))

    if target.basis is Basis.Z:
        paulis = CODE.logical_x
    else:
        ops.extend(_gate('h', (q,), 7) for q in DATA_QUBITS)
        paulis = CODE.logical_z
    flips = [p for p, bit in zip(paulis, (target.L1, target.L2)) if bit]
    for pauli in flips:
        support = tuple(q for q, c in zip(DATA_QUBITS, pauli) if c != 'I')
        if post_rotation is PostRotation.physical:
            ops.extend(_gate(pauli[q].lower(), (q,), 7) for q in support)
        else:
            # Z-type logicals reach the outcomes through the measurement frame
            # as X-type flips on the same qubits.
            ops.append(Op(OpKind.FRAME, 'frame', support, 7))

    if measure_data:
        if target.basis is Basis.X:
            ops.extend(_gate('h', (q,), 8) for q in DATA_QUBITS)
        for q in DATA_QUBITS:
            ops.append(Op(OpKind.MEASURE, 'measure', (q,), 9, label=f'c{q + 1}'))
    return Circuit(tuple(ops), target, cnot_model)

def insert_error(circuit: Circuit, site: str, theta: float) -> Circuit:
    """Place :math:`Z(\\theta)` on S1 at barrier ``site`` (``'A'``, ``'B'``
    or ``'C'``)."""
    sites = circuit.sites
    if site not in sites:
        raise UnknownNameError(site, 'insertion site', sorted(sites))
    index = sites[site]
    barrier = circuit.ops[index]
    error = _gate('zphase', (SYNDROME_QUBIT,), barrier.time, theta=theta)
    return circuit.insert_after(index, [error])


def insert_correlated_error(circuit: Circuit, theta: float) -> Circuit:
    """Apply :math:`Y(\\theta)` to both qubits of every CNOT right after it
    (and after its Stark phase, if any)."""
    ops = []
    pending = []
    for op in circuit.ops:
        is_stark = (
            op.kind is OpKind.GATE
            and op.name == 'zphase'
            and op.targets[0] in DATA_QUBITS
        )
        if pending and not is_stark:
            ops.extend(pending)
            pending = []
        ops.append(op)
        if op.kind is OpKind.GATE and op.name == 'cx':
            pending = [_gate('yrot', (q,), op.time, theta=theta) for q in op.targets]
    ops.extend(pending)
    return dataclasses.replace(circuit, ops=tuple(ops))


@dataclasses.dataclass(frozen=True)
class FaultLocation:
    """A single Pauli fault right after operation ``index``."""

    index: int
    targets: tuple[int, ...]
    pauli: str

    def __str__(self):
        names = ' '.join(QUBIT_NAMES[q] for q in self.targets)
        return f"{self.pauli} on {names} after op {self.index}"


def fault_locations(circuit: Circuit) -> list[FaultLocation]:
    """Every non-identity Pauli after every gate: 3 per one-qubit gate and
    15 per two-qubit gate."""
    res = []
    for i, op in enumerate(circuit.ops):
        if op.kind is not OpKind.GATE:
            continue
        for label in itertools.product('IXYZ', repeat=len(op.targets)):
            pauli = ''.join(label)
            if set(pauli) != {'I'}:
                res.append(FaultLocation(i, op.targets, pauli))
    return res


def insert_fault(circuit: Circuit, location: FaultLocation) -> Circuit:
    time = circuit.ops[location.index].time
    fault = _gate('pauli', location.targets, time, label=location.pauli)
    return circuit.insert_after(location.index, [fault])


def _format_op(op):
    if op.kind is OpKind.BARRIER:
        return f"{op.time} barrier {op.label}"
    if op.kind is OpKind.FRAME:
        return f"{op.time} frame " + ' '.join(QUBIT_NAMES[q] for q in op.targets)
    parts = [str(op.time), op.name, *(QUBIT_NAMES[q] for q in op.targets)]
    if op.kind is OpKind.MEASURE:
        parts.append(f"key={op.label}")
    elif op.kind is OpKind.CHANNEL:
        parts.append(f"kraus={len(op.channel.operators)}")
    else:
        if op.label is not None:
            parts.append(op.label)
        if op.theta is not None:
            parts.append(f"theta={op.theta:.6g}")
    return ' '.join(parts)


def to_text(circuit: Circuit) -> str:
    """Line based listing, one operation per line: layer, name, qubits and
    parameters."""
    return '\n'.join(_format_op(op) for op in circuit.ops) + '\n'


def target_state(target: PrepTarget) -> QuantumState:
    """The ideal 4-qubit codeword of ``target``."""
    if target.basis is Basis.Z:
        return logical_basis_state(LogicalLabel(target.L1, target.L2))
    vec = logical_basis_state(LogicalLabel(0, 0)).data
    for q in DATA_QUBITS:
        vec = _one_qubit_on(H, q) @ vec
    for pauli, bit in zip(CODE.logical_z, (target.L1, target.L2)):
        if bit:
            vec = pauli_matrix(pauli) @ vec
    return QuantumState(4, vec)


def _one_qubit_on(matrix, qubit, n=4):
    factors = [np.eye(2)] * n
    factors[qubit] = matrix
    res = factors[0]
    for f in factors[1:]:
        res = np.kron(res, f)
    return res


def _layer_duration_us(layer_ops, noise):
    gates = [op for op in layer_ops if op.kind is OpKind.GATE]
    if any(op.name == 'cx' for op in gates):
        return noise.cnot_ns * 1e-3
    if gates:
        return noise.single_qubit_ns * 1e-3
    return 0.0


def simulate(circuit: Circuit, noise: NoiseConfig | None = None) -> QuantumState:
    """Evolve the register through ``circuit`` and return the state right
    before the final measurements.

    Measurements are terminal on each qubit, so deferring them does not
    change any outcome statistics. With ``noise``, every qubit not yet
    measured is damped for the length of each layer (``cnot_ns`` for
    layers with a CNOT, ``single_qubit_ns`` for other gate layers). Readout
    errors are not applied here; see :py:func:`outcome_probabilities`.
    """
    state = QuantumState.zero(len(QUBIT_NAMES))
    measured = set()
    damp = noise is not None and noise.has_damping
    for time, layer in itertools.groupby(circuit.ops, key=lambda op: op.time):
        layer = list(layer)
        for op in layer:
            if op.kind is OpKind.GATE:
                state = apply_unitary(state, op.unitary())
            elif op.kind is OpKind.CHANNEL:
                state = apply_channel(state, op.channel)
            elif op.kind is OpKind.MEASURE:
                measured.update(op.targets)
        if not damp:
            continue
        duration = _layer_duration_us(layer, noise)
        if duration == 0:
            continue
        for q, t1 in enumerate(noise.t1_us):
            if q not in measured and np.isfinite(t1):
                state = apply_channel(state, amplitude_damping(duration, t1, q))
        logger.debug("Damped layer %d for %.3g us", time, duration)
    return state


def outcome_probabilities(
    circuit: Circuit, noise: NoiseConfig | None = None
) -> np.ndarray:
    """Probabilities of the 32 recorded outcomes ``c1 c2 c3 c4 cs``, indexed by
    their integer value, with readout crossovers and frame changes applied."""
    if len(circuit.measured_qubits) != len(QUBIT_NAMES):
        raise CircuitError("Outcome tables need a circuit that measures every qubit")
    probs = measure_probabilities(simulate(circuit, noise))
    if noise is not None:
        probs = apply_readout(probs, noise.p0, noise.p1)
    mask = circuit.frame_mask
    if mask:
        probs = probs[np.arange(len(probs)) ^ mask]
    return probs


def postselected_data_state(
    state: QuantumState, p0_s: float = 0.0, p1_s: float = 0.0
) -> QuantumState:
    """The 4-qubit data state conditioned on a *reported* ``c_s = 1``.

    A true 1 is reported as 1 with probability ``1 - p0_s`` and a true 0
    with probability ``p1_s``.

    Raises
    ------
    UndefinedMetricError
        If a reported ``c_s = 1`` has vanishing probability.
    """
    rho = (1 - p0_s) * project_qubit(state, SYNDROME_QUBIT, 1) + p1_s * project_qubit(
        state, SYNDROME_QUBIT, 0
    )
    weight = float(np.real(np.trace(rho)))
    if weight < ACCEPTANCE_FLOOR:
        raise UndefinedMetricError('the postselected data state', weight)
    return QuantumState(4, rho / weight)


def syndrome_probability(state: QuantumState) -> float:
    """Probability of a true ``c_s = 1``."""
    return float(np.real(np.trace(project_qubit(state, SYNDROME_QUBIT, 1))))


def prepared_state(
    target: PrepTarget,
    noise: NoiseConfig | None = None,
    cnot_model: CnotModel | str = CnotModel.ideal,
    stark_theta: float = 0.0,
) -> QuantumState:
    """Data state prepared for ``target``, conditioned on a reported
    ``c_s = 1`` under ``noise``."""
    circuit = build_prep_circuit(
        target, cnot_model, stark_theta=stark_theta, measure_data=False
    )
    state = simulate(circuit, noise)
    if noise is None:
        return postselected_data_state(state)
    s = SYNDROME_QUBIT
    return postselected_data_state(state, noise.p0[s], noise.p1[s])

