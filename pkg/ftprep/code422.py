"""
Algebra of the [[4,2,2]] code: stabilizers, logical operators, destabilizers,
the 16-state logical basis :math:`|L_1 L_2, s_z s_x\\rangle` and codespace
metrics.

Labels are ordered ``(L1, L2, s_z, s_x)``, most significant first. Syndrome bit
``s_z`` is set when :math:`S_x` has eigenvalue -1 and ``s_x`` when :math:`S_z`
has eigenvalue -1. Only the ``s_z = s_x = 0`` states are fixed by the code
definition; the other sectors are defined as
:math:`|L, s_z s_x\\rangle = \\tilde{Z}_D^{s_z} \\tilde{X}_D^{s_x} |L, 00\\rangle`,
which pins every global phase.
"""
import dataclasses
import functools
import itertools
import math

import numpy as np

from ftprep.errors import SimulationError, UndefinedMetricError
from ftprep.simcore import QuantumState, pauli_matrix

__all__ = [
    'CodeSpec',
    'CODE',
    'LogicalLabel',
    'commutes',
    'logical_basis_state',
    'logical_change_of_basis',
    'to_logical_frame',
    'sector_projector',
    'sector_probabilities',
    'codespace_metrics',
]

ACCEPTANCE_FLOOR = 1e-12


def commutes(a: str, b: str) -> bool:
    """Whether two Pauli strings of equal length commute."""
    if len(a) != len(b):
        raise SimulationError(f"Pauli strings {a!r} and {b!r} differ in length")
    clashes = sum(p != 'I' and q != 'I' and p != q for p, q in zip(a, b))
    return clashes % 2 == 0


@dataclasses.dataclass(frozen=True)
class CodeSpec:
    """Pauli-label description of the [[4,2,2]] code. The first character of
    each label acts on D1."""

    stabilizer_x: str = 'XXXX'
    stabilizer_z: str = 'ZZZZ'
    logical_x: tuple[str, str] = ('XIXI', 'XXII')
    logical_z: tuple[str, str] = ('ZZII', 'ZIZI')
    destabilizer_z: str = 'IIIZ'
    destabilizer_x: str = 'IIIX'

    @property
    def stabilizers(self) -> tuple[str, str]:
        return (self.stabilizer_x, self.stabilizer_z)


CODE = CodeSpec()


@dataclasses.dataclass(frozen=True)
class LogicalLabel:
    """A label :math:`|L_1 L_2, s_z s_x\\rangle` of the logical basis."""

    L1: int
    L2: int
    s_z: int = 0
    s_x: int = 0

    def __post_init__(self):
        for name in ('L1', 'L2', 's_z', 's_x'):
            if getattr(self, name) not in (0, 1):
                raise SimulationError(
                    f"Label field {name} must be 0 or 1, not {getattr(self, name)!r}"
                )

    @property
    def index(self) -> int:
        """Position in the logical basis ordering."""
        return 8 * self.L1 + 4 * self.L2 + 2 * self.s_z + self.s_x

    @classmethod
    def from_index(cls, index: int) -> 'LogicalLabel':
        if not 0 <= index < 16:
            raise SimulationError(f"Logical basis index {index} out of range")
        return cls(*(int(b) for b in format(index, '04b')))

    def __str__(self):
        return f"|{self.L1}{self.L2},{self.s_z}{self.s_x}>"


ALL_LABELS = tuple(LogicalLabel.from_index(i) for i in range(16))


def logical_basis_state(label: LogicalLabel) -> QuantumState:
    """The pure 4-qubit state with the given logical label."""
    vec = np.zeros(16, dtype=complex)
    vec[0b0000] = vec[0b1111] = 1 / math.sqrt(2)
    ops = []
    if label.L1:
        ops.append(CODE.logical_x[0])
    if label.L2:
        ops.append(CODE.logical_x[1])
    if label.s_x:
        ops.append(CODE.destabilizer_x)
    if label.s_z:
        ops.append(CODE.destabilizer_z)
    for op in ops:
        vec = pauli_matrix(op) @ vec
    return QuantumState(4, vec)


@functools.lru_cache()
def _change_of_basis():
    u = np.column_stack([logical_basis_state(lab).data for lab in ALL_LABELS])
    u.setflags(write=False)
    return u


def logical_change_of_basis() -> np.ndarray:
    """The 16x16 unitary whose columns are the logical basis states, in label
    order. Conjugating a physical operator ``O`` as ``U^† O U`` expresses it in
    the logical frame."""
    return _change_of_basis().copy()


def to_logical_frame(rho) -> np.ndarray:
    """Express a 4-qubit density matrix (or state) in the logical basis."""
    if isinstance(rho, QuantumState):
        rho = rho.density_matrix()
    u = _change_of_basis()
    return u.conj().T @ np.asarray(rho) @ u


def sector_projector(s_z: int, s_x: int) -> np.ndarray:
    """Projector onto the syndrome sector ``(s_z, s_x)``."""
    u = _change_of_basis()
    cols = [
        LogicalLabel(l1, l2, s_z, s_x).index
        for l1, l2 in itertools.product((0, 1), repeat=2)
    ]
    block = u[:, cols]
    return block @ block.conj().T


@dataclasses.dataclass(frozen=True, eq=False)
class Sector:
    """Weight of a syndrome sector and the renormalized 4x4 logical density
    matrix within it (``None`` when the sector is empty)."""

    probability: float
    logical_state: np.ndarray | None

    @property
    def defined(self) -> bool:
        return self.logical_state is not None


def sector_probabilities(state: QuantumState) -> dict[tuple[int, int], Sector]:
    """Split a 4-qubit state over the four syndrome sectors.

    Returns
    -------
    sectors : dict
        Mapping of ``(s_z, s_x)`` to :py:class:`Sector`. Logical matrices are
        indexed by ``2 * L1 + L2``.
    """
    if state.num_qubits != 4:
        raise SimulationError(
            f"Sector analysis needs a 4-qubit state, not {state.num_qubits} qubits"
        )
    logical = to_logical_frame(state)
    res = {}
    for s_z, s_x in itertools.product((0, 1), repeat=2):
        idx = [
            LogicalLabel(l1, l2, s_z, s_x).index
            for l1, l2 in itertools.product((0, 1), repeat=2)
        ]
        block = logical[np.ix_(idx, idx)]
        p = float(np.real(np.trace(block)))
        res[(s_z, s_x)] = Sector(
            probability=p, logical_state=block / p if p > ACCEPTANCE_FLOOR else None
        )
    return res


@dataclasses.dataclass(frozen=True)
class CodespaceMetrics:
    acceptance: float
    fidelity: float


def codespace_metrics(rho, target) -> CodespaceMetrics:
    """Acceptance :math:`\\mathrm{tr}\\,\\rho_{\\tilde{0}\\tilde{0}}` and fidelity of
    the codespace block with a target.

    Parameters
    ----------
    rho : QuantumState or numpy.ndarray
        A 4-qubit state.
    target : LogicalLabel or numpy.ndarray
        The target, either as a logical label or as a 4-qubit state vector
        (used for X-basis codewords).

    Raises
    ------
    UndefinedMetricError
        If the acceptance is below 1e-12.
    """
    if isinstance(rho, QuantumState):
        rho = rho.density_matrix()
    rho = np.asarray(rho)
    if isinstance(target, LogicalLabel):
        target = logical_basis_state(target).data
    target = np.asarray(target, dtype=complex)
    proj = sector_projector(0, 0)
    block = proj @ rho @ proj
    acceptance = float(np.real(np.trace(block)))
    if acceptance < ACCEPTANCE_FLOOR:
        raise UndefinedMetricError('codespace fidelity', acceptance)
    fidelity = float(np.real(np.vdot(target, block @ target))) / acceptance
    return CodespaceMetrics(acceptance=acceptance, fidelity=fidelity)
