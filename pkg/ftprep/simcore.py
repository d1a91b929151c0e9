"""
Exact small-register quantum state engine.

States are stored either as a density matrix (the canonical representation)
or, for unitary-only evolution, as a state vector. Qubit ``i`` is the ``i``-th
tensor factor, so in an integer outcome index qubit 0 is the most significant
bit and the bitstring label ``'01101'`` reads qubit 0 first. On the device
register the order is :py:data:`QUBIT_NAMES`, ``(D1, D2, D3, D4, S1)``.

All operations are pure: they take a state and return a new one.
"""
import concurrent.futures
import dataclasses
import functools
import logging
import math
import os
from typing import Sequence

import numpy as np

from ftprep.errors import NotTracePreservingError, SimulationError

__all__ = [
    'QUBIT_NAMES',
    'DATA_QUBITS',
    'SYNDROME_QUBIT',
    'QuantumState',
    'UnitarySpec',
    'KrausChannel',
    'apply_unitary',
    'apply_channel',
    'measure_probabilities',
    'sample_outcomes',
    'sample_shots',
    'sample_from_probabilities',
    'format_bitstring',
    'pauli_matrix',
    'zphase',
    'yrot',
    'expectation',
    'project_qubit',
    'set_debug',
]

logger = logging.getLogger(__name__)

QUBIT_NAMES = ('D1', 'D2', 'D3', 'D4', 'S1')
DATA_QUBITS = (0, 1, 2, 3)
SYNDROME_QUBIT = 4

MAX_QUBITS = 5
STATE_ATOL = 1e-10
POSITIVITY_ATOL = 1e-9
OPERATOR_ATOL = 1e-12

# Shots are drawn in fixed-size blocks with one RNG substream each, so that the
# outcome sequence does not depend on how many lanes draw the blocks.
SAMPLING_BLOCK = 1 << 16

_DEBUG = os.environ.get('FTPREP_DEBUG', '') not in ('', '0')

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

PAULIS = {'I': I2, 'X': X, 'Y': Y, 'Z': Z}


def set_debug(flag: bool) -> None:
    """Turn invariant checking after every operation on or off. The initial
    value is read from the ``FTPREP_DEBUG`` environment variable."""
    global _DEBUG
    _DEBUG = bool(flag)


def pauli_matrix(label: str) -> np.ndarray:
    """Matrix of a Pauli string such as ``'XZIY'`` (first character acts on
    qubit 0)."""
    try:
        factors = [PAULIS[c] for c in label.upper()]
    except KeyError as e:
        raise SimulationError(f"Invalid Pauli label {label!r}") from e
    return functools.reduce(np.kron, factors, np.eye(1, dtype=complex))


def zphase(theta: float) -> np.ndarray:
    """The phase gate :math:`Z(\\theta) = \\mathrm{diag}(1, e^{i\\theta})`."""
    return np.diag([1, np.exp(1j * theta)]).astype(complex)


def yrot(theta: float) -> np.ndarray:
    """The rotation :math:`Y(\\theta) = \\exp(-i\\theta Y/2)`."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def format_bitstring(index: int, num_qubits: int) -> str:
    return format(index, f'0{num_qubits}b')


def _check_targets(targets, num_qubits):
    if len(set(targets)) != len(targets):
        raise SimulationError(f"Targets must be distinct, got {tuple(targets)}")
    for t in targets:
        if not 0 <= t < num_qubits:
            raise SimulationError(
                f"Target {t} out of range for a {num_qubits}-qubit state"
            )


def _check_square(matrix, k, what):
    dim = 2 ** k
    if matrix.shape != (dim, dim):
        raise SimulationError(
            f"{what} acting on {k} qubit(s) must be {dim}x{dim}, "
            f"not {'x'.join(map(str, matrix.shape))}"
        )


@dataclasses.dataclass(frozen=True, eq=False)
class QuantumState:
    """A state of ``num_qubits`` qubits.

    Parameters
    ----------
    num_qubits : int
        Register size, between 1 and 5.
    data : numpy.ndarray
        Either a ``2**n x 2**n`` density matrix or a length ``2**n`` state
        vector (pure-state fast path).
    """

    num_qubits: int
    data: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise SimulationError(
                f"Only 1 to {MAX_QUBITS} qubits are supported, not {self.num_qubits}"
            )
        data = np.asarray(self.data, dtype=complex)
        dim = 2 ** self.num_qubits
        if data.shape not in ((dim,), (dim, dim)):
            raise SimulationError(
                f"Data of shape {data.shape} does not describe {self.num_qubits} qubits"
            )
        object.__setattr__(self, 'data', data)

    @classmethod
    def zero(cls, num_qubits: int, pure: bool = True) -> 'QuantumState':
        """The all-zero computational basis state."""
        vec = np.zeros(2 ** num_qubits, dtype=complex)
        vec[0] = 1
        state = cls(num_qubits, vec)
        return state if pure else state.to_density()

    @classmethod
    def from_bitstring(cls, bits: str, pure: bool = True) -> 'QuantumState':
        vec = np.zeros(2 ** len(bits), dtype=complex)
        vec[int(bits, 2)] = 1
        state = cls(len(bits), vec)
        return state if pure else state.to_density()

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> 'QuantumState':
        dim = 2 ** num_qubits
        return cls(num_qubits, np.eye(dim, dtype=complex) / dim)

    @property
    def is_pure(self) -> bool:
        """Whether the state is stored as a vector."""
        return self.data.ndim == 1

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_density(self) -> 'QuantumState':
        if self.is_pure:
            return QuantumState(self.num_qubits, self.density_matrix())
        return self

    def check(self) -> None:
        """Raise :py:class:`SimulationError` if the trace, hermiticity or
        positivity invariant is violated."""
        if self.is_pure:
            norm = np.vdot(self.data, self.data).real
            if abs(norm - 1) > STATE_ATOL:
                raise SimulationError(f"State vector norm is {norm!r}, not 1")
            return
        rho = self.data
        tr = np.trace(rho)
        if abs(tr - 1) > STATE_ATOL:
            raise SimulationError(f"Density matrix trace is {tr!r}, not 1")
        if np.max(np.abs(rho - rho.conj().T)) > STATE_ATOL:
            raise SimulationError("Density matrix is not Hermitian")
        smallest = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
        if smallest < -POSITIVITY_ATOL:
            raise SimulationError(
                f"Density matrix has negative eigenvalue {smallest:.3g}"
            )


@dataclasses.dataclass(frozen=True, eq=False)
class UnitarySpec:
    """A one- or two-qubit unitary and the ordered qubits it acts on."""

    matrix: np.ndarray
    targets: tuple[int, ...]

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        targets = tuple(self.targets)
        if len(targets) not in (1, 2):
            raise SimulationError("Unitaries act on one or two qubits")
        _check_square(matrix, len(targets), 'Unitary')
        if not np.allclose(
            matrix.conj().T @ matrix, np.eye(len(matrix)), rtol=0, atol=OPERATOR_ATOL
        ):
            raise SimulationError("Matrix is not unitary")
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, 'targets', targets)

    def dagger(self) -> 'UnitarySpec':
        return UnitarySpec(self.matrix.conj().T, self.targets)


@dataclasses.dataclass(frozen=True, eq=False)
class KrausChannel:
    """A trace-preserving channel given by Kraus operators acting on ``targets``."""

    operators: tuple[np.ndarray, ...]
    targets: tuple[int, ...]

    def __post_init__(self):
        ops = tuple(np.asarray(op, dtype=complex) for op in self.operators)
        targets = tuple(self.targets)
        if not ops:
            raise SimulationError("A channel needs at least one Kraus operator")
        if len(targets) not in (1, 2):
            raise SimulationError("Channels act on one or two qubits")
        for op in ops:
            _check_square(op, len(targets), 'Kraus operator')
        completeness = sum(op.conj().T @ op for op in ops)
        deviation = np.max(np.abs(completeness - np.eye(len(completeness))))
        if deviation > OPERATOR_ATOL:
            raise NotTracePreservingError(deviation)
        object.__setattr__(self, 'operators', ops)
        object.__setattr__(self, 'targets', targets)


def _apply_to_axes(tensor, op, axes):
    k = len(axes)
    op_t = op.reshape((2,) * (2 * k))
    out = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _conjugate(rho, op, targets, n):
    tensor = rho.reshape((2,) * (2 * n))
    tensor = _apply_to_axes(tensor, op, targets)
    tensor = _apply_to_axes(tensor, op.conj(), [n + t for t in targets])
    return tensor.reshape(rho.shape)


def _maybe_check(state):
    if _DEBUG:
        state.check()
    return state


def apply_unitary(state: QuantumState, u: UnitarySpec) -> QuantumState:
    """Return :math:`U\\rho U^\\dagger` with ``u`` acting on its targets.

    A pure input stays pure.
    """
    n = state.num_qubits
    _check_targets(u.targets, n)
    if state.is_pure:
        tensor = state.data.reshape((2,) * n)
        out = _apply_to_axes(tensor, u.matrix, u.targets).reshape(-1)
    else:
        out = _conjugate(state.data, u.matrix, u.targets, n)
    return _maybe_check(QuantumState(n, out))


def apply_channel(state: QuantumState, ch: KrausChannel) -> QuantumState:
    """Return :math:`\\sum_i A_i\\rho A_i^\\dagger`. The result is always a
    density matrix."""
    n = state.num_qubits
    _check_targets(ch.targets, n)
    rho = state.density_matrix()
    out = sum(_conjugate(rho, op, ch.targets, n) for op in ch.operators)
    return _maybe_check(QuantumState(n, out))


def measure_probabilities(state: QuantumState) -> np.ndarray:
    """Computational-basis outcome probabilities, indexed by the integer
    value of the outcome bitstring.

    Round-off below zero is clipped and the table renormalized.
    """
    if state.is_pure:
        probs = np.abs(state.data) ** 2
    else:
        probs = np.real(np.diagonal(state.data)).copy()
    probs = np.clip(probs, 0, None)
    return probs / probs.sum()


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def sample_from_probabilities(
    probabilities: Sequence[float], shots: int, seed, lanes: int = 1
) -> np.ndarray:
    """Draw ``shots`` i.i.d. outcome indices from a probability table.

    Parameters
    ----------
    probabilities : Sequence[float]
        Nonnegative weights summing to one.
    shots : int
        Number of samples, at least one.
    seed : int or numpy.random.SeedSequence
        Seed of the sampling stream.
    lanes : int
        Number of worker threads. The result does not depend on it.

    Returns
    -------
    outcomes : numpy.ndarray
        Integer outcome indices.
    """
    if shots < 1:
        raise SimulationError(f"Number of shots must be at least 1, not {shots}")
    probs = np.clip(np.asarray(probabilities, dtype=float), 0, None)
    probs = probs / probs.sum()
    nblocks = -(-shots // SAMPLING_BLOCK)
    streams = _seed_sequence(seed).spawn(nblocks)

    def draw(i):
        rng = np.random.default_rng(streams[i])
        size = min(SAMPLING_BLOCK, shots - i * SAMPLING_BLOCK)
        return rng.choice(len(probs), size=size, p=probs)

    if lanes > 1 and nblocks > 1:
        with concurrent.futures.ThreadPoolExecutor(lanes) as pool:
            blocks = list(pool.map(draw, range(nblocks)))
    else:
        blocks = [draw(i) for i in range(nblocks)]
    return np.concatenate(blocks)


def sample_outcomes(
    state: QuantumState, shots: int, seed, lanes: int = 1
) -> np.ndarray:
    """Sample computational-basis outcome indices from ``state``."""
    return sample_from_probabilities(measure_probabilities(state), shots, seed, lanes)


def sample_shots(
    state: QuantumState, shots: int, seed, lanes: int = 1
) -> list[str]:
    """Sample computational-basis outcomes from ``state`` as bitstrings."""
    outcomes = sample_outcomes(state, shots, seed, lanes)
    return [format_bitstring(int(i), state.num_qubits) for i in outcomes]


def expectation(state: QuantumState, operator: np.ndarray) -> float:
    """Real part of :math:`\\mathrm{tr}(\\rho O)` for a full-register operator."""
    if state.is_pure:
        return float(np.real(np.vdot(state.data, operator @ state.data)))
    return float(np.real(np.trace(state.data @ operator)))


def project_qubit(state: QuantumState, qubit: int, bit: int) -> np.ndarray:
    """Unnormalized density matrix of the remaining qubits after projecting
    ``qubit`` onto ``|bit>``. Its trace is the probability of the outcome."""
    n = state.num_qubits
    _check_targets((qubit,), n)
    if n == 1:
        raise SimulationError("Cannot project the only qubit of a register")
    tensor = state.density_matrix().reshape((2,) * (2 * n))
    index = [slice(None)] * (2 * n)
    index[qubit] = bit
    index[n + qubit] = bit
    dim = 2 ** (n - 1)
    return tensor[tuple(index)].reshape(dim, dim)
