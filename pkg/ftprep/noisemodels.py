"""
Parameterized noise: amplitude damping, asymmetric readout flips, static ZZ
free evolution and idle-time evolution.

Times are in microseconds, ZZ strengths in kHz and gate lengths in
nanoseconds. A ZZ strength :math:`\\eta` contributes :math:`\\pi\\eta Z_iZ_j` to
the Hamiltonian, so a pair of qubits in :math:`|{+}{+}\\rangle` sees
:math:`\\langle X_i\\rangle = \\cos(2\\pi\\eta t)`, reaching -1 at
:math:`t_\\pi = 1/(2|\\eta|)`. Idling combines the ZZ Hamiltonian with
per-qubit T1 decay in one Lindblad generator. Pure dephasing is not modeled.
"""
import dataclasses
import enum
import math
from typing import Sequence

import numpy as np
from scipy import linalg

from ftprep.errors import SimulationError
from ftprep.simcore import (
    DATA_QUBITS,
    QUBIT_NAMES,
    KrausChannel,
    QuantumState,
    UnitarySpec,
    X,
    apply_unitary,
)

__all__ = [
    'NoiseConfig',
    'Echo',
    'damping_gamma',
    'amplitude_damping',
    'readout_flip',
    'flip_bits',
    'assignment_error',
    'apply_readout',
    'zz_evolution',
    'idle_evolution',
    'idle_generator',
]

DEFAULT_SLICES = 100


def _check_probability(p, name):
    if not 0 <= p <= 1:
        raise SimulationError(f"{name} must be a probability in [0, 1], not {p!r}")
    return float(p)


@dataclasses.dataclass(frozen=True, eq=False)
class NoiseConfig:
    """Device noise parameters, one entry per qubit in
    :py:data:`ftprep.simcore.QUBIT_NAMES` order.

    Parameters
    ----------
    t1_us : tuple[float, ...]
        Relaxation times. ``math.inf`` disables damping.
    p0 : tuple[float, ...]
        Readout crossover :math:`P(0|1)`.
    p1 : tuple[float, ...]
        Readout crossover :math:`P(1|0)`.
    zz_khz : numpy.ndarray
        Symmetric 5x5 static ZZ strengths with zero diagonal.
    stark_theta : float
        Systematic phase in radians added on the data qubit of every CNOT.
        Zero models the four-pulse CNOT.
    single_qubit_ns, cnot_ns : float
        Gate lengths used for damping during the preparation circuit.
    """

    t1_us: tuple[float, ...] = (math.inf,) * 5
    p0: tuple[float, ...] = (0.0,) * 5
    p1: tuple[float, ...] = (0.0,) * 5
    zz_khz: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros((5, 5)))
    stark_theta: float = 0.0
    single_qubit_ns: float = 85.0
    cnot_ns: float = 780.0

    def __post_init__(self):
        n = len(QUBIT_NAMES)
        for name in ('t1_us', 'p0', 'p1'):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != n:
                raise SimulationError(
                    f"{name} needs {n} values, one per qubit, not {len(values)}"
                )
            object.__setattr__(self, name, values)
        for q, t1 in zip(QUBIT_NAMES, self.t1_us):
            if not t1 > 0:
                raise SimulationError(f"T1 of {q} must be positive, not {t1!r}")
        for q, a, b in zip(QUBIT_NAMES, self.p0, self.p1):
            _check_probability(a, f"p0 of {q}")
            _check_probability(b, f"p1 of {q}")
        zz = _check_zz(self.zz_khz)
        if zz.shape != (n, n):
            raise SimulationError(f"ZZ matrix must be {n}x{n}, not {zz.shape}")
        object.__setattr__(self, 'zz_khz', zz)
        if self.single_qubit_ns < 0 or self.cnot_ns < 0:
            raise SimulationError("Gate lengths cannot be negative")

    @classmethod
    def ideal(cls) -> 'NoiseConfig':
        return cls()

    def with_readout(self, p0: float, p1: float) -> 'NoiseConfig':
        """Copy with the same readout crossovers on every qubit."""
        n = len(QUBIT_NAMES)
        return dataclasses.replace(self, p0=(p0,) * n, p1=(p1,) * n)

    @property
    def has_damping(self) -> bool:
        return any(math.isfinite(t) for t in self.t1_us)


def _check_zz(zz_khz):
    zz = np.asarray(zz_khz, dtype=float)
    if zz.ndim != 2 or zz.shape[0] != zz.shape[1]:
        raise SimulationError(f"ZZ matrix must be square, not of shape {zz.shape}")
    if not np.allclose(zz, zz.T, rtol=0, atol=1e-12):
        raise SimulationError("ZZ matrix must be symmetric")
    if np.any(np.diagonal(zz) != 0):
        raise SimulationError("ZZ matrix must have a zero diagonal")
    return zz


def damping_gamma(t_us: float, t1_us: float) -> float:
    """:math:`\\gamma = 1 - e^{-t/T_1}`."""
    if t_us < 0:
        raise SimulationError(f"Duration cannot be negative, got {t_us}")
    if not t1_us > 0:
        raise SimulationError(f"T1 must be positive, not {t1_us}")
    return -math.expm1(-t_us / t1_us)


def amplitude_damping(t_us: float, t1_us: float, target: int = 0) -> KrausChannel:
    """Amplitude damping over a duration ``t_us`` on qubit ``target``."""
    gamma = damping_gamma(t_us, t1_us)
    a0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    a1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel((a0, a1), (target,))


def assignment_error(p0: float, p1: float) -> float:
    """Readout assignment error :math:`\\epsilon_r = (P(0|1) + P(1|0))/2`."""
    return (_check_probability(p0, 'p0') + _check_probability(p1, 'p1')) / 2


def readout_flip(bit: int, p0: float, p1: float, rng: np.random.Generator) -> int:
    """Report a measured bit through the asymmetric binary channel: a 1 is
    read as 0 with probability ``p0`` and a 0 as 1 with probability ``p1``."""
    flip_probability = p0 if bit else p1
    return bit ^ int(rng.random() < flip_probability)


def flip_bits(
    bits: np.ndarray,
    p0: Sequence[float],
    p1: Sequence[float],
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized :py:func:`readout_flip` over an ``(shots, k)`` bit array
    with per-column crossovers."""
    bits = np.asarray(bits, dtype=np.int8)
    draws = rng.random(bits.shape)
    flip_probability = np.where(bits == 1, np.asarray(p0), np.asarray(p1))
    return bits ^ (draws < flip_probability).astype(np.int8)


def readout_matrix(p0: float, p1: float) -> np.ndarray:
    """Column-stochastic ``M[observed, true]`` of the asymmetric binary channel."""
    return np.array([[1 - p1, p0], [p1, 1 - p0]])


def apply_readout(
    probabilities: np.ndarray, p0: Sequence[float], p1: Sequence[float]
) -> np.ndarray:
    """Fold independent readout crossovers into an outcome probability table
    indexed like :py:func:`ftprep.simcore.measure_probabilities`."""
    probs = np.asarray(probabilities, dtype=float)
    k = int(round(math.log2(len(probs))))
    if 2 ** k != len(probs) or len(p0) != k or len(p1) != k:
        raise SimulationError(
            f"Readout parameters for {len(p0)} qubits do not match a table of "
            f"{len(probs)} outcomes"
        )
    tensor = probs.reshape((2,) * k)
    for i, (a, b) in enumerate(zip(p0, p1)):
        tensor = np.moveaxis(np.tensordot(readout_matrix(a, b), tensor, axes=(1, i)), 0, i)
    return tensor.reshape(-1)


def _zz_energies(zz_khz, n):
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    spins = 1 - 2 * bits
    # Strengths in kHz give angular frequencies in rad/us after the 1e-3 factor.
    rates = np.pi * np.asarray(zz_khz) * 1e-3
    return 0.5 * np.einsum('bi,ij,bj->b', spins, rates, spins)


def _zz_phases(zz_khz, t_us, n):
    return np.exp(-1j * _zz_energies(zz_khz, n) * t_us)


def zz_evolution(state: QuantumState, zz_khz, t_us: float) -> QuantumState:
    """Free evolution under static ZZ couplings for ``t_us`` microseconds.

    ``zz_khz`` is a symmetric matrix matching the register size. Negative
    ``t_us`` runs the evolution backwards.
    """
    zz = _check_zz(zz_khz)
    n = state.num_qubits
    if zz.shape != (n, n):
        raise SimulationError(
            f"ZZ matrix of shape {zz.shape} does not match {n} qubits"
        )
    phases = _zz_phases(zz, t_us, n)
    if state.is_pure:
        return QuantumState(n, phases * state.data)
    return QuantumState(n, phases[:, None] * state.data * phases.conj()[None, :])


class Echo(enum.Enum):
    none = 'none'
    midpoint_x = 'mid-point-X'


def _apply_x_layer(state, qubits):
    for q in qubits:
        state = apply_unitary(state, UnitarySpec(X, (q,)))
    return state


def idle_evolution(
    state: QuantumState,
    config: NoiseConfig,
    t_us: float,
    echo: Echo = Echo.none,
    slices: int = DEFAULT_SLICES,
    echo_qubits: Sequence[int] = DATA_QUBITS,
) -> QuantumState:
    """Idle the register for ``t_us`` under static ZZ and amplitude damping.

    Each of the ``slices`` equal steps applies the exact propagator of the
    joint ZZ and damping generator, so the result does not depend on the
    slice count. With ``echo=Echo.midpoint_x`` an X is applied on
    ``echo_qubits`` halfway through and again at the end, which restores
    the logical frame. The register is the first ``state.num_qubits``
    entries of ``config``.
    """
    if t_us < 0:
        raise SimulationError(f"Duration cannot be negative, got {t_us}")
    if slices < 1:
        raise SimulationError("At least one idle slice is needed")
    if echo is Echo.midpoint_x and slices % 2:
        slices += 1
    if t_us == 0:
        return state
    n = state.num_qubits
    step = linalg.expm(idle_generator(config, n) * (t_us / slices))
    rho = state.density_matrix().reshape(-1)
    for k in range(slices):
        if echo is Echo.midpoint_x and k == slices // 2:
            flipped = _apply_x_layer(QuantumState(n, rho.reshape(2 ** n, 2 ** n)), echo_qubits)
            rho = flipped.data.reshape(-1)
        rho = step @ rho
    state = QuantumState(n, rho.reshape(2 ** n, 2 ** n))
    if echo is Echo.midpoint_x:
        state = _apply_x_layer(state, echo_qubits)
    return state


def idle_generator(config: NoiseConfig, num_qubits: int) -> np.ndarray:
    """Generator of idle evolution acting on row-major flattened density
    matrices of the first ``num_qubits`` qubits, in units of 1/us.

    The ZZ part is diagonal. Each qubit with finite T1 adds a Lindblad
    lowering term of rate 1/T1.
    """
    n = num_qubits
    dim = 2 ** n
    energies = _zz_energies(config.zz_khz[:n, :n], n)
    generator = np.diag(-1j * (energies[:, None] - energies[None, :]).reshape(-1))
    eye = np.eye(dim)
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    for q in range(n):
        t1 = config.t1_us[q]
        if not math.isfinite(t1):
            continue
        jump = np.kron(np.kron(np.eye(2 ** q), lower), np.eye(2 ** (n - q - 1)))
        jump = jump / math.sqrt(t1)
        number = jump.conj().T @ jump
        generator = generator + (
            np.kron(jump, jump.conj())
            - 0.5 * np.kron(number, eye)
            - 0.5 * np.kron(eye, number.T)
        )
    return generator
