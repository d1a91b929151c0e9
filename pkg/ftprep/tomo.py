"""
Simulated state tomography of the four data qubits, linear-inversion
reconstruction and logical-frame views of the result.

Each of the 81 settings measures every data qubit in X, Y or Z. X is
measured after a Hadamard and Y after :math:`H S^\\dagger`. The density
matrix is rebuilt from the 256 Pauli expectation values, each averaged over
every setting compatible with it, and projected onto the nearest unit-trace
positive semidefinite matrix. By default the projection then seeds an
iterative maximum-likelihood estimate over the same counts.
"""
import concurrent.futures
import csv
import dataclasses
import enum
import functools
import itertools
import logging

import numpy as np

from ftprep.code422 import (
    ACCEPTANCE_FLOOR,
    LogicalLabel,
    logical_basis_state,
    to_logical_frame,
)
from ftprep.errors import FitError, SchemaError, UndefinedMetricError
from ftprep.noisemodels import NoiseConfig, apply_readout
from ftprep.prep import (
    Basis,
    Circuit,
    PrepTarget,
    postselected_data_state,
    simulate,
    target_state,
)
from ftprep.simcore import (
    DATA_QUBITS,
    SYNDROME_QUBIT,
    H,
    S,
    QuantumState,
    UnitarySpec,
    apply_unitary,
    measure_probabilities,
    pauli_matrix,
)

__all__ = [
    'SETTINGS',
    'TomoDataset',
    'TableRow',
    'Estimator',
    'maximum_likelihood',
    'measure_settings',
    'simulate_tomography',
    'pauli_expectations',
    'reconstruct',
    'project_psd',
    'logical_difference_matrix',
    'table_metrics',
    'read_tomo_csv',
    'write_tomo_csv',
    'logical_mixture',
    'read_mixture_csv',
    'write_mixture_csv',
]

logger = logging.getLogger(__name__)

NUM_QUBITS = len(DATA_QUBITS)
SETTINGS = tuple(''.join(s) for s in itertools.product('XYZ', repeat=NUM_QUBITS))
PAULI_LABELS = tuple(''.join(s) for s in itertools.product('IXYZ', repeat=NUM_QUBITS))

_ROTATIONS = {'X': H, 'Y': H @ S.conj().T}


@dataclasses.dataclass(frozen=True, eq=False)
class TomoDataset:
    """Outcome counts per measurement setting.

    ``counts[k, b]`` is the number of times setting ``settings[k]`` gave the
    4-bit outcome ``b`` (D1 most significant). Datasets built from exact
    probabilities hold fractional counts.
    """

    settings: tuple[str, ...]
    counts: np.ndarray
    shots: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        settings = tuple(self.settings)
        if counts.shape != (len(settings), 2**NUM_QUBITS):
            raise SchemaError(
                f"Counts of shape {counts.shape} do not match {len(settings)} settings",
                wrong_line=1,
            )
        sums = counts.sum(axis=1)
        if not np.allclose(sums, self.shots, rtol=1e-9, atol=1e-6):
            bad = int(np.argmax(np.abs(sums - self.shots)))
            raise SchemaError(
                f"Counts of setting {settings[bad]} add to {sums[bad]}, not {self.shots}",
                wrong_line=1,
            )
        object.__setattr__(self, 'settings', settings)
        object.__setattr__(self, 'counts', counts)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots


def _rotated_probabilities(state, setting):
    for q, basis in enumerate(setting):
        if basis in _ROTATIONS:
            state = apply_unitary(state, UnitarySpec(_ROTATIONS[basis], (q,)))
    return measure_probabilities(state)


def measure_settings(
    state: QuantumState,
    shots: int,
    seed=None,
    exact: bool = False,
    p0=None,
    p1=None,
    lanes: int = 1,
) -> TomoDataset:
    """Measure a 4-qubit state in all 81 settings.

    Parameters
    ----------
    state : QuantumState
        The data state.
    shots : int
        Shots per setting.
    seed : int or numpy.random.SeedSequence
        Seed of the sampling streams, one independent substream per setting.
    exact : bool
        Store ``shots`` times the exact outcome probabilities instead of
        sampling.
    p0, p1 : Sequence[float] or None
        Data readout crossovers folded into the outcome probabilities.
    lanes : int
        Worker threads.
    """
    if state.num_qubits != NUM_QUBITS:
        raise FitError(f"Tomography needs a 4-qubit state, not {state.num_qubits} qubits")
    streams = np.random.SeedSequence(seed).spawn(len(SETTINGS))

    def run(k):
        probs = _rotated_probabilities(state, SETTINGS[k])
        if p0 is not None:
            probs = apply_readout(probs, p0, p1)
        if exact:
            return probs * shots
        rng = np.random.default_rng(streams[k])
        return rng.multinomial(shots, probs / probs.sum())

    if lanes > 1:
        with concurrent.futures.ThreadPoolExecutor(lanes) as pool:
            counts = list(pool.map(run, range(len(SETTINGS))))
    else:
        counts = [run(k) for k in range(len(SETTINGS))]
    return TomoDataset(SETTINGS, np.array(counts), shots)


def simulate_tomography(
    circuit: Circuit,
    noise: NoiseConfig | None,
    shots_per_setting: int,
    seed=None,
    exact: bool = False,
    lanes: int = 1,
) -> TomoDataset:
    """Run ``circuit`` (built with ``measure_data=False``), keep the data
    state conditioned on a reported ``c_s = 1`` and measure it in every
    setting. With ``noise`` the readout crossovers of the syndrome and data
    qubits are included."""
    state = simulate(circuit, noise)
    if noise is None:
        data = postselected_data_state(state)
        return measure_settings(data, shots_per_setting, seed, exact, lanes=lanes)
    s = SYNDROME_QUBIT
    data = postselected_data_state(state, noise.p0[s], noise.p1[s])
    return measure_settings(
        data,
        shots_per_setting,
        seed,
        exact,
        p0=[noise.p0[q] for q in DATA_QUBITS],
        p1=[noise.p1[q] for q in DATA_QUBITS],
        lanes=lanes,
    )


@functools.lru_cache()
def _parity_signs():
    bits = (np.arange(2**NUM_QUBITS)[:, None] >> np.arange(NUM_QUBITS - 1, -1, -1)) & 1
    return 1 - 2 * bits


def pauli_expectations(data: TomoDataset) -> dict[str, float]:
    """Estimated expectation of every 4-qubit Pauli string, identity
    included.

    Raises
    ------
    FitError
        If some Pauli string is not measured by any setting.
    """
    freqs = dict(zip(data.settings, data.frequencies))
    signs = _parity_signs()
    res = {}
    for label in PAULI_LABELS:
        if set(label) == {'I'}:
            res[label] = 1.0
            continue
        support = [i for i, c in enumerate(label) if c != 'I']
        compatible = [
            f
            for setting, f in freqs.items()
            if all(setting[i] == label[i] for i in support)
        ]
        if not compatible:
            raise FitError(f"No measurement setting determines <{label}>")
        eigen = np.prod(signs[:, support], axis=1)
        res[label] = float(np.mean([f @ eigen for f in compatible]))
    return res


def project_psd(matrix: np.ndarray, epsilon: float = 0.0) -> np.ndarray:
    """Nearest unit-trace positive semidefinite matrix.

    Eigenvalues are scanned from the smallest up. Each one below ``epsilon``
    is set to zero and its weight spread evenly over the larger ones.
    """
    mat = np.asarray(matrix, dtype=complex)
    mat = (mat + mat.conj().T) / 2
    mat = mat / np.real(np.trace(mat))
    values, vectors = np.linalg.eigh(mat)
    dim = len(values)
    for j in range(dim):
        if values[j] >= epsilon:
            break
        if j == dim - 1:
            values[j] = 1.0
            break
        excess = values[j]
        values[j] = 0.0
        values[j + 1 :] += excess / (dim - j - 1)
    return (vectors * values) @ vectors.conj().T


class Estimator(enum.Enum):
    linear = 'linear'
    likelihood = 'likelihood'


@functools.lru_cache()
def _setting_unitary(setting):
    unitary = np.eye(1, dtype=complex)
    for basis in setting:
        unitary = np.kron(unitary, _ROTATIONS.get(basis, np.eye(2)))
    return unitary


def maximum_likelihood(
    data: TomoDataset,
    rho: np.ndarray,
    max_iterations: int = 2000,
    tolerance: float = 1e-10,
) -> np.ndarray:
    """Iterate :math:`\\rho \\to R\\rho R` towards the maximum-likelihood
    density matrix of the counts, starting from ``rho``.

    :math:`R` is the sum over settings and outcomes of the observed over the
    predicted frequency times the outcome projector, divided by the number
    of settings. Directions where ``rho`` has no weight stay empty, so the
    start should be the projected linear estimate. Iteration stops when a
    step moves :math:`\\rho` by less than ``tolerance`` in Frobenius norm.
    """
    unitaries = np.array([_setting_unitary(s) for s in data.settings])
    adjoints = unitaries.conj().transpose(0, 2, 1)
    freqs = data.frequencies
    rho = np.asarray(rho, dtype=complex)
    for iteration in range(1, max_iterations + 1):
        rotated = unitaries @ rho @ adjoints
        probs = np.real(np.diagonal(rotated, axis1=1, axis2=2))
        ratio = np.divide(freqs, probs, out=np.zeros_like(freqs), where=probs > 1e-15)
        r = np.einsum('kai,ki,kib->ab', adjoints, ratio, unitaries) / len(unitaries)
        new = r @ rho @ r
        new = new / np.real(np.trace(new))
        change = np.linalg.norm(new - rho)
        rho = new
        if change < tolerance:
            logger.debug("Likelihood iteration converged after %d steps", iteration)
            break
    else:
        logger.info(
            "Likelihood iteration stopped after %d steps, last change %.2e",
            max_iterations,
            change,
        )
    return (rho + rho.conj().T) / 2


def reconstruct(
    data: TomoDataset, estimator: Estimator = Estimator.likelihood
) -> QuantumState:
    """Linear inversion followed by :py:func:`project_psd`. With
    ``Estimator.likelihood`` the projected matrix is refined by
    :py:func:`maximum_likelihood`."""
    missing = set(SETTINGS) - set(data.settings)
    if missing:
        raise FitError(
            f"Reconstruction needs all {len(SETTINGS)} settings; "
            f"{len(missing)} are missing, e.g. {sorted(missing)[0]}"
        )
    expectations = pauli_expectations(data)
    dim = 2**NUM_QUBITS
    rho = sum(value * pauli_matrix(label) for label, value in expectations.items()) / dim
    rho = project_psd(rho)
    if estimator is Estimator.likelihood:
        rho = maximum_likelihood(data, rho)
    return QuantumState(NUM_QUBITS, rho)


def _ideal_vector(target):
    if isinstance(target, LogicalLabel):
        return logical_basis_state(target).data
    if isinstance(target, PrepTarget):
        return target_state(target).data
    if isinstance(target, QuantumState):
        return target.data
    return np.asarray(target, dtype=complex)


def logical_difference_matrix(rho, target) -> np.ndarray:
    """Entrywise absolute difference between ``rho`` and the ideal target,
    both written in the 16-state logical basis.

    ``target`` is a :py:class:`~ftprep.code422.LogicalLabel`, a
    :py:class:`~ftprep.prep.PrepTarget` or a 4-qubit state.
    """
    ideal = _ideal_vector(target)
    if ideal.ndim == 1:
        ideal = np.outer(ideal, ideal.conj())
    return np.abs(to_logical_frame(rho) - to_logical_frame(ideal))


@dataclasses.dataclass(frozen=True, eq=False)
class TableRow:
    """Acceptance and the four logical populations of the normalized
    codespace block, ordered ``00, 01, 10, 11`` (or ``++, +-, -+, --``)."""

    acceptance: float
    populations: np.ndarray

    def fidelity(self, target: PrepTarget) -> float:
        return float(self.populations[2 * target.L1 + target.L2])


_LOGICAL_HADAMARD = np.kron(H, H)


def table_metrics(rho, basis: Basis = Basis.Z) -> TableRow:
    """Acceptance :math:`\\mathrm{tr}\\,\\rho_{\\tilde{0}\\tilde{0}}` and logical
    populations in the Z or X frame.

    Raises
    ------
    UndefinedMetricError
        If the codespace block is empty.
    """
    logical = to_logical_frame(rho)
    idx = [LogicalLabel(l1, l2).index for l1, l2 in itertools.product((0, 1), repeat=2)]
    block = logical[np.ix_(idx, idx)]
    acceptance = float(np.real(np.trace(block)))
    if acceptance < ACCEPTANCE_FLOOR:
        raise UndefinedMetricError('logical populations', acceptance)
    block = block / acceptance
    if basis is Basis.X:
        block = _LOGICAL_HADAMARD @ block @ _LOGICAL_HADAMARD
    return TableRow(acceptance, np.real(np.diagonal(block)).copy())


def write_tomo_csv(path, data: TomoDataset) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('setting', 'outcome', 'count'))
        for setting, row in zip(data.settings, data.counts):
            for b, count in enumerate(row):
                value = int(count) if float(count).is_integer() else repr(float(count))
                writer.writerow((setting, format(b, '04b'), value))


def read_tomo_csv(path) -> TomoDataset:
    """Read a dataset written by :py:func:`write_tomo_csv`.

    Raises
    ------
    SchemaError
        On a wrong header, an unknown setting or outcome, or a bad count.
    """
    counts = {}
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ['setting', 'outcome', 'count']:
            raise SchemaError(
                f"Expected columns setting,outcome,count, got {header}", wrong_line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                setting, outcome, count = (v.strip() for v in row)
                index = int(outcome, 2)
                value = float(count)
            except ValueError as e:
                raise SchemaError(f"Malformed row {row}", wrong_line=lineno) from e
            if setting not in SETTINGS or len(outcome) != NUM_QUBITS or value < 0:
                raise SchemaError(f"Invalid row {row}", wrong_line=lineno)
            counts.setdefault(setting, np.zeros(2**NUM_QUBITS))[index] += value
    settings = tuple(counts)
    table = np.array([counts[s] for s in settings]).reshape(len(settings), -1)
    totals = table.sum(axis=1)
    shots = int(round(totals[0])) if len(totals) else 0
    logger.debug("Read %d tomography settings from %s", len(settings), path)
    return TomoDataset(settings, table, shots)


def logical_mixture(rho) -> np.ndarray:
    """Populations of the 16 logical basis states in ``rho``, indexed by
    :py:attr:`ftprep.code422.LogicalLabel.index`. Coherences are dropped."""
    populations = np.clip(np.real(np.diagonal(to_logical_frame(rho))), 0, None)
    return populations / populations.sum()


MIXTURE_COLUMNS = ('index', 'label', 'probability')


def write_mixture_csv(path, mixture) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(MIXTURE_COLUMNS)
        for index, p in enumerate(np.asarray(mixture, dtype=float)):
            writer.writerow((index, str(LogicalLabel.from_index(index)), repr(float(p))))


def read_mixture_csv(path) -> np.ndarray:
    """Read a logical mixture written by :py:func:`write_mixture_csv`.

    Only the ``index`` and ``probability`` columns are used.

    Raises
    ------
    SchemaError
        On a wrong header, a bad or repeated index, a negative probability,
        a missing label or a total that is not 1.
    """
    mixture = np.full(16, np.nan)
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {'index', 'probability'} <= set(reader.fieldnames):
            raise SchemaError(
                f"Expected columns {','.join(MIXTURE_COLUMNS)}, got {reader.fieldnames}",
                wrong_line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                index = int(row['index'])
                p = float(row['probability'])
            except (TypeError, ValueError) as e:
                raise SchemaError(f"Malformed row {row}", wrong_line=lineno) from e
            if not 0 <= index < 16 or not np.isnan(mixture[index]) or not p >= 0:
                raise SchemaError(f"Invalid row {row}", wrong_line=lineno)
            mixture[index] = p
    if np.any(np.isnan(mixture)):
        missing = [str(LogicalLabel.from_index(i)) for i in np.flatnonzero(np.isnan(mixture))]
        raise SchemaError(f"{path} lacks {', '.join(missing)}", wrong_line=1)
    if not np.isclose(mixture.sum(), 1, rtol=0, atol=1e-6):
        raise SchemaError(
            f"{path}: probabilities sum to {mixture.sum()}, not 1", wrong_line=1
        )
    return mixture / mixture.sum()
