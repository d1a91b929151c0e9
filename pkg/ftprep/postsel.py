"""
Classical post-processing of shots: syndrome post-selection, the software
:math:`S_z` parity check and extraction of logical errors.

A shot is kept when ``c_s = 1`` and accepted when
``c1 ^ c2 ^ c3 ^ c4 = 0``. The protected parity is ``c1 ^ c2`` and the gauge
parity ``c1 ^ c3``; their expected values come from
:py:attr:`ftprep.prep.PrepTarget.expected_parities`. Error probabilities are
conditional on acceptance and marginal: a shot with both parities flipped
counts towards the protected, the gauge and the joint error.
"""
import csv
import dataclasses
import logging
import math
from typing import Sequence

import numpy as np

from ftprep.errors import CircuitError, SchemaError
from ftprep.prep import Basis, PrepTarget
from ftprep.simcore import sample_from_probabilities

__all__ = [
    'SHOT_COLUMNS',
    'ShotRecord',
    'PostSelSummary',
    'postprocess',
    'postprocess_arrays',
    'exact_statistics',
    'sample_shot_table',
    'records_to_table',
    'table_to_records',
    'read_shots_csv',
    'write_shots_csv',
]

logger = logging.getLogger(__name__)

SHOT_COLUMNS = ('cs', 'c1', 'c2', 'c3', 'c4')


@dataclasses.dataclass(frozen=True)
class ShotRecord:
    c_s: int
    c: tuple[int, int, int, int]
    basis: Basis = Basis.Z

    def __post_init__(self):
        c = tuple(self.c)
        if len(c) != 4:
            raise CircuitError(f"A shot has 4 data bits, not {len(c)}")
        if any(b not in (0, 1) for b in (self.c_s, *c)):
            raise CircuitError(f"Shot bits must be 0 or 1, got {self.c_s} {c}")
        object.__setattr__(self, 'c', c)


@dataclasses.dataclass(frozen=True)
class PostSelSummary:
    """Post-selection statistics.

    ``total_syndrome_ok`` and ``accepted`` are shot counts for sampled data
    and probability weights for exact statistics. Conditional error
    probabilities are NaN when nothing was accepted, in which case
    ``defined`` is False. Standard errors are binomial, and zero for exact
    statistics.
    """

    total: float
    total_syndrome_ok: float
    accepted: float
    acceptance: float
    acceptance_stderr: float
    p_err_protected: float
    p_err_protected_stderr: float
    p_err_gauge: float
    p_err_gauge_stderr: float
    p_err_joint: float
    p_err_joint_stderr: float
    exact: bool = False

    @property
    def defined(self) -> bool:
        return not math.isnan(self.p_err_protected)


def _binomial(successes, trials, exact):
    if trials <= 0:
        return math.nan, math.nan
    p = successes / trials
    if exact:
        return p, 0.0
    return p, math.sqrt(p * (1 - p) / trials)


def _summarize(total, syndrome_ok, accepted, prot, gauge, joint, exact):
    acceptance, acceptance_err = _binomial(accepted, syndrome_ok, exact)
    if accepted <= 0:
        logger.warning(
            "No shot passed post-selection; logical errors are undefined"
        )
    p_prot, e_prot = _binomial(prot, accepted, exact)
    p_gauge, e_gauge = _binomial(gauge, accepted, exact)
    p_joint, e_joint = _binomial(joint, accepted, exact)
    return PostSelSummary(
        total=total,
        total_syndrome_ok=syndrome_ok,
        accepted=accepted,
        acceptance=acceptance,
        acceptance_stderr=acceptance_err,
        p_err_protected=p_prot,
        p_err_protected_stderr=e_prot,
        p_err_gauge=p_gauge,
        p_err_gauge_stderr=e_gauge,
        p_err_joint=p_joint,
        p_err_joint_stderr=e_joint,
        exact=exact,
    )


def _classify(table, target):
    """Masks of kept, accepted, protected-flipped and gauge-flipped rows."""
    cs, c1, c2, c3, c4 = (table[:, i] for i in range(5))
    kept = cs == 1
    accepted = kept & ((c1 ^ c2 ^ c3 ^ c4) == 0)
    want_prot, want_gauge = target.expected_parities
    prot = accepted & ((c1 ^ c2) != want_prot)
    gauge = accepted & ((c1 ^ c3) != want_gauge)
    return kept, accepted, prot, gauge


def postprocess_arrays(table: np.ndarray, target: PrepTarget) -> PostSelSummary:
    """Summarize a ``(shots, 5)`` integer table with columns
    :py:data:`SHOT_COLUMNS`."""
    table = np.asarray(table, dtype=np.int64)
    if table.ndim != 2 or table.shape[1] != len(SHOT_COLUMNS):
        raise CircuitError(f"Shot tables have 5 columns, got shape {table.shape}")
    kept, accepted, prot, gauge = _classify(table, target)
    return _summarize(
        total=len(table),
        syndrome_ok=int(kept.sum()),
        accepted=int(accepted.sum()),
        prot=int(prot.sum()),
        gauge=int(gauge.sum()),
        joint=int((prot & gauge).sum()),
        exact=False,
    )


def postprocess(shots: Sequence[ShotRecord], target: PrepTarget) -> PostSelSummary:
    """Summarize a list of shots recorded in the basis of ``target``.

    Raises
    ------
    CircuitError
        If the shots were recorded in a basis other than the target's.
    """
    bases = {s.basis for s in shots}
    if bases - {target.basis}:
        raise CircuitError(
            f"Shots recorded in {sorted(b.value for b in bases)} cannot be "
            f"compared with a {target.basis.value}-basis target"
        )
    return postprocess_arrays(records_to_table(shots), target)


def _outcome_table():
    # Outcome index bits read c1 c2 c3 c4 cs from the most significant end.
    idx = np.arange(32)
    bits = (idx[:, None] >> np.arange(4, -1, -1)) & 1
    return bits[:, [4, 0, 1, 2, 3]]


def exact_statistics(probabilities: np.ndarray, target: PrepTarget) -> PostSelSummary:
    """Summary computed from the 32-entry outcome table of
    :py:func:`ftprep.prep.outcome_probabilities`, with no sampling noise."""
    probs = np.asarray(probabilities, dtype=float)
    if probs.shape != (32,):
        raise CircuitError(f"Expected 32 outcome probabilities, got {probs.shape}")
    kept, accepted, prot, gauge = _classify(_outcome_table(), target)
    return _summarize(
        total=float(probs.sum()),
        syndrome_ok=float(probs[kept].sum()),
        accepted=float(probs[accepted].sum()),
        prot=float(probs[prot].sum()),
        gauge=float(probs[gauge].sum()),
        joint=float(probs[prot & gauge].sum()),
        exact=True,
    )


def sample_shot_table(
    probabilities: np.ndarray, shots: int, seed, lanes: int = 1
) -> np.ndarray:
    """Draw ``shots`` rows with columns :py:data:`SHOT_COLUMNS` from a
    32-entry outcome table."""
    outcomes = sample_from_probabilities(probabilities, shots, seed, lanes)
    return _outcome_table()[outcomes]


def records_to_table(shots: Sequence[ShotRecord]) -> np.ndarray:
    if not shots:
        return np.zeros((0, 5), dtype=np.int64)
    return np.array([(s.c_s, *s.c) for s in shots], dtype=np.int64)


def table_to_records(table: np.ndarray, basis: Basis = Basis.Z) -> list[ShotRecord]:
    return [ShotRecord(int(row[0]), tuple(int(b) for b in row[1:]), basis) for row in table]


def write_shots_csv(path, table: np.ndarray) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(SHOT_COLUMNS)
        writer.writerows(np.asarray(table, dtype=np.int64).tolist())


def read_shots_csv(path) -> np.ndarray:
    """Read a shot table written by :py:func:`write_shots_csv`.

    Raises
    ------
    SchemaError
        If the header is not ``cs,c1,c2,c3,c4`` or a row has a value other
        than 0 or 1.
    """
    rows = []
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SHOT_COLUMNS:
            raise SchemaError(
                f"Expected columns {','.join(SHOT_COLUMNS)}, got {header}",
                wrong_line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [int(v) for v in row]
            except ValueError as e:
                raise SchemaError(f"Non-integer value in {row}", wrong_line=lineno) from e
            if len(values) != len(SHOT_COLUMNS) or any(v not in (0, 1) for v in values):
                raise SchemaError(
                    f"Expected 5 bits, got {row}", wrong_line=lineno
                )
            rows.append(values)
    logger.debug("Read %d shots from %s", len(rows), path)
    return np.array(rows, dtype=np.int64).reshape(-1, len(SHOT_COLUMNS))
