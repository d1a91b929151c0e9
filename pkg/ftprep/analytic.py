"""
Closed-form models of the error-insertion curves and of logical decay.

Insertion model
---------------
A phase error :math:`Z(\\theta)` on the syndrome qubit at site A, B or C,
followed by readout with the same crossovers :math:`p_0 = P(0|1)` and
:math:`p_1 = P(1|0)` on every qubit, gives

.. math::

    P_\\mathrm{acc} = a + b\\cos\\theta, \\qquad
    P(\\text{error} | \\text{acc}) = \\frac{c + d\\cos\\theta}{P_\\mathrm{acc}}.

The coefficient polynomials are split by error class: a flip of the
protected parity only, of the gauge parity only, or of both (joint). The
joint class has the same coefficients as the protected-only class. The
marginal error on a logical qubit, which is what
:py:mod:`ftprep.postsel` reports, is the sum of its exclusive class and the
joint class. Sites A and C share every coefficient.

These forms describe the :math:`|\\bar{0}\\bar{0}\\rangle` target, or any
target whose post-rotation is applied as a frame change. Physical
post-rotation gates change which readout crossover acts on each bit.
"""
import dataclasses
import enum
import math

import numpy as np

from ftprep.code422 import ACCEPTANCE_FLOOR, ALL_LABELS, logical_basis_state
from ftprep.errors import SimulationError, UndefinedMetricError, UnknownNameError

__all__ = [
    'Location',
    'ErrorClass',
    'InsertionCoefficients',
    'InsertionModelParams',
    'DecayModelParams',
    'DecayPrediction',
    'exclusive_coefficients',
    'insertion_coefficients',
    'acceptance_model',
    'logical_error_model',
    'ideal_decay',
    'decay_model',
    'bit_populations',
]


class Location(enum.Enum):
    A = 'A'
    B = 'B'
    C = 'C'


class ErrorClass(enum.Enum):
    protected = 'protected'
    gauge = 'gauge'
    joint = 'joint'


def _coerce(value, enumtype, kind):
    if isinstance(value, enumtype):
        return value
    try:
        return enumtype(value)
    except ValueError as e:
        raise UnknownNameError(value, kind, [m.value for m in enumtype]) from e


@dataclasses.dataclass(frozen=True)
class InsertionCoefficients:
    """Coefficients of one site. Error coefficients are marginal unless
    produced by :py:func:`exclusive_coefficients`."""

    a: float
    b: float
    c_protected: float
    d_protected: float
    c_gauge: float
    d_gauge: float
    c_joint: float
    d_joint: float

    def error_pair(self, r: ErrorClass) -> tuple[float, float]:
        r = _coerce(r, ErrorClass, 'error class')
        return getattr(self, f'c_{r.value}'), getattr(self, f'd_{r.value}')


def _site_a(p0, p1):
    a = 0.5 * (
        1 + (p0 - p1) ** 2 * (3 + 4 * p0**2 - 6 * p1 + 4 * p1**2 + p0 * (4 * p1 - 6))
    )
    b = (
        0.5
        * (p0 + p1 - 1) ** 2
        * (1 + 4 * p0**2 - 2 * p1 + 4 * p1**2 - 2 * p0 * (2 * p1 + 1))
    )
    c1 = 0.25 * (
        2 * p0**4
        + p1
        + 3 * p0**2 * p1
        + p1**3 * (2 * p1 - 3)
        - p0**3 * (2 * p1 + 3)
        + p0 * (1 + p1 * (-2 + (3 - 2 * p1) * p1))
    )
    d1 = 0.25 * (p0 + p1 - 1) ** 2 * (2 * p0**2 + p1 * (2 * p1 - 1) - p0 * (2 * p1 + 1))
    return a, b, c1, d1, c1, d1


def _site_b(p0, p1):
    w = p0 * (p0 - 1) + p1 * (p1 - 1)
    a = 1 + 2 * w * (1 + w)
    b = 2 * (p0 - p1) ** 2 * (p0 + p1 - 1) ** 2
    c1 = 0.5 * w**2
    d1 = 0.5 * (p0 - p1) ** 2 * (p0 + p1 - 1) ** 2
    c2 = 0.5 * (p0**2 + (p1 - 1) ** 2) * ((p0 - 1) ** 2 + p1**2)
    d2 = 0.5 * ((p0 - p1) ** 2 - 1) * (p0 + p1 - 1) ** 2
    return a, b, c1, d1, c2, d2


_SITES = {Location.A: _site_a, Location.B: _site_b, Location.C: _site_a}


def exclusive_coefficients(loc, p0, p1) -> InsertionCoefficients:
    """Per-class coefficients: protected-only, gauge-only and joint flips.

    ``p0`` and ``p1`` may be numpy arrays, in which case every field is an
    array of the broadcast shape.
    """
    loc = _coerce(loc, Location, 'insertion site')
    a, b, c1, d1, c2, d2 = _SITES[loc](p0, p1)
    return InsertionCoefficients(a, b, c1, d1, c2, d2, c1, d1)


def insertion_coefficients(loc, p0, p1) -> InsertionCoefficients:
    """Coefficients with marginal protected and gauge errors."""
    ex = exclusive_coefficients(loc, p0, p1)
    return InsertionCoefficients(
        a=ex.a,
        b=ex.b,
        c_protected=ex.c_protected + ex.c_joint,
        d_protected=ex.d_protected + ex.d_joint,
        c_gauge=ex.c_gauge + ex.c_joint,
        d_gauge=ex.d_gauge + ex.d_joint,
        c_joint=ex.c_joint,
        d_joint=ex.d_joint,
    )


def acceptance_model(loc, theta, p0, p1):
    """:math:`a + b\\cos\\theta` for site ``loc``."""
    co = exclusive_coefficients(loc, p0, p1)
    return co.a + co.b * np.cos(theta)


def logical_error_model(loc, r, theta, p0, p1, marginal: bool = True):
    """Conditional probability of a logical error of class ``r`` given
    acceptance.

    Parameters
    ----------
    loc : Location or str
        Insertion site.
    r : ErrorClass or str
        ``'protected'``, ``'gauge'`` or ``'joint'``.
    theta : float or numpy.ndarray
        Inserted phase.
    p0, p1 : float
        Readout crossovers.
    marginal : bool
        If False, return the exclusive class probability instead.

    Raises
    ------
    UndefinedMetricError
        If the acceptance vanishes at any ``theta``.
    """
    if marginal:
        co = insertion_coefficients(loc, p0, p1)
    else:
        co = exclusive_coefficients(loc, p0, p1)
    acceptance = co.a + co.b * np.cos(theta)
    if np.any(np.asarray(acceptance) < ACCEPTANCE_FLOOR):
        raise UndefinedMetricError(
            f'the {_coerce(r, ErrorClass, "error class").value} logical error',
            float(np.min(acceptance)),
        )
    c, d = co.error_pair(r)
    return (c + d * np.cos(theta)) / acceptance


@dataclasses.dataclass(frozen=True)
class InsertionModelParams:
    location: Location
    p0: float
    p1: float
    theta: float
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, 'location', _coerce(self.location, Location, 'insertion site')
        )
        for name in ('p0', 'p1'):
            if not 0 <= getattr(self, name) <= 1:
                raise SimulationError(f"{name} must lie in [0, 1]")

    @property
    def acceptance(self) -> float:
        return float(acceptance_model(self.location, self.theta + self.delta, self.p0, self.p1))

    def logical_error(self, r) -> float:
        return float(
            logical_error_model(
                self.location, r, self.theta + self.delta, self.p0, self.p1
            )
        )


def ideal_decay(t, t1):
    """Logical :math:`|1\\rangle` population of an encoded qubit whose four
    data qubits relax with the same :math:`T_1`, given acceptance:
    :math:`(2 - 2e^{t/T_1} + e^{2t/T_1})^{-1}`.

    It starts flat and crosses the physical :math:`e^{-t/T_1}` at
    :math:`t = T_1 \\ln 2`.
    """
    if not np.all(np.asarray(t1) > 0):
        raise SimulationError(f"T1 must be positive, not {t1}")
    # Written in e^{-t/T1} to stay finite for t >> T1.
    u = np.exp(-np.asarray(t, dtype=float) / t1)
    return u**2 / (2 * u**2 - 2 * u + 1)


@dataclasses.dataclass(frozen=True, eq=False)
class DecayModelParams:
    """Initial populations of the 16 logical basis states (in
    :py:class:`ftprep.code422.LogicalLabel` index order), data-qubit T1
    values and uniform readout crossovers."""

    init_mixture: np.ndarray
    t1_us: tuple[float, float, float, float]
    p0: float = 0.0
    p1: float = 0.0

    def __post_init__(self):
        mix = np.asarray(self.init_mixture, dtype=float)
        if mix.shape != (16,):
            raise SimulationError(f"The initial mixture has 16 entries, not {mix.shape}")
        if np.any(mix < 0) or not math.isclose(mix.sum(), 1, abs_tol=1e-9):
            raise SimulationError("The initial mixture must be a probability vector")
        t1 = tuple(float(v) for v in self.t1_us)
        if len(t1) != 4 or not all(v > 0 for v in t1):
            raise SimulationError(f"Four positive data-qubit T1 values needed, got {t1}")
        object.__setattr__(self, 'init_mixture', mix)
        object.__setattr__(self, 't1_us', t1)

    @classmethod
    def pure(cls, index: int, t1_us, p0=0.0, p1=0.0) -> 'DecayModelParams':
        mix = np.zeros(16)
        mix[index] = 1
        return cls(mix, t1_us, p0, p1)


@dataclasses.dataclass(frozen=True, eq=False)
class DecayPrediction:
    acceptance: np.ndarray
    p_protected: np.ndarray
    p_gauge: np.ndarray


def _label_bit_populations():
    return np.array([np.abs(logical_basis_state(lab).data) ** 2 for lab in ALL_LABELS])


_BIT_POPULATIONS = _label_bit_populations()


def bit_populations(mixture) -> np.ndarray:
    """Computational-basis populations of the data qubits for a mixture of
    the 16 logical basis states, indexed with D1 as the most significant bit."""
    return np.asarray(mixture, dtype=float) @ _BIT_POPULATIONS


def decay_model(t, params: DecayModelParams) -> DecayPrediction:
    """Acceptance and the probabilities of reading each logical qubit as 1,
    given acceptance, after idling for ``t`` microseconds.

    Relaxation acts on computational-basis populations as independent
    :math:`1 \\to 0` jumps with probability :math:`\\gamma_i = 1 - e^{-t/T_{1,i}}`,
    which suffices because readout is in the computational basis. The
    protected qubit is read from ``c1 ^ c2`` and the gauge qubit from
    ``c1 ^ c3``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise SimulationError("Idle durations cannot be negative")
    true_bits = bit_populations(params.init_mixture).reshape((2,) * 4)
    p0, p1 = params.p0, params.p1
    obs = np.empty((len(t),) + (2,) * 4)
    for k, tk in enumerate(t):
        tensor = true_bits
        for i, t1 in enumerate(params.t1_us):
            gamma = -math.expm1(-tk / t1)
            one_from_one = (1 - gamma) * (1 - p0) + gamma * p1
            # M[observed, true]
            m = np.array([[1 - p1, 1 - one_from_one], [p1, one_from_one]])
            tensor = np.moveaxis(np.tensordot(m, tensor, axes=(1, i)), 0, i)
        obs[k] = tensor
    bits = (np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1
    c1, c2, c3, c4 = bits.T
    accepted = (c1 ^ c2 ^ c3 ^ c4) == 0
    flat = obs.reshape(len(t), 16)
    acceptance = flat[:, accepted].sum(axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        p_prot = flat[:, accepted & ((c1 ^ c2) == 1)].sum(axis=1) / acceptance
        p_gauge = flat[:, accepted & ((c1 ^ c3) == 1)].sum(axis=1) / acceptance
    return DecayPrediction(acceptance, p_prot, p_gauge)
