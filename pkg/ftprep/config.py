"""
Experiment configuration.

The schema is a tree of dataclasses processed with
:py:func:`validobj.parse_input`. YAML files are read with ruamel.yaml in
round-trip mode so that validation errors can point at the offending line.

Per-qubit quantities are mappings from qubit name to value, static ZZ
strengths a mapping from pairs such as ``D1-S1`` to kHz (unlisted pairs are
zero), and angles may be written with ``pi`` (``pi/2``, ``-3*pi/4``).
Grids are either explicit lists or ``{start, stop, num}`` mappings.
"""
import dataclasses
import enum
import logging
import math
import pathlib
import re

import numpy as np
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError
from validobj import ValidationError, parse_input
from validobj.custom import Parser
from validobj.errors import WrongKeysError

from ftprep.errors import ConfigError
from ftprep.noisemodels import Echo, NoiseConfig
from ftprep.prep import CnotModel, PostRotation, PrepTarget
from ftprep.simcore import DATA_QUBITS, QUBIT_NAMES
from ftprep.tomo import Estimator

__all__ = [
    'ExperimentConfig',
    'NoiseSection',
    'RunSection',
    'PrepSection',
    'SweepSection',
    'DecaySection',
    'TomoSection',
    'OutputSection',
    'SweepKind',
    'DEFAULT_CONFIG_PATH',
    'load_config',
    'parse_config',
    'parse_angle',
]

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = pathlib.Path(__file__).with_name('default_config.yaml')

_ANGLE_RE = re.compile(
    r'^\s*(?P<sign>[+-])?\s*(?:(?P<num>\d+(?:\.\d*)?)\s*\*?\s*)?pi'
    r'\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?\s*$'
)


def parse_angle(text: str) -> float:
    """Read a number or a multiple of ``pi`` such as ``'3*pi/4'``."""
    match = _ANGLE_RE.match(text)
    if match is None:
        try:
            return float(text)
        except ValueError as e:
            raise ValidationError(f"Cannot interpret {text!r} as an angle") from e
    value = math.pi * float(match['num'] or 1) / float(match['den'] or 1)
    return -value if match['sign'] == '-' else value


def _real(value: int | float) -> float:
    return float(value)


def _angle(value: int | float | str) -> float:
    if isinstance(value, str):
        return parse_angle(value)
    return float(value)


def _positive_int(value: int) -> int:
    if value < 1:
        raise ValidationError(f"Expecting a positive integer, not {value}")
    return value


Real = Parser(_real)
Angle = Parser(_angle)
PositiveInt = Parser(_positive_int)


def _qubit_table(value: dict[str, Real]) -> tuple[float, ...]:
    names = set(value)
    if names != set(QUBIT_NAMES):
        raise WrongKeysError(
            set(QUBIT_NAMES) - names,
            names - set(QUBIT_NAMES),
            set(QUBIT_NAMES),
            header="Per-qubit tables need one entry per qubit.",
        )
    return tuple(value[q] for q in QUBIT_NAMES)


def _probability_table(value: dict[str, Real]) -> tuple[float, ...]:
    table = _qubit_table(value)
    for q, p in zip(QUBIT_NAMES, table):
        if not 0 <= p <= 1:
            raise ValidationError(f"Value {p} for {q} is not a probability")
    return table


def _t1_table(value: dict[str, Real]) -> tuple[float, ...]:
    table = _qubit_table(value)
    for q, t1 in zip(QUBIT_NAMES, table):
        if not t1 > 0:
            raise ValidationError(f"T1 of {q} must be positive, not {t1}")
    return table


def _qubit_index(name):
    if name not in QUBIT_NAMES:
        raise ValidationError(
            f"Unknown qubit {name!r}; valid qubits are {', '.join(QUBIT_NAMES)}"
        )
    return QUBIT_NAMES.index(name)


def _zz_table(value: dict[str, Real]) -> np.ndarray:
    n = len(QUBIT_NAMES)
    zz = np.zeros((n, n))
    seen = {}
    for pair, strength in value.items():
        parts = pair.split('-')
        if len(parts) != 2:
            raise ValidationError(f"ZZ pairs are written like 'D1-S1', not {pair!r}")
        i, j = (_qubit_index(p.strip()) for p in parts)
        if i == j:
            raise ValidationError(f"ZZ pair {pair!r} couples a qubit to itself")
        key = frozenset((i, j))
        if key in seen and seen[key] != strength:
            raise ValidationError(f"Conflicting ZZ values for pair {pair!r}")
        seen[key] = strength
        zz[i, j] = zz[j, i] = strength
    return zz


def _target(value: str | int) -> PrepTarget:
    # Unquoted YAML labels such as 11 or 01 arrive as integers.
    text = format(value, '02d') if isinstance(value, int) else value
    try:
        return PrepTarget.parse(text)
    except ValueError as e:
        raise ValidationError(str(e)) from e


def _echo_qubits(value: list[str]) -> tuple[int, ...]:
    return tuple(_qubit_index(q) for q in value)


ProbabilityTable = Parser(_probability_table)
T1Table = Parser(_t1_table)
ZZTable = Parser(_zz_table)
Target = Parser(_target)
EchoQubits = Parser(_echo_qubits)


@dataclasses.dataclass
class GridSpec:
    start: Angle
    stop: Angle
    num: PositiveInt


def _grid(value: list[Angle] | GridSpec) -> np.ndarray:
    if isinstance(value, GridSpec):
        return np.linspace(value.start, value.stop, value.num)
    if not value:
        raise ValidationError("Grids cannot be empty")
    return np.array(value, dtype=float)


Grid = Parser(_grid)


def _decay_state(value: str | int) -> str:
    text = format(value, '02d') if isinstance(value, int) else value
    if text not in ('11', 'pp'):
        raise ValidationError(f"Decay runs use state '11' or 'pp', not {text!r}")
    return text


DecayState = Parser(_decay_state)

_IDEAL = NoiseConfig.ideal()


@dataclasses.dataclass
class NoiseSection:
    """Device noise, see :py:class:`ftprep.noisemodels.NoiseConfig`.
    ``gate_damping`` controls amplitude damping during circuit layers."""

    t1_us: T1Table = _IDEAL.t1_us
    p0: ProbabilityTable = _IDEAL.p0
    p1: ProbabilityTable = _IDEAL.p1
    zz_khz: ZZTable = dataclasses.field(default_factory=lambda: _IDEAL.zz_khz.copy())
    stark_theta: Angle = 0.0
    single_qubit_ns: Real = 85.0
    cnot_ns: Real = 780.0
    gate_damping: bool = True

    def to_noise_config(self) -> NoiseConfig:
        return NoiseConfig(
            t1_us=self.t1_us,
            p0=self.p0,
            p1=self.p1,
            zz_khz=self.zz_khz,
            stark_theta=self.stark_theta,
            single_qubit_ns=self.single_qubit_ns,
            cnot_ns=self.cnot_ns,
        )

    def circuit_noise(self) -> NoiseConfig:
        """Noise applied while running the preparation circuit."""
        noise = self.to_noise_config()
        if self.gate_damping:
            return noise
        return dataclasses.replace(noise, t1_us=(math.inf,) * len(QUBIT_NAMES))


@dataclasses.dataclass
class RunSection:
    shots: PositiveInt = 100_000
    seed: int = 20211
    jobs: PositiveInt = 1
    exact: bool = False


@dataclasses.dataclass
class PrepSection:
    target: Target = PrepTarget.parse('00')
    cnot_model: CnotModel = CnotModel.ideal
    post_rotation: PostRotation = PostRotation.physical


class SweepKind(enum.Enum):
    A = 'A'
    B = 'B'
    C = 'C'
    yy = 'yy'


@dataclasses.dataclass
class SweepSection:
    site: SweepKind = SweepKind.B
    theta: Grid = dataclasses.field(default_factory=lambda: np.linspace(0, math.pi, 13))
    # The correlated rotation reduces acceptance monotonically only well below
    # pi/2 and turns back towards full acceptance at pi.
    yy_theta: Grid = dataclasses.field(
        default_factory=lambda: np.linspace(0, math.pi / 6, 9)
    )


@dataclasses.dataclass
class DecaySection:
    state: DecayState = '11'
    times_us: Grid = dataclasses.field(default_factory=lambda: np.linspace(0, 100, 21))
    echo: Echo = Echo.none
    echo_qubits: EchoQubits = DATA_QUBITS
    slices: PositiveInt = 100


@dataclasses.dataclass
class TomoSection:
    shots_per_setting: PositiveInt = 10_000
    estimator: Estimator = Estimator.likelihood


@dataclasses.dataclass
class OutputSection:
    directory: str = 'results'


@dataclasses.dataclass
class ExperimentConfig:
    noise: NoiseSection = dataclasses.field(default_factory=NoiseSection)
    run: RunSection = dataclasses.field(default_factory=RunSection)
    prep: PrepSection = dataclasses.field(default_factory=PrepSection)
    sweep: SweepSection = dataclasses.field(default_factory=SweepSection)
    decay: DecaySection = dataclasses.field(default_factory=DecaySection)
    tomo: TomoSection = dataclasses.field(default_factory=TomoSection)
    output: OutputSection = dataclasses.field(default_factory=OutputSection)


def _line_of(inp, key):
    lc = getattr(inp, 'lc', None)
    if lc is None:
        return None
    try:
        return lc.item(key)[0] + 1
    except (KeyError, IndexError, TypeError):
        return None


def _describe(exc, inp):
    """Walk the chain of a validation error, annotating each level with the
    line of the input it refers to."""
    lines = []
    current_exc = exc
    current_inp = inp
    while current_exc:
        if hasattr(current_exc, 'wrong_field'):
            key = current_exc.wrong_field
            line = _line_of(current_inp, key)
            where = f" at line {line}" if line is not None else ''
            lines.append(f"Problem processing key {key!r}{where}:")
            current_inp = current_inp[key]
        elif hasattr(current_exc, 'wrong_index'):
            index = current_exc.wrong_index
            line = _line_of(current_inp, index)
            where = f" at line {line}" if line is not None else ''
            lines.append(f"Problem processing list item {index}{where}:")
            current_inp = current_inp[index]
        elif hasattr(current_exc, 'unknown'):
            unknown = sorted(
                (_line_of(current_inp, u) or 0, str(u)) for u in current_exc.unknown
            )
            for line, key in unknown:
                lines.append(f"Unknown key {key!r} defined at line {line}:")
        lines.append(str(current_exc))
        current_exc = current_exc.__cause__
    return '\n'.join(lines)


def parse_config(inp, path=None) -> ExperimentConfig:
    """Validate a loaded mapping into an :py:class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        With a message giving the line of every offending key when ``inp``
        comes from a round-trip YAML load.
    """
    if inp is None:
        inp = {}
    try:
        return parse_input(inp, ExperimentConfig)
    except ValidationError as e:
        raise ConfigError(_describe(e, inp), path=path) from e


def load_config(path=None) -> ExperimentConfig:
    """Load a YAML configuration file, by default the bundled one with the
    device parameters.

    Raises
    ------
    ConfigError
        If the file cannot be read, is not valid YAML or does not match the
        schema.
    """
    path = pathlib.Path(path) if path is not None else DEFAULT_CONFIG_PATH
    logger.info("Loading configuration from %s", path)
    yaml = YAML(typ='rt')
    try:
        with open(path) as f:
            inp = yaml.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file: {e}", path=path) from e
    except YAMLError as e:
        raise ConfigError(f"Configuration file is not valid YAML:\n{e}", path=path) from e
    return parse_config(inp, path)
