"""
The ``errors`` module defines the exceptions raised by ftprep. These are
always subclasses of :py:class:`FtprepError`.
"""

import difflib

from validobj.errors import AlternativeDisplay as _ValidobjDisplay
from validobj.errors import print_list

__all__ = [
    'FtprepError',
    'ConfigError',
    'SimulationError',
    'NotTracePreservingError',
    'CircuitError',
    'UnknownNameError',
    'UndefinedMetricError',
    'FitError',
    'SchemaError',
]


class AlternativeDisplay(_ValidobjDisplay):
    """Suggest close matches to a bad value. Unlike the validobj base, an
    empty list of alternatives and non-string values are accepted."""

    @property
    def _alternative_displayed_options(self):
        if not self.alternatives:
            return []
        if not self.display_all_alternatives:
            return difflib.get_close_matches(str(self.bad_item), self.alternatives)
        return self.alternatives


class FtprepError(Exception):
    """Base class of every exception raised by ftprep."""


class ConfigError(FtprepError):
    """Exception raised when a configuration file cannot be processed.

    Parameters
    ----------
    path : str or None
        The file that failed, if the input came from a file.

    Notes
    -----
    The ``__cause__`` attribute holds the underlying
    :py:class:`validobj.ValidationError` (or parse error).
    """

    def __init__(self, *args, path=None, **kwargs):
        self.path = path
        super().__init__(*args, **kwargs)


class SimulationError(FtprepError, ValueError):
    """Exception raised when a state, operator or channel is inconsistent:
    wrong dimensions, bad targets or violated invariants."""


class NotTracePreservingError(SimulationError):
    """Exception raised when a set of Kraus operators does not satisfy
    :math:`\\sum_i A_i^\\dagger A_i = I`.

    Parameters
    ----------
    deviation : float
        Largest absolute entry of :math:`\\sum_i A_i^\\dagger A_i - I`.
    """

    def __init__(self, deviation):
        self.deviation = deviation
        super().__init__(deviation)

    def __str__(self):
        return (
            f"Kraus operators are not trace preserving: completeness "
            f"violated by {self.deviation:.3g}"
        )


class CircuitError(FtprepError, ValueError):
    """Exception raised when a circuit cannot be built or modified as requested."""


class UnknownNameError(AlternativeDisplay, CircuitError):
    """Exception raised when a name (insertion site, CNOT model, command kind...)
    is not one of the known ones.

    Parameters
    ----------
    bad_item : str
        The unknown name.
    kind : str
        What the name was supposed to refer to, e.g. ``'insertion site'``.
    alternatives : Iterable[str]
        The valid names.
    """

    def __init__(self, bad_item, kind, alternatives):
        self.kind = kind
        super().__init__(
            f"{bad_item!r} is not a valid {kind}. ",
            bad_item=bad_item,
            alternatives=alternatives,
        )

    def __str__(self):
        allvals_text = f"All valid values are:\n{print_list(self.alternatives)}"
        return f'{super().__str__()}\n{allvals_text}'


class UndefinedMetricError(FtprepError, ArithmeticError):
    """Exception raised when a conditional quantity is requested but the
    conditioning event has (numerically) zero probability.

    Parameters
    ----------
    quantity : str
        Name of the requested quantity.
    denominator : float
        The vanishing probability.
    """

    def __init__(self, quantity, denominator):
        self.quantity = quantity
        self.denominator = denominator
        super().__init__(quantity, denominator)

    def __str__(self):
        return (
            f"Cannot compute {self.quantity}: conditioning probability "
            f"{self.denominator:.3g} is too small"
        )


class FitError(FtprepError):
    """Exception raised when a fit fails to converge or its parameters are not
    identifiable from the data."""


class SchemaError(FitError):
    """Exception raised when tabular input does not conform to the expected
    columns.

    Parameters
    ----------
    wrong_line : int
        One-based line number of the offending row (the header is line 1).

    Notes
    -----
    The ``__cause__`` attribute of the exception may contain the underlying
    parse error.
    """

    def __init__(self, *args, wrong_line, **kwargs):
        self.wrong_line = wrong_line
        super().__init__(*args, **kwargs)

    def __str__(self):
        return f"Line {self.wrong_line}: {super().__str__()}"
