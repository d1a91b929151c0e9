"""Fault-tolerant preparation of [[4,2,2]] logical states: simulation, post-selection and fits"""

__version__ = '0.1'

from .errors import FtprepError
from .prep import PrepTarget, build_prep_circuit, simulate
from .config import load_config
