"""qLPV system identification with manifold regularization and active learning."""

from qlpv_al._core import *  # noqa: F401,F403
from qlpv_al._core import __version__  # noqa: F401
