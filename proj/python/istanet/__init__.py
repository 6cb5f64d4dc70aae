"""Python bindings for the ISTA-Net compressive sensing core."""

from ._istanet import *  # noqa: F401,F403
from ._istanet import __doc__  # noqa: F401
