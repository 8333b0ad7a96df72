"""Convolutional-recurrent velocity decoder for binned spike counts."""

from ._spikedec import *  # noqa: F401,F403
from ._spikedec import __doc__  # noqa: F401
