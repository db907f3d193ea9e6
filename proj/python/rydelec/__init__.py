"""Rydberg-atom RF electrometry: ladder-scheme steady states, spectra, calibration and timing."""

from ._core import *  # noqa: F403
from ._core import __version__
