"""THz channel generation with a conditional diffusion transformer."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
