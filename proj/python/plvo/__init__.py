"""Point-line feature matching and stereo visual odometry."""

from ._plvo import *  # noqa: F401,F403
from ._plvo import __doc__  # noqa: F401
