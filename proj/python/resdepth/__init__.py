from ._resdepth import *  # noqa: F401,F403
