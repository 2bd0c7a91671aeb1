from ._rap import *  # noqa: F401,F403
