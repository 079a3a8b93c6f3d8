"""Attempt-count prediction toolkit for puzzle-game telemetry.

Thin Python surface over the C++ core: synthetic data generation,
factorization-machine training by Gibbs sampling, the per-level-mean
baseline, and the shared metric/correlation helpers.
"""

try:
    from ._levelcast import *  # noqa: F401,F403  (wheel layout)
    from ._levelcast import __version__  # noqa: F401
except ImportError:  # in-tree build: module sits on PYTHONPATH
    from _levelcast import *  # noqa: F401,F403
    from _levelcast import __version__  # noqa: F401
