"""delaydyn: dynamic prediction of overall delay in agile epics.

Pipeline: segment epics into a unified milestone timeline, mine recurrent
delay patterns from intermediate-delay series by DTW clustering, and fit a
zero-inflated Beta regression by Hamiltonian Monte Carlo in global,
global-iterative, and dynamic modes, with a statistical evaluation harness.
"""

__version__ = "0.1.0"

from . import bayes, clustering, dataset, errors, evaluation, modes, synthgen  # noqa: F401
