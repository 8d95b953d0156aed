"""Tidy Monte Carlo simulation studies.

Tables are returned as ``dict[str, list]``; pass them to ``pandas.DataFrame``
for analysis.
"""

from ._tidysim import (
    Grid,
    Results,
    aggregate,
    derive_seed,
    fit_ols,
    prepost_analyze,
    prepost_generate,
    run,
    studies,
)

__all__ = [
    "Grid",
    "Results",
    "aggregate",
    "derive_seed",
    "fit_ols",
    "prepost_analyze",
    "prepost_generate",
    "run",
    "studies",
]
