"""Gradient tree boosting with extreme-value-theory loss functions.

Subpackages cover gridded-dataset handling, the losses themselves, the
regression-tree and boosting engines, the three-component burned-area
mixture, spatially correlated cross-validation folds, scoring/tuning, and
model interpretation.  ``evtboost.cli`` is the batch front door.
"""

__version__ = "0.1.0"
