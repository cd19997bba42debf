"""Prequential description lengths for classification sequences.

The package measures how many nats an online learner spends predicting a
label sequence one step ahead, under several training protocols, and keeps
an exact ledger of the floating-point operations used to do so.  Small-scale
normalized-maximum-likelihood and Krichevsky-Trofimov coders are included as
exact references.
"""

from preqmdl import analysis, dataset, estimators, models, optim, oracle, replay

__all__ = [
    "analysis",
    "dataset",
    "estimators",
    "models",
    "optim",
    "oracle",
    "replay",
]

__version__ = "0.1.0"
