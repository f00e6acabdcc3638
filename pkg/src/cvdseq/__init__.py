"""Prediction of first cardiovascular events from longitudinal EHR sequences.

The package covers the full desk-scale pipeline: raw event records, daily
feature aggregation, case-control cohort construction with nearest-neighbour
matching, a clinical hazard-score baseline, L1 logistic regression over
concatenated history, single- and multi-task GRU sequence models with
optional attention, Gaussian-process hyperparameter search, cross-validated
evaluation with permutation feature importance, and a synthetic cohort
generator with a known performance ceiling.
"""

__version__ = "0.1.0"
