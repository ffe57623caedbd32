"""Imaging-derived age discrepancy and survival analysis for kidney-tumor cohorts.

Pipeline stages: NIfTI case ingestion, three-plane weighted view extraction,
cross-validated age prediction (pluggable model), normalized residual
discrepancy, Cox proportional-hazards fits for hospital stay and overall
survival, and table/figure reporting.
"""

__version__ = "0.1.0"
