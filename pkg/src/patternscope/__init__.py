"""patternscope: mine UI design-pattern components from app view hierarchies.

Pipeline: ingest a screens+metadata corpus, detect candidate components by
relaxed keyword matching over hierarchy trees, crop candidates (and heatmap-
mined negatives) from screenshots, verify candidates with per-kind binary
classifiers, and compute usage statistics against app quality signals.
"""

__version__ = "0.1.0"
