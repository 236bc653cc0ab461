"""
specrank: description specificity measured as target-image rank

A description is specific when an image-text compatibility score singles out
its target among a contrast set of other images. The package ingests
description manifests, collects embeddings, ranks targets at scale, fits the
rank/length/preference models and renders their tables and charts.
"""

__version__ = '0.1.0'
