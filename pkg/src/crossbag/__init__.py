"""Noise-robust distantly-supervised relation extraction.

Trains P-CNN sentence encoders under multi-instance learning with
cross-relation sentence attention and cross-bag attention, plus the
vanilla attention and dot-product-scoring ablations.
"""

__version__ = "0.1.0"
