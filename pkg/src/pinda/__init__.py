"""Contrastive learning with learned positive-incentive noise augmentation."""

__version__ = "0.1.0"
