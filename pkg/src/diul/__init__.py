"""Domain-irrelevant contrastive pretraining on synthetic multi-domain data."""

__version__ = "0.1.0"
