"""Zero-shot ML pipeline recommendation over a k-NN graph of datasets."""

__version__ = "0.1.0"
