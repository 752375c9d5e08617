"""descry: person retrieval from semantic descriptions in calibrated
surveillance video, with the evaluation harness to benchmark it."""

__version__ = "0.1.0"
