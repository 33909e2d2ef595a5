"""Cascaded flow matching for mixed-type tabular data."""
from .data import Dataset, FeatureSchema, load_dataset, write_dataset
from .encoders import EncoderSet, fit_encoders

__version__ = "0.1.0"

__all__ = ["Dataset", "EncoderSet", "FeatureSchema", "fit_encoders", "load_dataset", "write_dataset"]
