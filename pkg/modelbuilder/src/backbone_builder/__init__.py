"""Build searched backbone architectures (versioned JSON) as PyTorch modules."""

__version__ = "0.1.0"

from .model import Backbone, build
from .schema import BlockRow, SchemaError, analytic_conv_params, load_document
from .verify import VerifyReport, verify

__all__ = [
    "Backbone",
    "build",
    "BlockRow",
    "SchemaError",
    "analytic_conv_params",
    "load_document",
    "VerifyReport",
    "verify",
]
