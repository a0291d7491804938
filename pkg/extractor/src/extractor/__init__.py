"""Offline embedding extraction into the DEMB file format."""

from .cli import extract
from .demb import write_embeddings
from .encoders import ModelLoadError, ToyEncoder, load_encoder

__version__ = "0.1.0"
