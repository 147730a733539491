"""Image-folder feature exporter for the .impd dataset format."""

from .exporter import ExportManifest, ExportResult, FeatureExtractor, export
from .writer import write_impd

__version__ = "0.1.0"
