"""Natural Garment Language: schema, question planner, constrained decoding,
GarmentCode-style compiler, sewing-pattern generator and evaluation."""

from .compiler import compile_document, load_mapping
from .patterngen import BodyMeasurements, check_pattern, generate_pattern, render_svg
from .pipeline import Media, OracleBackend, process_outfit
from .planner import FailureRecord, run_session
from .schema import NGLDocument, NGLSchema, load_schema, validate_document

__version__ = "0.1.0"

__all__ = [
    "BodyMeasurements", "FailureRecord", "Media", "NGLDocument", "NGLSchema", "OracleBackend",
    "check_pattern", "compile_document", "generate_pattern", "load_mapping", "load_schema",
    "process_outfit", "render_svg", "run_session", "validate_document",
]
