"""Landmark navigation instructions from OpenStreetMap extracts.

The pipeline: parse OSM XML into streets / points of interest / building
footprints, discretize streets into a 10 m segment graph, sample constrained
routes, turn each route into a location- and rotation-invariant labeled
graph, generate instructions (rule-based baseline or a graph-attention
encoder with a copying Transformer decoder), and score generated
instructions with text and navigation metrics.
"""

__version__ = "0.1.0"

from .config import PipelineConfig  # noqa: E402,F401
