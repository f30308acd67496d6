"""Knowledge-graph-enriched caption decoders with reference-free evaluation."""

__version__ = "0.1.0"
