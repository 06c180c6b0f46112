"""Assertion-level proof tutor.

A model-tracing tutoring engine for textbook-style proofs about binary
relations: parses declarative proof steps, reconstructs omitted reasoning
by bounded breadth-first search over assertion-level inferences, judges
soundness / granularity / relevance, and generates increasingly explicit
hints from hierarchical strategy plans.
"""

__version__ = "0.1.0"
