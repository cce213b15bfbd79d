"""Toolkit for sentence correction with inline diff tags.

Targets are encoded as the source sentence plus ``<del>``/``<ins>`` spans.
The package covers the full loop: encoding and repairing tagged output,
extracting edits, scoring with MaxMatch (M2) and GLEU, biased beam decoding
with a grid-search tuner, and corpus preparation/analysis utilities.
"""

__version__ = "0.1.0"
