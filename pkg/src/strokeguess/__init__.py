"""Word guessing over incrementally revealed sketch strokes.

The package covers the full desk-scale pipeline: corpus ingestion and
normalization, open-vocabulary match scoring against a small taxonomy,
statistics, recurrent embedding-regression guessers (unified and two-phase),
sequence-level evaluation and a live guessing-game HTTP service.
"""

__version__ = "0.1.0"
