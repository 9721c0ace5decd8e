"""Flaw-oriented automatic fact checking.

The package covers the full claim-review pipeline: corpus handling, silver
label distillation, dense evidence retrieval, aspect / flaw / justification
generation with adapter fine-tuning, veracity classification, and text
generation metrics (ROUGE, BERTScore-style matching, LLM-judge scoring).
"""

__version__ = "0.1.0"
