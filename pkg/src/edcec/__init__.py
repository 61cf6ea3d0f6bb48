"""Error detection and context-aware correction of ASR transcripts."""

__version__ = "0.1.0"
