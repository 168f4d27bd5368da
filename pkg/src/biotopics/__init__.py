"""Topic-model retrieval and QA evaluation engine for biomedical abstracts."""

__version__ = "0.1.0"
