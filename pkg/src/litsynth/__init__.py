"""Literature mining pipeline: retrieve, parse, extract, cluster, summarise, reproduce."""

__version__ = "0.1.0"
