"""Deconstruct bitmap timeline infographics into extensible templates and render new ones."""
__version__ = "0.1.0"
