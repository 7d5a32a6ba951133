"""Swarm mission planning with GLMB tracking and A*/Hungarian target assignment."""

__version__ = "0.1.0"
