"""Desk-scale embodied question answering laboratory.

A deterministic synthetic city simulator, an object-centric grid map, a
hierarchical planner/manager/actor agent, random and frontier-based
exploration baselines, and a scoring harness, with every model call routed
through a swappable gateway (scripted rules, transcript replay, or an
OpenAI-compatible endpoint).
"""

__version__ = "0.1.0"
