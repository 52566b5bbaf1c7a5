"""
Dilemma Bench - social-dilemma evaluation of model agents in the iterated
Prisoner's Dilemma.
"""

__version__ = "0.1.0"
