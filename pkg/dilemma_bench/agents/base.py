"""
Base class for decision sources.
"""

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from dilemma_bench.decisions import DecisionOutput
from dilemma_bench.game import RoundView


class BaseAgent(ABC):
    """
    Base class for everything that chooses a move: scripted strategies and
    remote models alike.

    An agent instance serves one episode. `start_episode` hands it the RNG
    substream of its side before round 1.
    """

    name: str = "agent"

    def __init__(self):
        self.rng: Optional[np.random.Generator] = None

    def start_episode(self, rng: np.random.Generator) -> None:
        """
        Reset per-episode state.

        Args:
            rng (np.random.Generator): Random stream reserved for this agent.
        """
        self.rng = rng

    @abstractmethod
    def decide(self, view: RoundView) -> DecisionOutput:
        """
        Choose the move for one round.

        Args:
            view (RoundView): Round index, horizon, both histories from this
                agent's perspective and the protocol context.

        Returns:
            DecisionOutput: The chosen action and any reasoning text.

        Raises:
            NotImplementedError: If the method is not implemented by a subclass.
        """
        raise NotImplementedError("Subclasses must implement decide method")
