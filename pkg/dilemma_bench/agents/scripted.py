"""
Scripted decision sources: memory-one strategies, GRIM and the reputation
rule agents used to verify the indirect-reciprocity metrics.

Scripted agents ignore persona and framing and never build prompts.
"""

import logging
from enum import Enum

from dilemma_bench.agents.base import BaseAgent
from dilemma_bench.decisions import DecisionOutput
from dilemma_bench.game import Action, RoundView
from dilemma_bench.strategies import MemoryOneStrategy, next_action

# Configure logging
logger = logging.getLogger(__name__)


class MemoryOneAgent(BaseAgent):
    """Plays a memory-one strategy (ZD, ALLC, ALLD, TFT, RandomP)."""

    def __init__(self, strategy: MemoryOneStrategy):
        super().__init__()
        self.strategy = strategy
        self.name = strategy.name or "memory-one"

    def decide(self, view: RoundView) -> DecisionOutput:
        if self.rng is None:
            raise RuntimeError("start_episode must be called before decide")
        return DecisionOutput(choice=next_action(self.strategy, view.prev_state, self.rng))


class GrimAgent(BaseAgent):
    """Cooperates until the co-player defects once, then defects forever."""

    name = "GRIM"

    def decide(self, view: RoundView) -> DecisionOutput:
        if Action.D in view.opp_history:
            return DecisionOutput(choice=Action.D)
        return DecisionOutput(choice=Action.C)


class ReputationRule(str, Enum):
    THRESHOLD = "threshold"
    ANTI_THRESHOLD = "anti-threshold"
    PUBLIC = "public"


class ReputationRuleAgent(BaseAgent):
    """
    Decides a reputation trial from its cues alone.

    threshold: C iff score >= 0, D on control.
    anti-threshold: C iff score < 0, D on control.
    public: C iff the trial is Public.
    """

    def __init__(self, rule: ReputationRule):
        super().__init__()
        self.rule = ReputationRule(rule)
        self.name = self.rule.value

    def decide(self, view: RoundView) -> DecisionOutput:
        trial = view.context.get("trial")
        if trial is None:
            raise ValueError(f"{self.name} agent needs a reputation trial in the round context")

        if self.rule is ReputationRule.PUBLIC:
            cooperate = trial.is_public
        elif trial.is_control:
            cooperate = False
        elif self.rule is ReputationRule.THRESHOLD:
            cooperate = trial.score >= 0
        else:
            cooperate = trial.score < 0
        return DecisionOutput(choice=Action.C if cooperate else Action.D)
