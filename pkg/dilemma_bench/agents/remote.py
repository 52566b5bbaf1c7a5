"""
Model-backed decision source.

Every round is a fresh, self-contained prompt: no conversational state is
kept between rounds.
"""

import dataclasses
import logging
import threading
from typing import Any, Dict, Optional

from dilemma_bench.agents.base import BaseAgent
from dilemma_bench.decisions import DecisionOutput, ModelClass, parse_decision
from dilemma_bench.exceptions import AgentDecisionFailure, DecisionParseError
from dilemma_bench.game import DEFAULT_MATRIX, RoundView
from dilemma_bench.gateway import LLMGateway, ModelEndpoint, SamplingConfig
from dilemma_bench.prompts import (
    Framing,
    Persona,
    PLACEMENT_USER,
    PromptBundle,
    build_dyadic_prompt,
    build_reputation_prompt,
    build_society_prompt,
)

# Configure logging
logger = logging.getLogger(__name__)

PROTOCOL_DYADIC = "dyadic"
PROTOCOL_REPUTATION = "reputation"
PROTOCOL_SOCIETY = "society"

DEFAULT_PARSE_RETRIES = 2


class DecisionStats:
    """Thread-safe counters of decisions, parse re-queries and failures."""

    def __init__(self):
        self._lock = threading.Lock()
        self.decisions = 0
        self.parse_retries = 0
        self.failures = 0

    def record_decision(self) -> None:
        with self._lock:
            self.decisions += 1

    def record_retry(self) -> None:
        with self._lock:
            self.parse_retries += 1

    def record_failure(self) -> None:
        with self._lock:
            self.failures += 1

    def to_dict(self) -> Dict[str, int]:
        with self._lock:
            return {
                "decisions": self.decisions,
                "parse_retries": self.parse_retries,
                "failures": self.failures,
            }


class RemoteAgent(BaseAgent):
    """
    Asks a remote model for each move.

    Args:
        endpoint (ModelEndpoint): Target model.
        model_class (ModelClass): Output contract and parser.
        gateway (LLMGateway): Shared client.
        persona (Persona): RP or RC.
        framing (Framing): Baseline or long-horizon.
        sampling (SamplingConfig, optional): Sampling parameters.
        stats (DecisionStats, optional): Shared counters.
        max_parse_retries (int): Re-queries with the same prompt after a
            parse failure.
        long_horizon_placement (str): "user" or "system".
    """

    def __init__(
        self,
        endpoint: ModelEndpoint,
        model_class: ModelClass,
        gateway: LLMGateway,
        persona: Persona = Persona.RATIONAL_PLAYER,
        framing: Framing = Framing.BASELINE,
        sampling: Optional[SamplingConfig] = None,
        stats: Optional[DecisionStats] = None,
        max_parse_retries: int = DEFAULT_PARSE_RETRIES,
        long_horizon_placement: str = PLACEMENT_USER,
    ):
        super().__init__()
        self.endpoint = endpoint
        self.model_class = ModelClass(model_class)
        self.gateway = gateway
        self.persona = Persona(persona)
        self.framing = Framing(framing)
        self.sampling = sampling or SamplingConfig()
        self.stats = stats or DecisionStats()
        self.max_parse_retries = max_parse_retries
        self.long_horizon_placement = long_horizon_placement
        self.name = endpoint.model_id

    def build_prompt(self, view: RoundView) -> PromptBundle:
        context: Dict[str, Any] = view.context
        protocol = context.get("protocol", PROTOCOL_DYADIC)
        matrix = context.get("matrix", DEFAULT_MATRIX)

        if protocol == PROTOCOL_REPUTATION:
            return build_reputation_prompt(context["trial"], self.model_class, matrix)
        if protocol == PROTOCOL_SOCIETY:
            return build_society_prompt(
                list(zip(view.own_history, view.opp_history)),
                context.get("prior_episodes", ()),
                persona=self.persona,
                framing=self.framing,
                model_class=self.model_class,
                horizon=view.horizon,
                history_format=context.get("history_format", "full"),
                shuffle_seed=context.get("shuffle_seed"),
                matrix=matrix,
                long_horizon_placement=self.long_horizon_placement,
            )
        return build_dyadic_prompt(
            view.horizon,
            view.own_history,
            view.opp_history,
            persona=self.persona,
            framing=self.framing,
            model_class=self.model_class,
            matrix=matrix,
            long_horizon_placement=self.long_horizon_placement,
        )

    def decide(self, view: RoundView) -> DecisionOutput:
        bundle = self.build_prompt(view)
        last_error = None

        for query in range(1 + self.max_parse_retries):
            completion = self.gateway.chat_complete(self.endpoint, bundle, self.sampling)
            try:
                decision = parse_decision(completion.text, self.model_class)
            except DecisionParseError as e:
                last_error = e
                if query < self.max_parse_retries:
                    self.stats.record_retry()
                    logger.warning(
                        f"{self.name} round {view.round_index}: unparseable output "
                        f"(request {completion.request_id}): {e}; re-querying"
                    )
                continue
            self.stats.record_decision()
            return dataclasses.replace(decision, request_id=completion.request_id)

        self.stats.record_failure()
        raise AgentDecisionFailure(
            side="?",
            round_index=view.round_index,
            reason=f"{type(last_error).__name__}: {last_error}",
        )
