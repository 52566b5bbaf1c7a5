"""
Decision sources and the agent registry.
"""

import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, Mapping, Optional

from dilemma_bench.agents.base import BaseAgent
from dilemma_bench.agents.remote import DecisionStats, RemoteAgent
from dilemma_bench.agents.scripted import GrimAgent, MemoryOneAgent, ReputationRule, ReputationRuleAgent
from dilemma_bench.decisions import ModelClass
from dilemma_bench.gateway import ModelEndpoint
from dilemma_bench.prompts import Framing, Persona
from dilemma_bench.strategies import MemoryOneStrategy, ScriptedKind, ZDCondition, strategy_from_name

# Configure logging
logger = logging.getLogger(__name__)

KIND_SCRIPTED = "scripted"
KIND_REMOTE = "remote"


@dataclass(frozen=True)
class AgentSpec:
    """
    Description of a decision source, instantiated fresh for every episode.

    Scripted specs name a strategy ("TFT", "RandomP(0.3)", "ZD:GM", "GRIM",
    "threshold", ...). Remote specs name an endpoint and a model class.
    Persona and framing only affect remote agents.
    """

    kind: str
    strategy: Optional[str] = None
    endpoint: Optional[ModelEndpoint] = None
    model_class: ModelClass = ModelClass.INSTRUCTION_TUNED
    persona: Persona = Persona.RATIONAL_PLAYER
    framing: Framing = Framing.BASELINE

    def __post_init__(self):
        if self.kind == KIND_SCRIPTED and not self.strategy:
            raise ValueError("Scripted agent spec needs a strategy name")
        if self.kind == KIND_REMOTE and self.endpoint is None:
            raise ValueError("Remote agent spec needs an endpoint")

    @property
    def is_scripted(self) -> bool:
        return self.kind == KIND_SCRIPTED

    @property
    def label(self) -> str:
        if self.endpoint is not None and not self.is_scripted:
            return self.endpoint.model_id
        return self.strategy or self.kind

    def with_persona(self, persona: Persona) -> "AgentSpec":
        return replace(self, persona=Persona(persona))

    def with_framing(self, framing: Framing) -> "AgentSpec":
        return replace(self, framing=Framing(framing))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind}
        if self.strategy:
            data["strategy"] = self.strategy
        if self.endpoint is not None:
            data["endpoint"] = self.endpoint.ref()
            data["model_class"] = self.model_class.value
        data["persona"] = self.persona.value
        data["framing"] = self.framing.value
        return data

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> "AgentSpec":
        """
        Build a spec from an `agent` config section.

        Raises:
            ValueError: If the kind is unknown or a required field is missing.
        """
        kind = data.get("kind", KIND_SCRIPTED)
        if kind not in _FACTORIES:
            raise ValueError(f"Unknown agent kind: {kind}")
        endpoint = None
        if data.get("endpoint"):
            endpoint = ModelEndpoint.from_config(data["endpoint"])
        return cls(
            kind=kind,
            strategy=data.get("strategy"),
            endpoint=endpoint,
            model_class=ModelClass(data.get("model_class", ModelClass.INSTRUCTION_TUNED.value)),
            persona=Persona(data.get("persona", Persona.RATIONAL_PLAYER.value)),
            framing=Framing(data.get("framing", Framing.BASELINE.value)),
        )


def build_scripted_agent(
    name: str,
    zd_table: Optional[Mapping[ZDCondition, MemoryOneStrategy]] = None,
) -> BaseAgent:
    """
    Instantiate a scripted agent by strategy name.

    Raises:
        ValueError: If the name is unknown.
    """
    text = name.strip()
    if text.upper() == ScriptedKind.GRIM.value:
        return GrimAgent()
    if text.lower() in {rule.value for rule in ReputationRule}:
        return ReputationRuleAgent(ReputationRule(text.lower()))
    return MemoryOneAgent(strategy_from_name(text, zd_table))


def _build_scripted(spec: AgentSpec, zd_table=None, **_: Any) -> BaseAgent:
    return build_scripted_agent(spec.strategy, zd_table)


def _build_remote(
    spec: AgentSpec,
    gateway=None,
    sampling=None,
    stats: Optional[DecisionStats] = None,
    max_parse_retries: int = 2,
    long_horizon_placement: str = "user",
    **_: Any,
) -> BaseAgent:
    if gateway is None:
        raise ValueError(f"Remote agent {spec.label} needs a gateway")
    return RemoteAgent(
        endpoint=spec.endpoint,
        model_class=spec.model_class,
        gateway=gateway,
        persona=spec.persona,
        framing=spec.framing,
        sampling=sampling,
        stats=stats,
        max_parse_retries=max_parse_retries,
        long_horizon_placement=long_horizon_placement,
    )


# Registry of agent factories
_FACTORIES: Dict[str, Callable[..., BaseAgent]] = {
    KIND_SCRIPTED: _build_scripted,
    KIND_REMOTE: _build_remote,
}


def get_agent_factory(kind: str) -> Optional[Callable[..., BaseAgent]]:
    """
    Get the factory for an agent kind.

    Args:
        kind (str): Agent kind.

    Returns:
        Optional[Callable]: Factory, or None if the kind is unknown.
    """
    factory = _FACTORIES.get(kind.lower())
    if not factory:
        logger.warning(f"No agent factory available for kind: {kind}")
    return factory


def register_agent_factory(kind: str, factory: Callable[..., BaseAgent]) -> None:
    """
    Register a factory for an agent kind.

    Args:
        kind (str): Agent kind.
        factory (Callable): Called as factory(spec, **options).
    """
    _FACTORIES[kind.lower()] = factory
    logger.info(f"Registered agent factory for kind: {kind}")


def build_agent(spec: AgentSpec, **options: Any) -> BaseAgent:
    """
    Instantiate a fresh agent for one episode.

    Args:
        spec (AgentSpec): Agent description.
        **options: Factory options (gateway, sampling, stats, zd_table,
            max_parse_retries, long_horizon_placement).

    Returns:
        BaseAgent: A new agent instance.

    Raises:
        ValueError: If no factory handles the agent kind.
    """
    factory = get_agent_factory(spec.kind)
    if factory is None:
        raise ValueError(f"Unknown agent kind: {spec.kind}")
    return factory(spec, **options)


__all__ = [
    "AgentSpec",
    "BaseAgent",
    "DecisionStats",
    "GrimAgent",
    "MemoryOneAgent",
    "RemoteAgent",
    "ReputationRule",
    "ReputationRuleAgent",
    "build_agent",
    "build_scripted_agent",
    "get_agent_factory",
    "register_agent_factory",
]
