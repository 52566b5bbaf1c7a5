"""
Iterated Prisoner's Dilemma engine: actions, payoffs, joint states and
simultaneous-move episode execution.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np

from dilemma_bench.exceptions import AgentDecisionFailure, GatewayError, InvalidPayoffMatrix

if TYPE_CHECKING:
    from dilemma_bench.agents.base import BaseAgent
    from dilemma_bench.decisions import DecisionOutput

# Configure logging
logger = logging.getLogger(__name__)

SIDE_A = "a"
SIDE_B = "b"


class Action(str, Enum):
    """A move in the dilemma: cooperate or defect."""

    C = "C"
    D = "D"

    @classmethod
    def parse(cls, value: Any) -> "Action":
        """
        Convert "C"/"D" (or an Action) into an Action.

        Raises:
            ValueError: If the value is not exactly "C" or "D".
        """
        if isinstance(value, Action):
            return value
        if value == "C":
            return cls.C
        if value == "D":
            return cls.D
        raise ValueError(f"Not an action: {value!r}")

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class PayoffMatrix:
    """
    Symmetric dilemma payoffs.

    The ordering T > R > P > S and 2R > T + S are enforced at construction.
    """

    reward: int = 3
    punishment: int = 1
    temptation: int = 5
    sucker: int = 0

    def __post_init__(self):
        t, r, p, s = self.temptation, self.reward, self.punishment, self.sucker
        if not (t > r > p > s):
            raise InvalidPayoffMatrix(f"Dilemma ordering T > R > P > S violated: T={t}, R={r}, P={p}, S={s}")
        if not (2 * r > t + s):
            raise InvalidPayoffMatrix(f"2R > T + S violated: R={r}, T={t}, S={s}")

    def value(self, self_action: Action, other_action: Action) -> int:
        if self_action is Action.C:
            return self.reward if other_action is Action.C else self.sucker
        return self.temptation if other_action is Action.C else self.punishment

    def to_dict(self) -> Dict[str, int]:
        return {"R": self.reward, "P": self.punishment, "T": self.temptation, "S": self.sucker}


DEFAULT_MATRIX = PayoffMatrix()


def payoff(matrix: PayoffMatrix, self_action: Action, other_action: Action) -> int:
    """
    Payoff to the player choosing `self_action` against `other_action`.

    Args:
        matrix (PayoffMatrix): Payoff values.
        self_action (Action): Own move.
        other_action (Action): Opponent's move.

    Returns:
        int: R, S, T or P.
    """
    return matrix.value(self_action, other_action)


class JointState(str, Enum):
    """Previous-round joint action, owner's action listed first."""

    CC = "CC"
    CD = "CD"
    DC = "DC"
    DD = "DD"

    @classmethod
    def of(cls, own: Action, other: Action) -> "JointState":
        return cls(own.value + other.value)

    @property
    def own(self) -> Action:
        return Action(self.value[0])

    @property
    def other(self) -> Action:
        return Action(self.value[1])

    def swapped(self) -> "JointState":
        """The same state seen by the other player."""
        return JointState(self.value[::-1])


STATE_ORDER: Tuple[JointState, ...] = (JointState.CC, JointState.CD, JointState.DC, JointState.DD)


@dataclass(frozen=True)
class RoundRecord:
    """One round of simultaneous moves."""

    round_index: int
    action_a: Action
    action_b: Action
    payoff_a: int
    payoff_b: int
    trace_a: Optional[Dict[str, Any]] = None
    trace_b: Optional[Dict[str, Any]] = None

    def action(self, side: str) -> Action:
        return self.action_a if side == SIDE_A else self.action_b

    def payoff(self, side: str) -> int:
        return self.payoff_a if side == SIDE_A else self.payoff_b

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "round_index": self.round_index,
            "action_a": self.action_a.value,
            "action_b": self.action_b.value,
            "payoff_a": self.payoff_a,
            "payoff_b": self.payoff_b,
        }
        if self.trace_a:
            data["trace_a"] = self.trace_a
        if self.trace_b:
            data["trace_b"] = self.trace_b
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RoundRecord":
        return cls(
            round_index=int(data["round_index"]),
            action_a=Action.parse(data["action_a"]),
            action_b=Action.parse(data["action_b"]),
            payoff_a=data["payoff_a"],
            payoff_b=data["payoff_b"],
            trace_a=data.get("trace_a"),
            trace_b=data.get("trace_b"),
        )


@dataclass(frozen=True)
class EpisodeRecord:
    """
    One supergame between a fixed pair.

    Invalid (aborted) episodes keep the rounds played so far, carry the error
    message and are excluded from every metric.
    """

    episode_index: int
    horizon: int
    rounds: Tuple[RoundRecord, ...]
    condition_tag: str = ""
    seed: int = 0
    valid: bool = True
    error: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def actions(self, side: str = SIDE_A) -> List[Action]:
        return [r.action(side) for r in self.rounds]

    def mean_payoff(self, side: str = SIDE_A) -> float:
        if not self.rounds:
            return 0.0
        return sum(r.payoff(side) for r in self.rounds) / len(self.rounds)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "episode_index": self.episode_index,
            "horizon": self.horizon,
            "condition_tag": self.condition_tag,
            "seed": self.seed,
            "valid": self.valid,
        }
        if self.error is not None:
            data["error"] = self.error
        if self.metadata:
            data["metadata"] = self.metadata
        data["rounds"] = [r.to_dict() for r in self.rounds]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EpisodeRecord":
        return cls(
            episode_index=int(data["episode_index"]),
            horizon=int(data["horizon"]),
            rounds=tuple(RoundRecord.from_dict(r) for r in data.get("rounds", [])),
            condition_tag=data.get("condition_tag", ""),
            seed=int(data.get("seed", 0)),
            valid=bool(data.get("valid", True)),
            error=data.get("error"),
            metadata=dict(data.get("metadata", {})),
        )


@dataclass(frozen=True)
class RoundView:
    """
    What a decision source sees when choosing its round-t move.

    Histories are from the viewer's own perspective and cover rounds 1..t-1
    of the current episode only.
    """

    round_index: int
    horizon: int
    own_history: Tuple[Action, ...]
    opp_history: Tuple[Action, ...]
    context: Dict[str, Any] = field(default_factory=dict)

    @property
    def prev_state(self) -> Optional[JointState]:
        if not self.own_history:
            return None
        return JointState.of(self.own_history[-1], self.opp_history[-1])


def joint_state(prev_round: RoundRecord, perspective: str = SIDE_A) -> JointState:
    """
    Label the joint action of a round from one player's perspective.

    Args:
        prev_round (RoundRecord): The previous round.
        perspective (str): "a" or "b"; that side's action is listed first.

    Returns:
        JointState: CC, CD, DC or DD.
    """
    if perspective == SIDE_A:
        return JointState.of(prev_round.action_a, prev_round.action_b)
    if perspective == SIDE_B:
        return JointState.of(prev_round.action_b, prev_round.action_a)
    raise ValueError(f"Unknown perspective: {perspective}")


def derive_seed(seed: int, *keys: int) -> int:
    """
    Derive a 32-bit seed from an experiment seed and integer keys.

    Args:
        seed (int): Experiment seed.
        *keys (int): Indices identifying the unit (condition, episode, ...).

    Returns:
        int: Derived seed.
    """
    sequence = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(sequence.generate_state(1)[0])


def side_generators(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent RNG streams for side a and side b of one episode."""
    child_a, child_b = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(child_a), np.random.default_rng(child_b)


def _trace(decision: "DecisionOutput") -> Optional[Dict[str, Any]]:
    trace = {}
    if decision.reasoning:
        trace["reasoning"] = decision.reasoning
    if decision.think_trace:
        trace["think_trace"] = decision.think_trace
    if decision.request_id:
        trace["request_id"] = decision.request_id
    return trace or None


def _decide(agent: "BaseAgent", view: RoundView, side: str) -> "DecisionOutput":
    try:
        return agent.decide(view)
    except AgentDecisionFailure as e:
        raise AgentDecisionFailure(side, view.round_index, e.reason or str(e)) from e
    except GatewayError as e:
        raise AgentDecisionFailure(side, view.round_index, f"{type(e).__name__}: {e}") from e


def run_episode(
    agent_a: "BaseAgent",
    agent_b: "BaseAgent",
    horizon: int,
    seed: int,
    condition_tag: str = "",
    episode_index: int = 1,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
    context_a: Optional[Dict[str, Any]] = None,
    context_b: Optional[Dict[str, Any]] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> EpisodeRecord:
    """
    Play one episode of `horizon` simultaneous-move rounds.

    Both agents decide from views built before either move of the round is
    known, and each side draws from its own RNG substream of `seed`.

    Args:
        agent_a (BaseAgent): Decision source for side a.
        agent_b (BaseAgent): Decision source for side b.
        horizon (int): Number of rounds (H >= 1).
        seed (int): Episode seed.
        condition_tag (str): Free-form label stored on the record.
        episode_index (int): 1-based episode index.
        matrix (PayoffMatrix): Payoff values.
        context_a (dict, optional): Protocol context injected into side a's views.
        context_b (dict, optional): Protocol context injected into side b's views.
        metadata (dict, optional): Extra fields stored on the record.

    Returns:
        EpisodeRecord: The completed episode, or an invalid record if a side
        failed to decide.
    """
    if horizon < 1:
        raise ValueError(f"Horizon must be at least 1, got {horizon}")

    rng_a, rng_b = side_generators(seed)
    agent_a.start_episode(rng_a)
    agent_b.start_episode(rng_b)

    rounds: List[RoundRecord] = []
    history_a: List[Action] = []
    history_b: List[Action] = []

    for t in range(1, horizon + 1):
        view_a = RoundView(t, horizon, tuple(history_a), tuple(history_b), dict(context_a or {}))
        view_b = RoundView(t, horizon, tuple(history_b), tuple(history_a), dict(context_b or {}))
        try:
            decision_a = _decide(agent_a, view_a, SIDE_A)
            decision_b = _decide(agent_b, view_b, SIDE_B)
        except AgentDecisionFailure as e:
            logger.error(f"Episode {episode_index} ({condition_tag}) aborted: {e}")
            return EpisodeRecord(
                episode_index=episode_index,
                horizon=horizon,
                rounds=tuple(rounds),
                condition_tag=condition_tag,
                seed=seed,
                valid=False,
                error=str(e),
                metadata=dict(metadata or {}),
            )

        a, b = decision_a.choice, decision_b.choice
        rounds.append(RoundRecord(
            round_index=t,
            action_a=a,
            action_b=b,
            payoff_a=payoff(matrix, a, b),
            payoff_b=payoff(matrix, b, a),
            trace_a=_trace(decision_a),
            trace_b=_trace(decision_b),
        ))
        history_a.append(a)
        history_b.append(b)
        logger.debug(f"Episode {episode_index} round {t}: {a.value}{b.value}")

    return EpisodeRecord(
        episode_index=episode_index,
        horizon=horizon,
        rounds=tuple(rounds),
        condition_tag=condition_tag,
        seed=seed,
        metadata=dict(metadata or {}),
    )


def render_actions(actions: Sequence[Action]) -> str:
    """Render an action list as "[C D C]"."""
    return "[" + " ".join(a.value for a in actions) + "]"
