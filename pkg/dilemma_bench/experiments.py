"""
Protocol drivers: direct reciprocity against ZD opponents, single-round
reputation trials and repeated all-pairs society episodes.
"""

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from dilemma_bench.agents import AgentSpec, build_agent
from dilemma_bench.agents.remote import PROTOCOL_DYADIC, PROTOCOL_REPUTATION, PROTOCOL_SOCIETY
from dilemma_bench.agents.scripted import MemoryOneAgent
from dilemma_bench.decisions import DecisionOutput
from dilemma_bench.exceptions import AgentDecisionFailure, GatewayError
from dilemma_bench.game import (
    Action,
    DEFAULT_MATRIX,
    EpisodeRecord,
    PayoffMatrix,
    RoundView,
    SIDE_A,
    SIDE_B,
    derive_seed,
    run_episode,
)
from dilemma_bench.prompts import Framing, Persona, PriorEpisode
from dilemma_bench.strategies import MemoryOneStrategy, ZDCondition, zd_params

# Configure logging
logger = logging.getLogger(__name__)

TRIAL_COUNT = 1010
CONTROL_COUNT = 10
SCORE_LEVELS = tuple(range(-5, 6))
HISTORY_FORMATS = ("full", "counts")


def _map_ordered(func: Callable, jobs: Sequence, workers: int, desc: str, progress: bool = True) -> Iterator:
    """Apply func to jobs on a thread pool, yielding results in job order."""
    if workers <= 1:
        yield from tqdm(map(func, jobs), total=len(jobs), desc=desc, disable=not progress)
        return
    with ThreadPoolExecutor(max_workers=workers) as executor:
        yield from tqdm(executor.map(func, jobs), total=len(jobs), desc=desc, disable=not progress)


# ---------------------------------------------------------------------------
# Direct reciprocity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectReciprocityConfig:
    conditions: Tuple[ZDCondition, ...] = tuple(ZDCondition)
    horizon: int = 30
    episodes: int = 50
    framing: Framing = Framing.BASELINE
    seed: int = 0

    def __post_init__(self):
        if not self.conditions:
            raise ValueError("At least one ZD condition is required")
        if self.horizon < 1:
            raise ValueError(f"Horizon must be at least 1, got {self.horizon}")
        if self.episodes < 1:
            raise ValueError(f"Episodes per condition must be at least 1, got {self.episodes}")

    @classmethod
    def from_config(cls, section: Mapping[str, Any], seed: int = 0) -> "DirectReciprocityConfig":
        return cls(
            conditions=tuple(ZDCondition(str(c).upper()) for c in section.get("conditions", [c.value for c in ZDCondition])),
            horizon=int(section.get("horizon", 30)),
            episodes=int(section.get("episodes", 50)),
            framing=Framing(section.get("framing", Framing.BASELINE.value)),
            seed=int(seed),
        )


def run_direct_reciprocity(
    agent: AgentSpec,
    config: DirectReciprocityConfig,
    agent_options: Optional[Dict[str, Any]] = None,
    zd_table: Optional[Mapping[ZDCondition, MemoryOneStrategy]] = None,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
    workers: int = 1,
    on_episode: Optional[Callable[[EpisodeRecord], None]] = None,
    progress: bool = True,
) -> List[EpisodeRecord]:
    """
    Play the agent (side a) against a fresh ZD opponent (side b) for every
    configured condition.

    Args:
        agent (AgentSpec): The agent under test.
        config (DirectReciprocityConfig): Conditions, horizon, episodes, framing, seed.
        agent_options (dict, optional): Passed to build_agent.
        zd_table (mapping, optional): Alternative ZD parameters.
        matrix (PayoffMatrix): Payoff values.
        workers (int): Episodes played concurrently.
        on_episode (callable, optional): Called with each record, in order.
        progress (bool): Show a progress bar.

    Returns:
        List[EpisodeRecord]: Records in (condition, episode) order, tagged
        with the condition. Failed episodes are marked invalid.
    """
    spec = agent.with_framing(config.framing)
    options = dict(agent_options or {})
    options.setdefault("zd_table", zd_table)
    condition_order = list(ZDCondition)
    jobs = [(condition, e) for condition in config.conditions for e in range(1, config.episodes + 1)]

    def play(job: Tuple[ZDCondition, int]) -> EpisodeRecord:
        condition, episode_index = job
        opponent = zd_params(condition, zd_table)
        return run_episode(
            build_agent(spec, **options),
            MemoryOneAgent(opponent),
            horizon=config.horizon,
            seed=derive_seed(config.seed, condition_order.index(condition), episode_index),
            condition_tag=condition.value,
            episode_index=episode_index,
            matrix=matrix,
            context_a={"protocol": PROTOCOL_DYADIC, "matrix": matrix},
            metadata={
                "protocol": PROTOCOL_DYADIC,
                "agent": spec.label,
                "opponent": f"ZD:{condition.value}",
                "framing": spec.framing.value,
            },
        )

    logger.info(
        f"Direct reciprocity: {spec.label} vs {len(config.conditions)} ZD condition(s), "
        f"{config.episodes} episode(s) x {config.horizon} round(s)"
    )
    records = []
    for record in _map_ordered(play, jobs, workers, "Direct reciprocity episodes", progress):
        if not record.valid:
            logger.warning(f"Excluding episode {record.episode_index} ({record.condition_tag}): {record.error}")
        if on_episode is not None:
            on_episode(record)
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# Indirect reciprocity
# ---------------------------------------------------------------------------

class Visibility(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"


class ReputationLevel(str, Enum):
    LOW = "low"
    MID = "mid"
    HIGH = "high"

    @classmethod
    def of(cls, score: int) -> "ReputationLevel":
        """Bin a score: [-5,-3] Low, [-2,+2] Mid, [+3,+5] High."""
        if not -5 <= score <= 5:
            raise ValueError(f"Reputation score out of range: {score}")
        if score <= -3:
            return cls.LOW
        if score >= 3:
            return cls.HIGH
        return cls.MID


def signed_sum(history: Sequence[Action]) -> int:
    return sum(1 if a is Action.C else -1 for a in history)


@dataclass(frozen=True)
class ReputationTrial:
    """
    One single-round decision against a stranger.

    Test trials show the stranger's image score and the recent-history window
    it was computed from. Control trials show neither and are Private.
    """

    trial_id: int
    is_control: bool
    visibility: Visibility
    score: Optional[int] = None
    history: Tuple[Action, ...] = ()

    def __post_init__(self):
        if self.is_control:
            if self.score is not None or self.history:
                raise ValueError(f"Control trial {self.trial_id} must not carry a score or history")
            if self.visibility is not Visibility.PRIVATE:
                raise ValueError(f"Control trial {self.trial_id} must be Private")
            return
        if self.score is None:
            raise ValueError(f"Test trial {self.trial_id} needs a score")
        ReputationLevel.of(self.score)
        if signed_sum(self.history) != self.score:
            raise ValueError(f"Trial {self.trial_id}: history signed sum {signed_sum(self.history)} != score {self.score}")

    @property
    def level(self) -> Optional[ReputationLevel]:
        return None if self.is_control else ReputationLevel.of(self.score)

    @property
    def is_public(self) -> bool:
        return self.visibility is Visibility.PUBLIC

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trial_id": self.trial_id,
            "is_control": self.is_control,
            "score": self.score,
            "history": [a.value for a in self.history],
            "visibility": self.visibility.value,
            "level": self.level.value if self.level else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReputationTrial":
        return cls(
            trial_id=int(data["trial_id"]),
            is_control=bool(data["is_control"]),
            visibility=Visibility(data["visibility"]),
            score=data.get("score"),
            history=tuple(Action.parse(a) for a in data.get("history") or ()),
        )


@dataclass(frozen=True)
class TrialSet:
    trials: Tuple[ReputationTrial, ...]
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self) -> Iterator[ReputationTrial]:
        return iter(self.trials)

    @property
    def control_trials(self) -> List[ReputationTrial]:
        return [t for t in self.trials if t.is_control]

    @property
    def test_trials(self) -> List[ReputationTrial]:
        return [t for t in self.trials if not t.is_control]


def short_level(seed: int) -> int:
    """Score level that receives one test trial fewer, drawn from the trial-set seed."""
    rng = np.random.default_rng([int(seed), 0])
    return SCORE_LEVELS[int(rng.integers(len(SCORE_LEVELS)))]


def level_allocation(seed: int) -> Dict[int, int]:
    """Test trials per score level: 91 everywhere except short_level(seed), which gets 90."""
    short = short_level(seed)
    return {s: 90 if s == short else 91 for s in SCORE_LEVELS}


def history_window(score: int) -> int:
    """Window length whose parity matches the score: 5 for odd |s|, 6 for even."""
    return 5 if abs(score) % 2 == 1 else 6


def reputation_history(score: int, seed: int, trial_id: int) -> Tuple[Action, ...]:
    """
    Regenerate a trial's recent-history window from (seed, trial id).

    The window has (K + s) / 2 cooperations in a seeded order.
    """
    k = history_window(score)
    cooperations = (k + score) // 2
    window = np.array([Action.C.value] * cooperations + [Action.D.value] * (k - cooperations))
    rng = np.random.default_rng([int(seed), int(trial_id)])
    return tuple(Action(a) for a in rng.permutation(window))


def generate_reputation_trials(seed: int) -> TrialSet:
    """
    Build the fixed 1010-trial set: 10 Private controls and 1000 test trials
    over the eleven score levels.

    The seed picks the level that gets 90 test trials instead of 91 and
    drives the order and the history windows. Within a level the Public
    condition takes the extra trial when the count is odd.

    Args:
        seed (int): Non-negative trial-set seed.

    Returns:
        TrialSet: Shuffled trials with ids 1..1010 in presentation order.
    """
    if seed < 0:
        raise ValueError(f"Trial seed must be non-negative, got {seed}")

    cells: List[Tuple[Optional[int], Visibility]] = []
    for score, count in level_allocation(seed).items():
        public = math.ceil(count / 2)
        cells.extend([(score, Visibility.PUBLIC)] * public)
        cells.extend([(score, Visibility.PRIVATE)] * (count - public))
    cells.extend([(None, Visibility.PRIVATE)] * CONTROL_COUNT)

    order = np.random.default_rng(int(seed)).permutation(len(cells))
    trials = []
    for position, index in enumerate(order, start=1):
        score, visibility = cells[index]
        if score is None:
            trials.append(ReputationTrial(trial_id=position, is_control=True, visibility=visibility))
        else:
            trials.append(ReputationTrial(
                trial_id=position,
                is_control=False,
                visibility=visibility,
                score=score,
                history=reputation_history(score, seed, position),
            ))
    return TrialSet(trials=tuple(trials), seed=int(seed))


def load_trial_set(path: str, seed: Optional[int] = None) -> TrialSet:
    """
    Read a trial set written as JSONL (one trial per line).

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If a line is not a valid trial.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Trial file not found: {path}")
    trials = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                trials.append(ReputationTrial.from_dict(json.loads(line)))
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise ValueError(f"{path}:{line_no}: invalid trial: {e}")
    return TrialSet(trials=tuple(trials), seed=seed)


@dataclass(frozen=True)
class TrialOutcome:
    trial: ReputationTrial
    choice: Optional[Action]
    decision: Optional[DecisionOutput] = None
    valid: bool = True
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = self.trial.to_dict()
        data["choice"] = self.choice.value if self.choice else None
        data["valid"] = self.valid
        if self.error is not None:
            data["error"] = self.error
        if self.decision is not None and (self.decision.reasoning or self.decision.think_trace or self.decision.request_id):
            data["decision"] = self.decision.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrialOutcome":
        choice = Action.parse(data["choice"]) if data.get("choice") else None
        decision = None
        if data.get("decision"):
            decision = DecisionOutput.from_dict(data["decision"])
        elif choice is not None:
            decision = DecisionOutput(choice=choice)
        return cls(
            trial=ReputationTrial.from_dict(data),
            choice=choice,
            decision=decision,
            valid=bool(data.get("valid", True)),
            error=data.get("error"),
        )


def run_reputation(
    agent: AgentSpec,
    trials: TrialSet,
    agent_options: Optional[Dict[str, Any]] = None,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
    workers: int = 1,
    on_outcome: Optional[Callable[[TrialOutcome], None]] = None,
    progress: bool = True,
) -> List[TrialOutcome]:
    """
    Present every trial as an independent single-round decision.

    Args:
        agent (AgentSpec): The agent under test; a fresh instance per trial.
        trials (TrialSet): Trials in presentation order.
        agent_options (dict, optional): Passed to build_agent.
        matrix (PayoffMatrix): Payoff values shown in the prompt.
        workers (int): Trials decided concurrently.
        on_outcome (callable, optional): Called with each outcome, in order.
        progress (bool): Show a progress bar.

    Returns:
        List[TrialOutcome]: One outcome per trial; failures are invalid.
    """
    options = dict(agent_options or {})
    base_seed = trials.seed or 0

    def decide(trial: ReputationTrial) -> TrialOutcome:
        instance = build_agent(agent, **options)
        instance.start_episode(np.random.default_rng(derive_seed(base_seed, trial.trial_id)))
        view = RoundView(1, 1, (), (), {"protocol": PROTOCOL_REPUTATION, "trial": trial, "matrix": matrix})
        try:
            decision = instance.decide(view)
        except (AgentDecisionFailure, GatewayError) as e:
            reason = e.reason if isinstance(e, AgentDecisionFailure) and e.reason else f"{type(e).__name__}: {e}"
            logger.warning(f"Excluding trial {trial.trial_id}: {reason}")
            return TrialOutcome(trial=trial, choice=None, valid=False, error=reason)
        return TrialOutcome(trial=trial, choice=decision.choice, decision=decision)

    logger.info(f"Reputation: {agent.label} on {len(trials)} trial(s)")
    outcomes = []
    for outcome in _map_ordered(decide, list(trials), workers, "Reputation trials", progress):
        if on_outcome is not None:
            on_outcome(outcome)
        outcomes.append(outcome)
    return outcomes


# ---------------------------------------------------------------------------
# Society
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SocietyConfig:
    n_agents: int = 5
    horizon: int = 10
    episodes: int = 10
    rc_fraction: float = 0.4
    framing: Framing = Framing.BASELINE
    seed: int = 0
    history_format: str = "full"
    shuffle_history: bool = True

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError(f"A society needs at least 2 agents, got {self.n_agents}")
        if self.horizon < 1 or self.episodes < 1:
            raise ValueError("Horizon and episode count must be at least 1")
        if not 0.0 <= self.rc_fraction <= 1.0:
            raise ValueError(f"rc_fraction must lie in [0, 1], got {self.rc_fraction}")
        if self.history_format not in HISTORY_FORMATS:
            raise ValueError(f"history_format must be one of {HISTORY_FORMATS}, got {self.history_format!r}")

    @property
    def rc_count(self) -> int:
        """round(alpha * N), halves rounded up."""
        return int(math.floor(self.rc_fraction * self.n_agents + 0.5))

    @classmethod
    def from_config(cls, section: Mapping[str, Any], seed: int = 0) -> "SocietyConfig":
        return cls(
            n_agents=int(section.get("n_agents", 5)),
            horizon=int(section.get("horizon", 10)),
            episodes=int(section.get("episodes", 10)),
            rc_fraction=float(section.get("rc_fraction", 0.4)),
            framing=Framing(section.get("framing", Framing.BASELINE.value)),
            seed=int(seed),
            history_format=section.get("history_format", "full"),
            shuffle_history=bool(section.get("shuffle_history", True)),
        )


def assign_personas(config: SocietyConfig) -> Dict[int, Persona]:
    """Seeded choice of which agents receive the RC persona."""
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    rc_ids = set(int(i) for i in rng.choice(config.n_agents, size=config.rc_count, replace=False))
    return {
        i: Persona.RESILIENT_COOPERATOR if i in rc_ids else Persona.RATIONAL_PLAYER
        for i in range(config.n_agents)
    }


@dataclass
class SocietyLog:
    """
    Everything a society run produced.

    `episodes[g - 1]` holds the C(N,2) dyad records of episode g; record
    metadata carries the agent ids and personas of sides a and b.
    """

    config: SocietyConfig
    personas: Dict[int, Persona]
    members: Dict[int, str]
    episodes: List[List[EpisodeRecord]] = field(default_factory=list)
    snapshots: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def records(self) -> List[EpisodeRecord]:
        return [r for episode in self.episodes for r in episode]

    def persona_summary(self) -> Dict[str, str]:
        return {str(i): p.value for i, p in sorted(self.personas.items())}

    @classmethod
    def from_records(
        cls,
        records: Sequence[EpisodeRecord],
        config: Optional[SocietyConfig] = None,
    ) -> "SocietyLog":
        """Rebuild a log (without snapshots) from persisted dyad records."""
        personas: Dict[int, Persona] = {}
        members: Dict[int, str] = {}
        by_episode: Dict[int, List[EpisodeRecord]] = {}
        for record in records:
            meta = record.metadata
            for side in (SIDE_A, SIDE_B):
                agent_id = int(meta[f"agent_{side}"])
                personas[agent_id] = Persona(meta[f"persona_{side}"])
                members[agent_id] = meta.get(f"member_{side}", "")
            by_episode.setdefault(record.episode_index, []).append(record)
        if config is None:
            first = records[0] if records else None
            config = SocietyConfig(
                n_agents=max(2, len(personas)),
                horizon=first.horizon if first else 10,
                episodes=max(1, len(by_episode)),
                rc_fraction=float(first.metadata.get("rc_fraction", 0.0)) if first else 0.0,
            )
        return cls(
            config=config,
            personas=personas,
            members=members,
            episodes=[by_episode[g] for g in sorted(by_episode)],
        )


def _prior_view(agent_id: int, episode_index: int, dyads: Sequence[EpisodeRecord]) -> PriorEpisode:
    """Anonymised histories of one agent's completed matches in an episode."""
    histories = []
    for record in dyads:
        if not record.valid:
            continue
        if record.metadata["agent_a"] == agent_id:
            histories.append(tuple((r.action_a, r.action_b) for r in record.rounds))
        elif record.metadata["agent_b"] == agent_id:
            histories.append(tuple((r.action_b, r.action_a) for r in record.rounds))
    return PriorEpisode(episode_index=episode_index, histories=tuple(histories))


def run_society(
    model: AgentSpec,
    config: SocietyConfig,
    members: Optional[Sequence[AgentSpec]] = None,
    agent_options: Optional[Dict[str, Any]] = None,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
    workers: int = 1,
    on_episode: Optional[Callable[[List[EpisodeRecord]], None]] = None,
    progress: bool = True,
) -> SocietyLog:
    """
    Run repeated all-pairs episodes of a population of one subject model.

    Agent k plays each other agent once per episode, H rounds per match.
    From episode 2 on, prompts carry the agent's own anonymised matches from
    earlier episodes. Dyads of one episode run concurrently; episodes run in
    sequence.

    Args:
        model (AgentSpec): Template agent; persona is assigned per agent.
        config (SocietyConfig): Population size, horizon, episodes, RC fraction.
        members (Sequence[AgentSpec], optional): Explicit per-agent specs
            (scripted mixes); personas are still assigned by seed.
        agent_options (dict, optional): Passed to build_agent.
        matrix (PayoffMatrix): Payoff values.
        workers (int): Dyads played concurrently.
        on_episode (callable, optional): Called with each episode's records.
        progress (bool): Show a progress bar.

    Returns:
        SocietyLog: Dyad records, persona map and context snapshots.
    """
    if members is not None and len(members) != config.n_agents:
        raise ValueError(f"Expected {config.n_agents} members, got {len(members)}")

    options = dict(agent_options or {})
    personas = assign_personas(config)
    specs = {}
    for i in range(config.n_agents):
        base = members[i] if members is not None else model
        specs[i] = base.with_persona(personas[i]).with_framing(config.framing)

    log = SocietyLog(config=config, personas=personas, members={i: s.label for i, s in specs.items()})
    priors: Dict[int, List[PriorEpisode]] = {i: [] for i in range(config.n_agents)}
    pairs = list(combinations(range(config.n_agents), 2))

    logger.info(
        f"Society: N={config.n_agents}, {config.rc_count} RC, "
        f"{config.episodes} episode(s) x {len(pairs)} dyad(s) x {config.horizon} round(s)"
    )

    for g in tqdm(range(1, config.episodes + 1), desc="Society episodes", disable=not progress):
        contexts = {}
        for i in range(config.n_agents):
            shuffle_seed = derive_seed(config.seed, g, i) if config.shuffle_history else None
            contexts[i] = {
                "protocol": PROTOCOL_SOCIETY,
                "prior_episodes": tuple(priors[i]),
                "history_format": config.history_format,
                "shuffle_seed": shuffle_seed,
                "matrix": matrix,
            }
            log.snapshots.append({
                "episode_index": g,
                "agent": i,
                "persona": personas[i].value,
                "history_format": config.history_format,
                "shuffle_seed": shuffle_seed,
                "prior_episodes": [p.to_dict() for p in priors[i]],
            })

        def play(pair: Tuple[int, int]) -> EpisodeRecord:
            i, j = pair
            return run_episode(
                build_agent(specs[i], **options),
                build_agent(specs[j], **options),
                horizon=config.horizon,
                seed=derive_seed(config.seed, g, i, j),
                condition_tag=PROTOCOL_SOCIETY,
                episode_index=g,
                matrix=matrix,
                context_a=contexts[i],
                context_b=contexts[j],
                metadata={
                    "protocol": PROTOCOL_SOCIETY,
                    "agent_a": i,
                    "agent_b": j,
                    "persona_a": personas[i].value,
                    "persona_b": personas[j].value,
                    "member_a": specs[i].label,
                    "member_b": specs[j].label,
                    "rc_fraction": config.rc_fraction,
                    "framing": config.framing.value,
                },
            )

        dyads = list(_map_ordered(play, pairs, workers, f"Episode {g} dyads", progress=False))
        for record in dyads:
            if not record.valid:
                logger.warning(
                    f"Excluding dyad {record.metadata['agent_a']}-{record.metadata['agent_b']} "
                    f"in episode {g}: {record.error}"
                )
        log.episodes.append(dyads)
        if on_episode is not None:
            on_episode(dyads)
        for i in range(config.n_agents):
            priors[i].append(_prior_view(i, g, dyads))

    return log
