"""
Prompt construction for the three protocols.

Texts live in Jinja2 templates under dilemma_bench/templates. Sections are
rendered separately and joined with blank lines, so the only variable parts
of a prompt are the named placeholders.
"""

import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, TYPE_CHECKING

import jinja2
import numpy as np

from dilemma_bench.decisions import ModelClass
from dilemma_bench.game import Action, DEFAULT_MATRIX, PayoffMatrix, render_actions

if TYPE_CHECKING:
    from dilemma_bench.experiments import ReputationTrial

# Configure logging
logger = logging.getLogger(__name__)

# Set up Jinja environment
_template_dir = os.path.join(os.path.dirname(__file__), "templates")
_jinja_env = jinja2.Environment(
    loader=jinja2.FileSystemLoader(_template_dir),
    autoescape=False,
    keep_trailing_newline=False,
    undefined=jinja2.StrictUndefined,
)

SOCIETY_HORIZON = 10
PLACEMENT_USER = "user"
PLACEMENT_SYSTEM = "system"


class Persona(str, Enum):
    RATIONAL_PLAYER = "RP"
    RESILIENT_COOPERATOR = "RC"


class Framing(str, Enum):
    BASELINE = "baseline"
    LONG_HORIZON = "long_horizon"


@dataclass(frozen=True)
class PromptBundle:
    """A two-message conversation: system text and user text."""

    system_text: str
    user_text: str

    def messages(self) -> List[Dict[str, str]]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]


Pair = Tuple[Action, Action]


@dataclass(frozen=True)
class PriorEpisode:
    """
    Anonymised view of one completed society episode for one agent.

    Each inner history is one co-player's match, as (own, co-player) pairs.
    """

    episode_index: int
    histories: Tuple[Tuple[Pair, ...], ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "episode_index": self.episode_index,
            "histories": [[a.value + b.value for a, b in history] for history in self.histories],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PriorEpisode":
        return cls(
            episode_index=int(data["episode_index"]),
            histories=tuple(
                tuple((Action(pair[0]), Action(pair[1])) for pair in history)
                for history in data["histories"]
            ),
        )


def render_template(template_name: str, **context: Any) -> str:
    """
    Render a prompt template.

    Args:
        template_name (str): File name under the templates directory.
        **context: Template variables.

    Returns:
        str: Rendered text without a trailing newline.
    """
    return _jinja_env.get_template(template_name).render(**context)


def output_format_block(model_class: ModelClass) -> str:
    if ModelClass(model_class) is ModelClass.REASONING:
        return render_template("format_reasoning.j2")
    return render_template("format_instruction_tuned.j2")


def _compose(
    body_sections: Sequence[str],
    persona: Persona,
    framing: Framing,
    model_class: ModelClass,
    long_horizon_placement: str,
) -> PromptBundle:
    system_text = render_template("system.j2")
    sections: List[str] = []
    if Framing(framing) is Framing.LONG_HORIZON:
        reminder = render_template("long_horizon.j2")
        if long_horizon_placement == PLACEMENT_SYSTEM:
            system_text = reminder + "\n\n" + system_text
        else:
            sections.append(reminder)
    if Persona(persona) is Persona.RESILIENT_COOPERATOR:
        sections.append(render_template("persona_rc.j2"))
    sections.extend(body_sections)
    sections.append(output_format_block(model_class))
    return PromptBundle(system_text=system_text, user_text="\n\n".join(sections))


def _dyadic_body(horizon: int, own_history: Sequence[Action], opp_history: Sequence[Action], matrix: PayoffMatrix) -> str:
    if len(own_history) != len(opp_history):
        raise ValueError("Histories must have equal length")
    if len(own_history) >= horizon:
        raise ValueError(f"History length {len(own_history)} must be below the horizon {horizon}")
    return render_template(
        "dyadic_user.j2",
        H=horizon,
        R=matrix.reward,
        S=matrix.sucker,
        T=matrix.temptation,
        P=matrix.punishment,
        own_history=render_actions(own_history),
        opp_history=render_actions(opp_history),
    )


def build_dyadic_prompt(
    horizon: int,
    own_history: Sequence[Action],
    opp_history: Sequence[Action],
    persona: Persona = Persona.RATIONAL_PLAYER,
    framing: Framing = Framing.BASELINE,
    model_class: ModelClass = ModelClass.INSTRUCTION_TUNED,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
    long_horizon_placement: str = PLACEMENT_USER,
) -> PromptBundle:
    """
    Prompt for one round of a two-player episode.

    Args:
        horizon (int): Episode length H.
        own_history (Sequence[Action]): The prompted agent's past moves.
        opp_history (Sequence[Action]): The co-player's past moves.
        persona (Persona): RP (base prompt only) or RC (persona text prepended).
        framing (Framing): Baseline or long-horizon reminder.
        model_class (ModelClass): Selects the output-format block.
        matrix (PayoffMatrix): Payoff values shown in the rules.
        long_horizon_placement (str): "user" or "system".

    Returns:
        PromptBundle: System and user texts.
    """
    body = _dyadic_body(horizon, own_history, opp_history, matrix)
    return _compose([body], persona, framing, model_class, long_horizon_placement)


def _signed(value: int) -> str:
    return f"{value:+d}"


def build_reputation_prompt(
    trial: "ReputationTrial",
    model_class: ModelClass = ModelClass.INSTRUCTION_TUNED,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
) -> PromptBundle:
    """
    Prompt for a single-round reputation trial.

    Control trials carry no score or history lines. The notice follows the
    trial's visibility.
    """
    sections = [render_template(
        "reputation_user.j2",
        R=_signed(matrix.reward),
        S=_signed(matrix.sucker),
        T=_signed(matrix.temptation),
        P=_signed(matrix.punishment),
    )]
    if not trial.is_control:
        sections.append(render_template(
            "reputation_cue.j2",
            score=_signed(trial.score),
            history=render_actions(trial.history),
        ))
    if trial.is_public:
        sections.append(render_template("notice_public.j2"))
    else:
        sections.append(render_template("notice_private.j2"))
    sections.append("[Output Format]\n" + output_format_block(model_class))
    return PromptBundle(system_text=render_template("system.j2"), user_text="\n\n".join(sections))


def render_episode_history(prior: PriorEpisode) -> str:
    """Render "(Episode g): [[(X1,Y1),(X2,Y2)], [...]]"."""
    inner = ["[" + ",".join(f"({x.value},{y.value})" for x, y in history) + "]" for history in prior.histories]
    return f"(Episode {prior.episode_index}): [" + ", ".join(inner) + "]"


def render_episode_counts(prior: PriorEpisode) -> str:
    """Render the un-attributed C/D counts of one prior episode."""
    own = [x for history in prior.histories for x, _ in history]
    other = [y for history in prior.histories for _, y in history]
    return (
        f"(Episode {prior.episode_index}): "
        f"your actions C={own.count(Action.C)}, D={own.count(Action.D)}; "
        f"co-players' actions C={other.count(Action.C)}, D={other.count(Action.D)}"
    )


def shuffle_episode_blocks(prior_episodes: Sequence[PriorEpisode], seed: int) -> List[PriorEpisode]:
    """
    Shuffle the co-player histories inside every prior episode.

    The permutation of episode g depends only on (seed, g).
    """
    shuffled = []
    for prior in prior_episodes:
        rng = np.random.default_rng([int(seed), prior.episode_index])
        order = rng.permutation(len(prior.histories))
        shuffled.append(PriorEpisode(prior.episode_index, tuple(prior.histories[i] for i in order)))
    return shuffled


def build_society_prompt(
    dyad_history: Sequence[Pair],
    prior_episodes: Sequence[PriorEpisode],
    persona: Persona = Persona.RATIONAL_PLAYER,
    framing: Framing = Framing.BASELINE,
    model_class: ModelClass = ModelClass.INSTRUCTION_TUNED,
    horizon: int = SOCIETY_HORIZON,
    history_format: str = "full",
    shuffle_seed: Optional[int] = None,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
    long_horizon_placement: str = PLACEMENT_USER,
) -> PromptBundle:
    """
    Prompt for one round of a society match.

    Args:
        dyad_history (Sequence[Pair]): Current match so far as (own, co-player) pairs.
        prior_episodes (Sequence[PriorEpisode]): Completed earlier episodes,
            already anonymised.
        persona (Persona): RP or RC.
        framing (Framing): Baseline or long-horizon reminder.
        model_class (ModelClass): Selects the output-format block.
        horizon (int): Match length.
        history_format (str): "full" per-partner round lists or "counts".
        shuffle_seed (int, optional): If given, inner lists are shuffled per
            episode with this seed before rendering.
        matrix (PayoffMatrix): Payoff values shown in the rules.
        long_horizon_placement (str): "user" or "system".

    Returns:
        PromptBundle: System and user texts.
    """
    own = [x for x, _ in dyad_history]
    other = [y for _, y in dyad_history]
    sections = [_dyadic_body(horizon, own, other, matrix)]

    if prior_episodes:
        priors = list(prior_episodes)
        if shuffle_seed is not None:
            priors = shuffle_episode_blocks(priors, shuffle_seed)
        if history_format == "counts":
            blocks = "\n".join(render_episode_counts(p) for p in priors)
            sections.append(render_template("society_counts.j2", episode_blocks=blocks))
        else:
            blocks = "\n".join(render_episode_history(p) for p in priors)
            sections.append(render_template("society_history.j2", episode_blocks=blocks))

    return _compose(sections, persona, framing, model_class, long_horizon_placement)
