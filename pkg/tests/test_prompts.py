"""
Golden-file and structural tests for prompt construction.
"""

import os
import unittest

from dilemma_bench.decisions import ModelClass
from dilemma_bench.experiments import ReputationTrial, Visibility
from dilemma_bench.game import Action
from dilemma_bench.prompts import (
    Framing,
    Persona,
    PLACEMENT_SYSTEM,
    PriorEpisode,
    build_dyadic_prompt,
    build_reputation_prompt,
    build_society_prompt,
    render_episode_counts,
    render_episode_history,
    render_template,
    shuffle_episode_blocks,
)

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")

C, D = Action.C, Action.D

PRIOR_EPISODES = [
    PriorEpisode(1, (((C, C), (D, C)), ((C, D), (D, D)))),
    PriorEpisode(2, (((C, C), (C, C)), ((D, C), (C, C)))),
]


def _golden(name):
    with open(os.path.join(GOLDEN_DIR, name), "r", encoding="utf-8") as f:
        return f.read()


class TestGoldenPrompts(unittest.TestCase):
    """Rendered prompts must match the golden files byte for byte."""

    def test_system_text(self):
        bundle = build_dyadic_prompt(30, [], [])
        self.assertEqual(bundle.system_text, _golden("system.txt"))

    def test_dyadic_baseline(self):
        bundle = build_dyadic_prompt(30, [C, D], [C, C])
        self.assertEqual(bundle.user_text, _golden("dyadic_rp_baseline_instruction_tuned.txt"))

    def test_dyadic_persona_and_long_horizon(self):
        bundle = build_dyadic_prompt(
            30, [], [],
            persona=Persona.RESILIENT_COOPERATOR,
            framing=Framing.LONG_HORIZON,
            model_class=ModelClass.REASONING,
        )
        self.assertEqual(bundle.user_text, _golden("dyadic_rc_long_horizon_reasoning.txt"))

    def test_reputation_public(self):
        trial = ReputationTrial(
            trial_id=1,
            is_control=False,
            visibility=Visibility.PUBLIC,
            score=3,
            history=(C, C, C, C, D),
        )
        bundle = build_reputation_prompt(trial, ModelClass.INSTRUCTION_TUNED)
        self.assertEqual(bundle.user_text, _golden("reputation_public_instruction_tuned.txt"))
        self.assertEqual(bundle.system_text, _golden("system.txt"))

    def test_reputation_control(self):
        trial = ReputationTrial(trial_id=7, is_control=True, visibility=Visibility.PRIVATE)
        bundle = build_reputation_prompt(trial, ModelClass.REASONING)
        self.assertEqual(bundle.user_text, _golden("reputation_control_reasoning.txt"))
        self.assertNotIn("Opponent Public Score", bundle.user_text)

    def test_society_full_history(self):
        bundle = build_society_prompt([(C, C), (C, D)], PRIOR_EPISODES, horizon=10)
        self.assertEqual(bundle.user_text, _golden("society_full_instruction_tuned.txt"))

    def test_society_counts(self):
        bundle = build_society_prompt([(C, C), (C, D)], PRIOR_EPISODES, horizon=10, history_format="counts")
        self.assertEqual(bundle.user_text, _golden("society_counts_instruction_tuned.txt"))


class TestPromptStructure(unittest.TestCase):
    """Test cases for prompt composition rules."""

    def test_messages(self):
        messages = build_dyadic_prompt(5, [C], [D]).messages()
        self.assertEqual([m["role"] for m in messages], ["system", "user"])

    def test_persona_rp_adds_nothing(self):
        rp = build_dyadic_prompt(5, [C], [D])
        rc = build_dyadic_prompt(5, [C], [D], persona=Persona.RESILIENT_COOPERATOR)
        self.assertTrue(rc.user_text.endswith(rp.user_text))
        self.assertTrue(rc.user_text.startswith(render_template("persona_rc.j2")))

    def test_long_horizon_in_system_message(self):
        reminder = render_template("long_horizon.j2")
        bundle = build_dyadic_prompt(5, [], [], framing=Framing.LONG_HORIZON, long_horizon_placement=PLACEMENT_SYSTEM)
        self.assertTrue(bundle.system_text.startswith(reminder))
        self.assertNotIn(reminder, bundle.user_text)

    def test_history_preconditions(self):
        with self.assertRaises(ValueError):
            build_dyadic_prompt(5, [C, C], [C])
        with self.assertRaises(ValueError):
            build_dyadic_prompt(2, [C, C], [C, C])

    def test_payoffs_come_from_matrix(self):
        bundle = build_dyadic_prompt(3, [], [])
        self.assertIn("you both score 3 points", bundle.user_text)
        self.assertIn("This game will last exactly 3 rounds.", bundle.user_text)

    def test_first_society_episode_has_no_block(self):
        bundle = build_society_prompt([], [], horizon=10)
        self.assertNotIn("Previous Episode", bundle.user_text)


class TestSocietyBlocks(unittest.TestCase):
    """Test cases for cross-episode history blocks."""

    def test_render_history(self):
        self.assertEqual(
            render_episode_history(PRIOR_EPISODES[0]),
            "(Episode 1): [[(C,C),(D,C)], [(C,D),(D,D)]]",
        )

    def test_render_counts(self):
        self.assertEqual(
            render_episode_counts(PRIOR_EPISODES[1]),
            "(Episode 2): your actions C=3, D=1; co-players' actions C=4, D=0",
        )

    def test_shuffle_is_seeded_and_preserves_lists(self):
        prior = [PriorEpisode(1, tuple(((C, D),) * k for k in range(1, 5)))]
        first = shuffle_episode_blocks(prior, seed=9)
        second = shuffle_episode_blocks(prior, seed=9)
        self.assertEqual(first, second)
        self.assertEqual(sorted(first[0].histories), sorted(prior[0].histories))

    def test_prompt_lists_one_inner_list_per_co_player(self):
        four = tuple(((C, C),) * 10 for _ in range(4))
        bundle = build_society_prompt([], [PriorEpisode(1, four)], horizon=10, shuffle_seed=3)
        line = next(l for l in bundle.user_text.splitlines() if l.startswith("(Episode 1):"))
        self.assertEqual(line.count("[(C,C)"), 4)
        self.assertNotIn("agent_", bundle.user_text)

    def test_prior_episode_round_trip(self):
        data = PRIOR_EPISODES[0].to_dict()
        self.assertEqual(data["histories"][0], ["CC", "DC"])
        self.assertEqual(PriorEpisode.from_dict(data), PRIOR_EPISODES[0])


if __name__ == "__main__":
    unittest.main()
