"""
Unit tests for the decision parser.
"""

import unittest

from dilemma_bench.decisions import DecisionOutput, ModelClass, parse_decision, render_decision
from dilemma_bench.exceptions import DecisionParseError, FormatViolation, MalformedOutput
from dilemma_bench.game import Action


class TestInstructionTunedParser(unittest.TestCase):
    """Test cases for the JSON-only output format."""

    def test_plain_json(self):
        decision = parse_decision('{"reasoning": "They cooperated.", "choice": "C"}', ModelClass.INSTRUCTION_TUNED)
        self.assertIs(decision.choice, Action.C)
        self.assertEqual(decision.reasoning, "They cooperated.")
        self.assertIsNone(decision.think_trace)

    def test_preamble_and_trailing_whitespace(self):
        raw = 'Sure.\n{"reasoning": "Punish {defection}.", "choice": "D"}\n\n'
        decision = parse_decision(raw, ModelClass.INSTRUCTION_TUNED)
        self.assertIs(decision.choice, Action.D)
        self.assertEqual(decision.reasoning, "Punish {defection}.")
        self.assertEqual(decision.raw, raw)

    def test_last_object_wins(self):
        raw = '{"reasoning": "draft", "choice": "C"} then {"reasoning": "final", "choice": "D"}'
        self.assertIs(parse_decision(raw, ModelClass.INSTRUCTION_TUNED).choice, Action.D)

    def test_brace_heavy_preamble(self):
        nested = 'Draft: {"k": [' * 3000
        raw = nested + "\n" + "{x} " * 5000 + '{"reasoning": "Keep {trust}.", "choice": "C"}'
        decision = parse_decision(raw, ModelClass.INSTRUCTION_TUNED)
        self.assertIs(decision.choice, Action.C)
        self.assertEqual(decision.reasoning, "Keep {trust}.")

    def test_nested_terminal_object(self):
        raw = 'ok {"reasoning": "r", "choice": "D", "notes": {"round": {"t": 3}}}'
        self.assertIs(parse_decision(raw, ModelClass.INSTRUCTION_TUNED).choice, Action.D)

    def test_brace_heavy_garbage_is_rejected(self):
        with self.assertRaises(MalformedOutput):
            parse_decision("{" * 50000 + "}", ModelClass.INSTRUCTION_TUNED)

    def test_rejects_bad_outputs(self):
        for raw in (
            "I choose C",
            '{"reasoning": "x", "choice": "C"} done',
            '{"reasoning": "x", "choice": "c"}',
            '{"reasoning": "x", "choice": "Cooperate"}',
            '{"choice": "C"}',
            '{"reasoning": "x", "choice": "C"',
        ):
            with self.assertRaises(MalformedOutput, msg=raw):
                parse_decision(raw, ModelClass.INSTRUCTION_TUNED)

    def test_parse_errors_are_value_errors(self):
        with self.assertRaises(ValueError):
            parse_decision("", ModelClass.INSTRUCTION_TUNED)


class TestReasoningParser(unittest.TestCase):
    """Test cases for the think-block output format."""

    def test_valid_output(self):
        raw = 'THINKING:\n<think>\nThey defected twice.\nDefect.\n</think>\n{"reasoning": "Retaliate.", "choice": "D"}'
        decision = parse_decision(raw, ModelClass.REASONING)
        self.assertIs(decision.choice, Action.D)
        self.assertEqual(decision.think_trace, "They defected twice.\nDefect.")

    def test_think_violations(self):
        body = '{"reasoning": "x", "choice": "C"}'
        for raw in (
            body,
            "<think>\n</think>\n" + body,
            "<think>a</think><think>b</think>" + body,
            "<think>unterminated " + body,
            "</think>reversed<think>" + body,
            '<think>{"reasoning": "x", "choice": "C"}',
        ):
            with self.assertRaises(DecisionParseError, msg=raw):
                parse_decision(raw, ModelClass.REASONING)

    def test_missing_think_is_format_violation(self):
        with self.assertRaises(FormatViolation):
            parse_decision('{"reasoning": "x", "choice": "C"}', ModelClass.REASONING)

    def test_json_inside_think_block_is_rejected(self):
        raw = '<think>plan</think>\n{"reasoning": "a", "choice": "C"}<think>more</think>'
        with self.assertRaises(DecisionParseError):
            parse_decision(raw, ModelClass.REASONING)


class TestRenderDecision(unittest.TestCase):
    """parse_decision inverts render_decision."""

    def test_round_trip_both_classes(self):
        samples = [
            DecisionOutput(choice=Action.C, reasoning='Quote " and brace } inside.'),
            DecisionOutput(choice=Action.D, reasoning="", think_trace="Line one\nLine two"),
        ]
        for decision in samples:
            for model_class in ModelClass:
                if model_class is ModelClass.REASONING and not decision.think_trace:
                    continue
                parsed = parse_decision(render_decision(decision, model_class), model_class)
                self.assertIs(parsed.choice, decision.choice)
                self.assertEqual(parsed.reasoning, decision.reasoning)
                if model_class is ModelClass.REASONING:
                    self.assertEqual(parsed.think_trace, decision.think_trace)


if __name__ == "__main__":
    unittest.main()
