"""
Decision outputs and the deterministic parser that turns model text into a
move.

Instruction-tuned models must end their output with a single JSON object.
Reasoning models must additionally write exactly one non-empty
<think>...</think> block before that object.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from dilemma_bench.exceptions import FormatViolation, MalformedOutput
from dilemma_bench.game import Action

# Configure logging
logger = logging.getLogger(__name__)

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
MAX_JSON_CANDIDATES = 256


class ModelClass(str, Enum):
    """Selects the output-format contract and the parser."""

    INSTRUCTION_TUNED = "instruction_tuned"
    REASONING = "reasoning"


@dataclass(frozen=True)
class DecisionOutput:
    """A parsed decision; scripted agents leave the text fields empty."""

    choice: Action
    reasoning: str = ""
    think_trace: Optional[str] = None
    raw: str = ""
    request_id: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {"choice": self.choice.value, "reasoning": self.reasoning}
        if self.think_trace is not None:
            data["think_trace"] = self.think_trace
        if self.raw:
            data["raw"] = self.raw
        if self.request_id:
            data["request_id"] = self.request_id
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DecisionOutput":
        return cls(
            choice=Action.parse(data["choice"]),
            reasoning=data.get("reasoning", ""),
            think_trace=data.get("think_trace"),
            raw=data.get("raw", ""),
            request_id=data.get("request_id"),
        )


def _terminal_json(text: str) -> Tuple[int, Dict[str, Any]]:
    """
    Find the JSON object that ends the text.

    Returns:
        Tuple[int, dict]: Start offset of the object and the decoded object.

    Raises:
        MalformedOutput: If the text does not end with a JSON object.
    """
    body = text.rstrip()
    if not body.endswith("}"):
        raise MalformedOutput("Output does not end with a JSON object")

    # Last "{" first, at most MAX_JSON_CANDIDATES attempts
    decoder = json.JSONDecoder()
    start = body.rfind("{")
    tried = 0
    while start != -1 and tried < MAX_JSON_CANDIDATES:
        tried += 1
        try:
            obj, end = decoder.raw_decode(body, start)
        except (json.JSONDecodeError, RecursionError):
            obj, end = None, -1
        if end == len(body) and isinstance(obj, dict):
            return start, obj
        start = body.rfind("{", 0, start)
    raise MalformedOutput("No valid JSON object terminates the output")


def _decision_fields(obj: Dict[str, Any]) -> Tuple[Action, str]:
    choice = obj.get("choice")
    if choice not in ("C", "D"):
        raise MalformedOutput(f"Invalid choice token: {choice!r}")
    reasoning = obj.get("reasoning")
    if not isinstance(reasoning, str):
        raise MalformedOutput("Missing or non-string reasoning field")
    return Action(choice), reasoning


def parse_decision(raw: str, model_class: ModelClass) -> DecisionOutput:
    """
    Parse a complete model response.

    Args:
        raw (str): The model output, verbatim.
        model_class (ModelClass): Output contract to enforce.

    Returns:
        DecisionOutput: The decision.

    Raises:
        MalformedOutput: No terminal JSON object or a bad choice token.
        FormatViolation: Missing, empty, misplaced or repeated think blocks
            (reasoning models only).
    """
    model_class = ModelClass(model_class)
    start, obj = _terminal_json(raw)
    choice, reasoning = _decision_fields(obj)

    think_trace = None
    if model_class is ModelClass.REASONING:
        opens = raw.count(THINK_OPEN)
        closes = raw.count(THINK_CLOSE)
        if opens != 1 or closes != 1:
            raise FormatViolation(f"Expected exactly one think block, found {opens} open and {closes} close tags")
        open_at = raw.index(THINK_OPEN)
        close_at = raw.index(THINK_CLOSE)
        if close_at < open_at:
            raise FormatViolation("Think block closes before it opens")
        if close_at + len(THINK_CLOSE) > start:
            raise FormatViolation("Final JSON object must follow the think block")
        think_trace = raw[open_at + len(THINK_OPEN):close_at].strip()
        if not think_trace:
            raise FormatViolation("Think block is empty")

    return DecisionOutput(choice=choice, reasoning=reasoning, think_trace=think_trace, raw=raw)


def render_decision(decision: DecisionOutput, model_class: ModelClass) -> str:
    """
    Serialise a decision in the output format of a model class.

    parse_decision(render_decision(d, m), m) reproduces d's choice,
    reasoning and think trace.
    """
    body = json.dumps({"reasoning": decision.reasoning, "choice": decision.choice.value})
    if ModelClass(model_class) is ModelClass.REASONING:
        think = decision.think_trace or ""
        return f"THINKING:\n{THINK_OPEN}\n{think}\n{THINK_CLOSE}\n{body}"
    return body
