"""
Exceptions raised by Dilemma Bench.
"""

from typing import Optional


class DilemmaBenchError(Exception):
    """Base class for all errors raised by the package."""


class InvalidPayoffMatrix(DilemmaBenchError, ValueError):
    """Payoff values violate the dilemma ordering."""


class AgentDecisionFailure(DilemmaBenchError):
    """
    A decision source could not produce a valid action.

    Args:
        side (str): Which side failed ("a" or "b").
        round_index (int): 1-based round of the failure.
        reason (str, optional): Human-readable cause.
    """

    def __init__(self, side: str, round_index: int, reason: Optional[str] = None):
        self.side = side
        self.round_index = round_index
        self.reason = reason
        message = f"Agent on side {side} failed to decide in round {round_index}"
        if reason:
            message = f"{message}: {reason}"
        super().__init__(message)


class NonConvergence(DilemmaBenchError):
    """The long-run averaging iteration did not stabilise."""


class DecisionParseError(DilemmaBenchError, ValueError):
    """Model output could not be turned into a decision."""


class MalformedOutput(DecisionParseError):
    """No terminal JSON object, or an invalid choice token."""


class FormatViolation(DecisionParseError):
    """Think-block rules of the reasoning output format were broken."""


class GatewayError(DilemmaBenchError):
    """Base class for remote endpoint failures."""


class TransportError(GatewayError):
    """Connection failure or timeout."""


class RateLimited(GatewayError):
    """The endpoint kept answering HTTP 429."""


class ServerError(GatewayError):
    """The endpoint answered with an error status or an unusable body."""


class CredentialMissing(GatewayError):
    """The credential environment variable is not set."""


class MetricError(DilemmaBenchError, ValueError):
    """Base class for metric precondition failures."""


class EmptySlice(MetricError):
    """A rate was requested over an empty action set."""


class MissingRegime(MetricError):
    """One of the generosity/extortion regimes has no valid actions."""


class UndefinedDrop(MetricError):
    """CC or CD has zero support, so the cooperation drop is undefined."""


class MissingLevel(MetricError):
    """No valid High-level or Low-level reputation outcome."""


class MissingCondition(MetricError):
    """Public or Private test trials are missing."""


class EmptyGroup(MetricError):
    """A bootstrap group has no samples."""


class ConfigInvalid(DilemmaBenchError, ValueError):
    """
    The experiment configuration failed validation.

    Args:
        problems (list): Human-readable validation messages.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("Invalid configuration: " + "; ".join(self.problems))


class MissingData(DilemmaBenchError):
    """An output directory lacks the data a report needs."""
