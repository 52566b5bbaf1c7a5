"""
Behavioural estimators over episode records and reputation outcomes.

Invalid episodes and trials are excluded from every metric and counted.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from dilemma_bench.analysis import bootstrap_ci
from dilemma_bench.exceptions import (
    EmptySlice,
    MetricError,
    MissingCondition,
    MissingLevel,
    MissingRegime,
    UndefinedDrop,
)
from dilemma_bench.experiments import ReputationLevel, TrialOutcome, Visibility, SCORE_LEVELS
from dilemma_bench.game import Action, EpisodeRecord, JointState, SIDE_A, SIDE_B, STATE_ORDER, joint_state
from dilemma_bench.strategies import Regime, regime_of

# Configure logging
logger = logging.getLogger(__name__)

GRANULARITIES = ("round", "episode", "condition", "role", "composition")


@dataclass(frozen=True)
class RateCell:
    """A cooperation rate with its support; rate is None when count is 0."""

    rate: Optional[float]
    count: int
    cooperations: int = 0

    @property
    def defined(self) -> bool:
        return self.count > 0

    def to_dict(self) -> Dict[str, Any]:
        return {"rate": self.rate, "count": self.count}


def coop_rate(actions: Iterable[Action]) -> float:
    """
    Fraction of C in an action multiset.

    Raises:
        EmptySlice: If there are no actions.
    """
    actions = list(actions)
    if not actions:
        raise EmptySlice("Cooperation rate of an empty action set")
    return sum(1 for a in actions if a is Action.C) / len(actions)


def rate_cell(actions: Iterable[Action]) -> RateCell:
    actions = list(actions)
    cooperations = sum(1 for a in actions if a is Action.C)
    if not actions:
        return RateCell(rate=None, count=0)
    return RateCell(rate=cooperations / len(actions), count=len(actions), cooperations=cooperations)


def split_valid(records: Iterable[Any]) -> Tuple[List[Any], int]:
    """Valid records and the number excluded."""
    valid, excluded = [], 0
    for record in records:
        if record.valid:
            valid.append(record)
        else:
            excluded += 1
    return valid, excluded


def _is_society(record: EpisodeRecord) -> bool:
    return record.metadata.get("protocol") == "society"


def _directions(record: EpisodeRecord) -> Tuple[str, ...]:
    """Sides whose actions count: both members of a society dyad, the agent otherwise."""
    return (SIDE_A, SIDE_B) if _is_society(record) else (SIDE_A,)


# ---------------------------------------------------------------------------
# Direct reciprocity
# ---------------------------------------------------------------------------

def regime_rates(records: Iterable[EpisodeRecord], side: str = SIDE_A) -> Dict[Regime, RateCell]:
    """Pooled cooperation of `side` per regime over valid episodes."""
    pooled: Dict[Regime, List[Action]] = {Regime.GENEROSITY: [], Regime.EXTORTION: []}
    for record in records:
        regime = regime_of(record.condition_tag)
        if record.valid and regime is not None:
            pooled[regime].extend(record.actions(side))
    return {regime: rate_cell(actions) for regime, actions in pooled.items()}


def regime_discrimination(records: Iterable[EpisodeRecord], side: str = SIDE_A) -> float:
    """
    Pooled cooperation against generous (GM, GS) minus extortionate (ES, EM)
    opponents.

    Raises:
        MissingRegime: If either regime has no valid actions.
    """
    rates = regime_rates(records, side)
    for regime, cell in rates.items():
        if not cell.defined:
            raise MissingRegime(f"No valid actions against {regime.value} opponents")
    return rates[Regime.GENEROSITY].rate - rates[Regime.EXTORTION].rate


def regime_discrimination_episode_mean(records: Iterable[EpisodeRecord], side: str = SIDE_A) -> float:
    """Unweighted mean of per-episode rates per regime, generous minus extortionate."""
    per_episode: Dict[Regime, List[float]] = {Regime.GENEROSITY: [], Regime.EXTORTION: []}
    for record in records:
        regime = regime_of(record.condition_tag)
        if record.valid and regime is not None and record.rounds:
            per_episode[regime].append(coop_rate(record.actions(side)))
    for regime, rates in per_episode.items():
        if not rates:
            raise MissingRegime(f"No valid episodes against {regime.value} opponents")
    return float(np.mean(per_episode[Regime.GENEROSITY]) - np.mean(per_episode[Regime.EXTORTION]))


def conditional_table(records: Iterable[EpisodeRecord], side: str = SIDE_A) -> Dict[JointState, RateCell]:
    """
    Cooperation of `side` at rounds t >= 2 by the previous joint state,
    labelled from that side's perspective. States with no support have
    rate None and count 0.
    """
    by_state: Dict[JointState, List[Action]] = {s: [] for s in STATE_ORDER}
    for record in records:
        if not record.valid:
            continue
        for prev, current in zip(record.rounds, record.rounds[1:]):
            by_state[joint_state(prev, side)].append(current.action(side))
    return OrderedDict((s, rate_cell(by_state[s])) for s in STATE_ORDER)


def cooperation_drop(table: Dict[JointState, RateCell]) -> float:
    """
    p(C | CC) - p(C | CD).

    Raises:
        UndefinedDrop: If CC or CD has no support.
    """
    cc, cd = table[JointState.CC], table[JointState.CD]
    if not cc.defined or not cd.defined:
        missing = [s.value for s, c in ((JointState.CC, cc), (JointState.CD, cd)) if not c.defined]
        raise UndefinedDrop(f"No support for prior state(s) {', '.join(missing)}")
    return cc.rate - cd.rate


def conditional_cooperation(
    records: Iterable[EpisodeRecord],
    side: str = SIDE_A,
) -> Tuple[Dict[JointState, RateCell], float]:
    """
    Conditional cooperation table and the cooperation drop after being
    exploited.

    Raises:
        UndefinedDrop: If CC or CD has no support.
    """
    table = conditional_table(records, side)
    return table, cooperation_drop(table)


# ---------------------------------------------------------------------------
# Indirect reciprocity
# ---------------------------------------------------------------------------

def _test_outcomes(outcomes: Iterable[TrialOutcome]) -> List[TrialOutcome]:
    return [o for o in outcomes if o.valid and not o.trial.is_control]


def reputation_gradient(outcomes: Iterable[TrialOutcome], visibility: Optional[Visibility] = None) -> float:
    """
    Cooperation with High-level strangers minus Low-level strangers.

    Args:
        outcomes (Iterable[TrialOutcome]): Trial outcomes.
        visibility (Visibility, optional): Restrict to one condition; pooled by default.

    Raises:
        MissingLevel: If High or Low has no valid outcome.
    """
    tests = _test_outcomes(outcomes)
    if visibility is not None:
        tests = [o for o in tests if o.trial.visibility is Visibility(visibility)]
    high = [o.choice for o in tests if o.trial.level is ReputationLevel.HIGH]
    low = [o.choice for o in tests if o.trial.level is ReputationLevel.LOW]
    if not high or not low:
        raise MissingLevel("Reputation gradient needs valid High and Low outcomes")
    return coop_rate(high) - coop_rate(low)


def observability_effect(outcomes: Iterable[TrialOutcome]) -> Tuple[float, Optional[float]]:
    """
    Public minus Private cooperation over test trials, with the control
    baseline.

    Returns:
        Tuple[float, Optional[float]]: The effect and the control cooperation
        rate (None if no valid control outcome).

    Raises:
        MissingCondition: If Public or Private test trials are missing.
    """
    outcomes = list(outcomes)
    tests = _test_outcomes(outcomes)
    public = [o.choice for o in tests if o.trial.is_public]
    private = [o.choice for o in tests if not o.trial.is_public]
    if not public or not private:
        raise MissingCondition("Observability effect needs valid Public and Private test trials")
    controls = [o.choice for o in outcomes if o.valid and o.trial.is_control]
    baseline = coop_rate(controls) if controls else None
    return coop_rate(public) - coop_rate(private), baseline


def score_profile(
    outcomes: Iterable[TrialOutcome],
    level: float = 0.95,
    draws: int = 2000,
    seed: int = 0,
) -> List[Dict[str, Any]]:
    """
    Cooperation per score level and visibility with bootstrap intervals.

    Returns:
        List[dict]: Rows with score, visibility, rate, count, ci_low, ci_high.
    """
    tests = _test_outcomes(outcomes)
    rows = []
    for visibility in (Visibility.PUBLIC, Visibility.PRIVATE):
        for score in SCORE_LEVELS:
            choices = [
                1.0 if o.choice is Action.C else 0.0
                for o in tests
                if o.trial.score == score and o.trial.visibility is visibility
            ]
            row: Dict[str, Any] = {"score": score, "visibility": visibility.value, "count": len(choices)}
            if choices:
                low, high = bootstrap_ci(choices, level=level, draws=draws, seed=seed)
                row.update(rate=float(np.mean(choices)), ci_low=low, ci_high=high)
            else:
                row.update(rate=None, ci_low=None, ci_high=None)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# First defection and aggregates
# ---------------------------------------------------------------------------

def first_defection(record: EpisodeRecord, side: str = SIDE_A) -> int:
    """
    First round in which `side` defects, or H + 1 if it never does.

    Raises:
        ValueError: If the episode is invalid.
    """
    if not record.valid:
        raise ValueError(f"First defection of invalid episode {record.episode_index}")
    for r in record.rounds:
        if r.action(side) is Action.D:
            return r.round_index
    return record.horizon + 1


def _agent_id(record: EpisodeRecord, side: str) -> Any:
    return record.metadata.get(f"agent_{side}", side)


def tau_records(records: Iterable[EpisodeRecord]) -> List[Dict[str, Any]]:
    """
    One row per valid episode and direction: episode, from, to, tau.

    Society dyads contribute both directions; other episodes contribute the
    agent's direction only.
    """
    rows = []
    for record in records:
        if not record.valid:
            continue
        for side in _directions(record):
            other = SIDE_B if side == SIDE_A else SIDE_A
            rows.append({
                "episode": record.episode_index,
                "from": _agent_id(record, side),
                "to": _agent_id(record, other),
                "tau": first_defection(record, side),
            })
    return rows


def mean_tau_by_episode(records: Iterable[EpisodeRecord]) -> Dict[int, float]:
    per_episode: Dict[int, List[int]] = {}
    for row in tau_records(records):
        per_episode.setdefault(row["episode"], []).append(row["tau"])
    return {g: float(np.mean(taus)) for g, taus in sorted(per_episode.items())}


def _slice_actions(record: EpisodeRecord, granularity: str) -> List[Tuple[Any, List[Action]]]:
    slices = []
    for side in _directions(record):
        actions = record.actions(side)
        if granularity == "round":
            slices.extend((r.round_index, [r.action(side)]) for r in record.rounds)
        elif granularity == "episode":
            slices.append((record.episode_index, actions))
        elif granularity == "condition":
            slices.append((record.condition_tag, actions))
        elif granularity == "role":
            slices.append((record.metadata.get(f"persona_{side}", "RP"), actions))
        elif granularity == "composition":
            slices.append((record.metadata.get("rc_fraction"), actions))
    return slices


def aggregate(records: Iterable[EpisodeRecord], granularity: str) -> "OrderedDict[Any, RateCell]":
    """
    Pooled cooperation rates per slice.

    Args:
        records (Iterable[EpisodeRecord]): Episodes or society dyads.
        granularity (str): "round", "episode", "condition", "role" or "composition".

    Returns:
        OrderedDict: Slice label to RateCell, labels sorted.

    Raises:
        ValueError: For an unknown granularity.
        EmptySlice: If there are no valid actions at all.
    """
    if granularity not in GRANULARITIES:
        raise ValueError(f"Unknown granularity: {granularity}")
    pooled: Dict[Any, List[Action]] = {}
    for record in records:
        if not record.valid:
            continue
        for label, actions in _slice_actions(record, granularity):
            pooled.setdefault(label, []).extend(actions)
    if not pooled or not any(pooled.values()):
        raise EmptySlice(f"No valid actions to aggregate by {granularity}")
    return OrderedDict((label, rate_cell(pooled[label])) for label in sorted(pooled, key=str))


def role_trajectories(records: Iterable[EpisodeRecord]) -> "OrderedDict[Tuple[str, int], RateCell]":
    """
    Pooled cooperation per (persona, round) over valid episodes.

    Raises:
        EmptySlice: If there are no valid actions at all.
    """
    pooled: Dict[Tuple[str, int], List[Action]] = {}
    for record in records:
        if not record.valid:
            continue
        for side in _directions(record):
            role = record.metadata.get(f"persona_{side}", "RP")
            for r in record.rounds:
                pooled.setdefault((role, r.round_index), []).append(r.action(side))
    if not pooled:
        raise EmptySlice("No valid actions to aggregate by role and round")
    return OrderedDict((key, rate_cell(pooled[key])) for key in sorted(pooled))


def episode_series(records: Iterable[EpisodeRecord]) -> List[Dict[str, Any]]:
    """Per valid episode (and society direction): cooperation rate and tau."""
    rows = []
    for record in records:
        if not record.valid or not record.rounds:
            continue
        for side in _directions(record):
            rows.append({
                "episode": record.episode_index,
                "condition": record.condition_tag,
                "agent": _agent_id(record, side),
                "persona": record.metadata.get(f"persona_{side}"),
                "coop_rate": coop_rate(record.actions(side)),
                "mean_payoff": record.mean_payoff(side),
                "tau": first_defection(record, side),
            })
    return rows


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    kind: str
    p_hat_by_slice: Dict[str, RateCell] = field(default_factory=dict)
    delta_reg: Optional[float] = None
    delta_reg_episode_mean: Optional[float] = None
    rho_drop: Optional[float] = None
    conditional_table: Dict[str, RateCell] = field(default_factory=dict)
    g_rep: Optional[float] = None
    g_rep_by_visibility: Dict[str, Optional[float]] = field(default_factory=dict)
    e_omega: Optional[float] = None
    control_rate: Optional[float] = None
    tau_records: List[Dict[str, Any]] = field(default_factory=list)
    excluded_count: int = 0
    undefined: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "p_hat_by_slice": {k: v.to_dict() for k, v in self.p_hat_by_slice.items()},
            "delta_reg": self.delta_reg,
            "delta_reg_episode_mean": self.delta_reg_episode_mean,
            "rho_drop": self.rho_drop,
            "conditional_table": {k: v.to_dict() for k, v in self.conditional_table.items()},
            "g_rep": self.g_rep,
            "g_rep_by_visibility": self.g_rep_by_visibility,
            "e_omega": self.e_omega,
            "control_rate": self.control_rate,
            "tau_records": self.tau_records,
            "excluded_count": self.excluded_count,
            "undefined": self.undefined,
        }

    def csv_rows(self) -> List[List[Any]]:
        """Flat rows: metric, slice, value, count."""
        rows: List[List[Any]] = []
        for label, cell in self.p_hat_by_slice.items():
            rows.append(["p_hat", label, cell.rate, cell.count])
        for label, cell in self.conditional_table.items():
            rows.append(["p_hat_given_state", label, cell.rate, cell.count])
        for name in ("delta_reg", "delta_reg_episode_mean", "rho_drop", "g_rep", "e_omega", "control_rate"):
            rows.append([name, "", getattr(self, name), ""])
        for visibility, value in self.g_rep_by_visibility.items():
            rows.append(["g_rep", visibility, value, ""])
        rows.append(["excluded_count", "", self.excluded_count, ""])
        return rows


CSV_HEADER = ["metric", "slice", "value", "count"]


def _guarded(report: MetricReport, name: str, compute):
    try:
        return compute()
    except MetricError as e:
        report.undefined[name] = str(e)
        logger.warning(f"{name} undefined: {e}")
        return None


def direct_report(records: Sequence[EpisodeRecord]) -> MetricReport:
    valid, excluded = split_valid(records)
    report = MetricReport(kind="direct", excluded_count=excluded)
    if valid:
        report.p_hat_by_slice = {str(k): v for k, v in aggregate(valid, "condition").items()}
        for regime, cell in regime_rates(valid).items():
            report.p_hat_by_slice[f"regime:{regime.value}"] = cell
    report.delta_reg = _guarded(report, "delta_reg", lambda: regime_discrimination(valid))
    report.delta_reg_episode_mean = _guarded(
        report, "delta_reg_episode_mean", lambda: regime_discrimination_episode_mean(valid)
    )
    table = conditional_table(valid)
    report.conditional_table = {s.value: c for s, c in table.items()}
    report.rho_drop = _guarded(report, "rho_drop", lambda: cooperation_drop(table))
    report.tau_records = tau_records(valid)
    return report


def reputation_report(outcomes: Sequence[TrialOutcome]) -> MetricReport:
    valid, excluded = split_valid(outcomes)
    report = MetricReport(kind="reputation", excluded_count=excluded)
    tests = _test_outcomes(valid)
    for level in ReputationLevel:
        report.p_hat_by_slice[f"level:{level.value}"] = rate_cell(o.choice for o in tests if o.trial.level is level)
    for visibility in Visibility:
        report.p_hat_by_slice[f"visibility:{visibility.value}"] = rate_cell(
            o.choice for o in tests if o.trial.visibility is visibility
        )
    report.p_hat_by_slice["control"] = rate_cell(o.choice for o in valid if o.trial.is_control)
    report.g_rep = _guarded(report, "g_rep", lambda: reputation_gradient(valid))
    for visibility in Visibility:
        report.g_rep_by_visibility[visibility.value] = _guarded(
            report, f"g_rep:{visibility.value}", lambda v=visibility: reputation_gradient(valid, v)
        )
    effect = _guarded(report, "e_omega", lambda: observability_effect(valid))
    if effect is not None:
        report.e_omega, report.control_rate = effect
    return report


def society_report(records: Sequence[EpisodeRecord]) -> MetricReport:
    valid, excluded = split_valid(records)
    report = MetricReport(kind="society", excluded_count=excluded)
    if valid:
        for granularity in ("episode", "role"):
            for label, cell in aggregate(valid, granularity).items():
                report.p_hat_by_slice[f"{granularity}:{label}"] = cell
    report.tau_records = tau_records(valid)
    return report
