"""
Memory-one (Zero-Determinant) and scripted strategies, and the Markov-chain
oracle for long-run cooperation rates and payoffs of memory-one play.
"""

import logging
import os
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import yaml

from dilemma_bench.exceptions import NonConvergence
from dilemma_bench.game import Action, DEFAULT_MATRIX, JointState, PayoffMatrix, STATE_ORDER

# Configure logging
logger = logging.getLogger(__name__)

STATIONARY_TOLERANCE = 1e-10
STATIONARY_MAX_ITER = 10 ** 6


@dataclass(frozen=True)
class MemoryOneStrategy:
    """
    Cooperation probabilities conditioned on the previous joint state.

    States are read from this strategy's own perspective: p_cd is the
    probability of cooperating after this player cooperated and the
    opponent defected.
    """

    p0: float
    p_cc: float
    p_cd: float
    p_dc: float
    p_dd: float
    name: str = ""

    def __post_init__(self):
        for label, value in zip(("p0", "pCC", "pCD", "pDC", "pDD"), self.as_tuple()):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{label} must lie in [0, 1], got {value}")

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.p0, self.p_cc, self.p_cd, self.p_dc, self.p_dd)

    def probability(self, state: Optional[JointState]) -> float:
        """Probability of C given the previous state (None on round 1)."""
        if state is None:
            return self.p0
        return {
            JointState.CC: self.p_cc,
            JointState.CD: self.p_cd,
            JointState.DC: self.p_dc,
            JointState.DD: self.p_dd,
        }[state]

    def state_vector(self) -> np.ndarray:
        return np.array([self.p_cc, self.p_cd, self.p_dc, self.p_dd], dtype=float)


class Regime(str, Enum):
    EXTORTION = "Extortion"
    GENEROSITY = "Generosity"


class ZDCondition(str, Enum):
    """The four opponent settings of the direct-reciprocity protocol."""

    ES = "ES"
    EM = "EM"
    GM = "GM"
    GS = "GS"

    @property
    def regime(self) -> Regime:
        if self in (ZDCondition.ES, ZDCondition.EM):
            return Regime.EXTORTION
        return Regime.GENEROSITY


# State order per row: (ZD's previous action, agent's previous action).
ZD_TABLE: Dict[ZDCondition, MemoryOneStrategy] = {
    ZDCondition.ES: MemoryOneStrategy(0.000, 0.692, 0.000, 0.538, 0.000, name="ES"),
    ZDCondition.EM: MemoryOneStrategy(0.000, 0.857, 0.000, 0.786, 0.000, name="EM"),
    ZDCondition.GM: MemoryOneStrategy(1.000, 1.000, 0.077, 1.000, 0.154, name="GM"),
    ZDCondition.GS: MemoryOneStrategy(1.000, 1.000, 0.182, 1.000, 0.364, name="GS"),
}


def zd_params(condition: ZDCondition, table: Optional[Mapping[ZDCondition, MemoryOneStrategy]] = None) -> MemoryOneStrategy:
    """
    Parameterisation of a ZD opponent.

    Args:
        condition (ZDCondition): ES, EM, GM or GS.
        table (Mapping, optional): Alternative table; the built-in one by default.

    Returns:
        MemoryOneStrategy: The strategy for the condition.
    """
    condition = ZDCondition(condition)
    return (table or ZD_TABLE)[condition]


def load_zd_table(path: str) -> Dict[ZDCondition, MemoryOneStrategy]:
    """
    Load ZD parameters from a YAML or JSON file.

    Each condition maps either to a list [p0, pCC, pCD, pDC, pDD] or to a
    mapping with those keys. Conditions missing from the file keep their
    built-in values.

    Args:
        path (str): Path to the table file.

    Returns:
        Dict[ZDCondition, MemoryOneStrategy]: The merged table.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If an entry is malformed.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"ZD table file not found: {path}")

    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}

    table = dict(ZD_TABLE)
    for key, entry in raw.items():
        condition = ZDCondition(str(key).upper())
        if isinstance(entry, Mapping):
            values = [entry[k] for k in ("p0", "pCC", "pCD", "pDC", "pDD")]
        else:
            values = list(entry)
        if len(values) != 5:
            raise ValueError(f"ZD entry for {condition.value} needs 5 probabilities, got {len(values)}")
        table[condition] = MemoryOneStrategy(*[float(v) for v in values], name=condition.value)
        logger.info(f"Loaded ZD parameters for {condition.value} from {path}")
    return table


def next_action(strategy: MemoryOneStrategy, prev_state: Optional[JointState], rng: np.random.Generator) -> Action:
    """
    Sample a memory-one move.

    Args:
        strategy (MemoryOneStrategy): The strategy.
        prev_state (JointState, optional): Previous state from the strategy's
            perspective; None exactly on round 1.
        rng (np.random.Generator): Episode RNG stream.

    Returns:
        Action: C with probability p0 (round 1) or p_s.
    """
    p = strategy.probability(prev_state)
    return Action.C if rng.random() < p else Action.D


class ScriptedKind(str, Enum):
    ALLC = "ALLC"
    ALLD = "ALLD"
    TFT = "TFT"
    GRIM = "GRIM"
    RANDOM = "RandomP"


_RANDOM_PATTERN = re.compile(r"^RandomP\(\s*([0-9]*\.?[0-9]+)\s*\)$", re.IGNORECASE)


@dataclass(frozen=True)
class ScriptedStrategy:
    """A deterministic or fixed-probability baseline strategy."""

    kind: ScriptedKind
    p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"RandomP probability must lie in [0, 1], got {self.p}")

    @property
    def label(self) -> str:
        if self.kind is ScriptedKind.RANDOM:
            return f"RandomP({self.p:g})"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "ScriptedStrategy":
        """
        Parse "ALLC", "ALLD", "TFT", "GRIM" or "RandomP(p)".

        Raises:
            ValueError: If the name is unknown.
        """
        text = text.strip()
        match = _RANDOM_PATTERN.match(text)
        if match:
            return cls(ScriptedKind.RANDOM, float(match.group(1)))
        upper = text.upper()
        for kind in (ScriptedKind.ALLC, ScriptedKind.ALLD, ScriptedKind.TFT, ScriptedKind.GRIM):
            if upper == kind.value:
                return cls(kind)
        raise ValueError(f"Unknown scripted strategy: {text}")

    def as_memory_one(self) -> MemoryOneStrategy:
        """
        Express the strategy as a memory-one vector.

        Raises:
            ValueError: For GRIM, which needs a trigger state.
        """
        if self.kind is ScriptedKind.ALLC:
            return MemoryOneStrategy(1, 1, 1, 1, 1, name="ALLC")
        if self.kind is ScriptedKind.ALLD:
            return MemoryOneStrategy(0, 0, 0, 0, 0, name="ALLD")
        if self.kind is ScriptedKind.TFT:
            return MemoryOneStrategy(1, 1, 0, 1, 0, name="TFT")
        if self.kind is ScriptedKind.RANDOM:
            p = self.p
            return MemoryOneStrategy(p, p, p, p, p, name=self.label)
        raise ValueError("GRIM is not a memory-one strategy")


def _next_state_probabilities(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Rows of next-state probabilities given each player's P(C)."""
    return np.stack([q1 * q2, q1 * (1 - q2), (1 - q1) * q2, (1 - q1) * (1 - q2)], axis=-1)


def transition_matrix(strat_1: MemoryOneStrategy, strat_2: MemoryOneStrategy) -> np.ndarray:
    """
    4x4 transition matrix over joint states from player 1's perspective.

    Player 2 reads every state with the actions swapped.
    """
    q1 = strat_1.state_vector()
    # Player 2 sees CC, DC, CD, DD when player 1 sees CC, CD, DC, DD.
    q2 = np.array([strat_2.probability(s.swapped()) for s in STATE_ORDER], dtype=float)
    return _next_state_probabilities(q1, q2)


def initial_distribution(strat_1: MemoryOneStrategy, strat_2: MemoryOneStrategy) -> np.ndarray:
    """Distribution of the round-1 joint state."""
    return _next_state_probabilities(np.array(strat_1.p0), np.array(strat_2.p0))


def stationary_distribution(
    strat_1: MemoryOneStrategy,
    strat_2: MemoryOneStrategy,
    tol: float = STATIONARY_TOLERANCE,
    max_iter: int = STATIONARY_MAX_ITER,
) -> np.ndarray:
    """
    Long-run average distribution of joint states, player 1's perspective.

    Iterates the lazy chain (I + P) / 2 from the round-1 distribution. Its
    limit equals the Cesaro average of the original chain, so absorbing,
    reducible and periodic chains are handled alike.

    Args:
        strat_1 (MemoryOneStrategy): Player 1.
        strat_2 (MemoryOneStrategy): Player 2.
        tol (float): L1 change below which the iteration stops.
        max_iter (int): Iteration budget.

    Returns:
        np.ndarray: Probabilities of CC, CD, DC, DD summing to 1.

    Raises:
        NonConvergence: If the budget is exhausted.
    """
    lazy = 0.5 * (np.eye(4) + transition_matrix(strat_1, strat_2))
    v = initial_distribution(strat_1, strat_2)
    for _ in range(max_iter):
        nxt = v @ lazy
        if np.abs(nxt - v).sum() < tol:
            return nxt / nxt.sum()
        v = nxt
    raise NonConvergence(
        f"Stationary distribution of {strat_1.name or strat_1} vs {strat_2.name or strat_2} "
        f"did not converge in {max_iter} iterations"
    )


def expected_payoffs(
    strat_1: MemoryOneStrategy,
    strat_2: MemoryOneStrategy,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
) -> Tuple[float, float]:
    """
    Long-run per-round payoffs of both players.

    Raises:
        NonConvergence: Propagated from stationary_distribution.
    """
    dist = stationary_distribution(strat_1, strat_2)
    return _payoffs_under(dist, matrix)


def _payoffs_under(dist: np.ndarray, matrix: PayoffMatrix) -> Tuple[float, float]:
    r, s, t, p = matrix.reward, matrix.sucker, matrix.temptation, matrix.punishment
    v1 = float(dist @ np.array([r, s, t, p], dtype=float))
    v2 = float(dist @ np.array([r, t, s, p], dtype=float))
    return v1, v2


def long_run_cooperation(strat_1: MemoryOneStrategy, strat_2: MemoryOneStrategy) -> Tuple[float, float]:
    """Long-run cooperation probabilities of player 1 and player 2."""
    dist = stationary_distribution(strat_1, strat_2)
    return float(dist[0] + dist[1]), float(dist[0] + dist[2])


def expected_round_distributions(strat_1: MemoryOneStrategy, strat_2: MemoryOneStrategy, horizon: int) -> np.ndarray:
    """
    Exact joint-state distribution of every round of a finite episode.

    Returns:
        np.ndarray: Shape (horizon, 4); row t-1 is the distribution of round t.
    """
    if horizon < 1:
        raise ValueError(f"Horizon must be at least 1, got {horizon}")
    matrix = transition_matrix(strat_1, strat_2)
    rows = [initial_distribution(strat_1, strat_2)]
    for _ in range(horizon - 1):
        rows.append(rows[-1] @ matrix)
    return np.vstack(rows)


def expected_episode_cooperation(strat_1: MemoryOneStrategy, strat_2: MemoryOneStrategy, horizon: int) -> Tuple[float, float]:
    """Expected per-round cooperation rate of each player over one episode."""
    mean = expected_round_distributions(strat_1, strat_2, horizon).mean(axis=0)
    return float(mean[0] + mean[1]), float(mean[0] + mean[2])


def simulate_memory_one(
    strat_1: MemoryOneStrategy,
    strat_2: MemoryOneStrategy,
    rounds: int,
    chains: int,
    rng: np.random.Generator,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
) -> Dict[str, float]:
    """
    Monte-Carlo play of many independent chains in parallel.

    Args:
        strat_1 (MemoryOneStrategy): Player 1.
        strat_2 (MemoryOneStrategy): Player 2.
        rounds (int): Rounds per chain.
        chains (int): Number of chains.
        rng (np.random.Generator): Random stream.
        matrix (PayoffMatrix): Payoff values.

    Returns:
        Dict[str, float]: coop_1, coop_2, payoff_1, payoff_2 averaged over all
        rounds of all chains.
    """
    q1 = strat_1.state_vector()
    q2_by_p1_state = np.array([strat_2.probability(s.swapped()) for s in STATE_ORDER], dtype=float)
    pay_1 = np.array([matrix.reward, matrix.sucker, matrix.temptation, matrix.punishment], dtype=float)
    pay_2 = np.array([matrix.reward, matrix.temptation, matrix.sucker, matrix.punishment], dtype=float)

    a1 = rng.random(chains) < strat_1.p0
    a2 = rng.random(chains) < strat_2.p0
    coop_1 = coop_2 = 0.0
    total_1 = total_2 = 0.0
    for t in range(rounds):
        state = (~a1).astype(int) * 2 + (~a2).astype(int)
        coop_1 += a1.sum()
        coop_2 += a2.sum()
        total_1 += pay_1[state].sum()
        total_2 += pay_2[state].sum()
        if t == rounds - 1:
            break
        a1 = rng.random(chains) < q1[state]
        a2 = rng.random(chains) < q2_by_p1_state[state]

    n = float(rounds * chains)
    return {
        "coop_1": coop_1 / n,
        "coop_2": coop_2 / n,
        "payoff_1": total_1 / n,
        "payoff_2": total_2 / n,
    }


def strategy_from_name(name: str, table: Optional[Mapping[ZDCondition, MemoryOneStrategy]] = None) -> MemoryOneStrategy:
    """
    Memory-one strategy for "ZD:<cond>", a bare ZD condition or a scripted name.

    Raises:
        ValueError: For unknown names and for GRIM.
    """
    text = name.strip()
    if text.upper().startswith("ZD:"):
        text = text[3:]
    if text.upper() in ZDCondition.__members__:
        return zd_params(ZDCondition(text.upper()), table)
    return ScriptedStrategy.parse(text).as_memory_one()


def regime_of(tag: str) -> Optional[Regime]:
    """Regime of a condition tag, or None if the tag is not a ZD condition."""
    try:
        return ZDCondition(tag).regime
    except ValueError:
        return None


def conditions_from(values: Sequence[str]) -> Tuple[ZDCondition, ...]:
    return tuple(ZDCondition(str(v).upper()) for v in values)
