"""
Unit tests for memory-one strategies and the Markov-chain oracle.
"""

import itertools
import os
import shutil
import tempfile
import unittest

import numpy as np

from dilemma_bench.exceptions import NonConvergence
from dilemma_bench.game import Action, JointState
from dilemma_bench.strategies import (
    MemoryOneStrategy,
    Regime,
    ScriptedKind,
    ScriptedStrategy,
    ZDCondition,
    ZD_TABLE,
    expected_episode_cooperation,
    expected_payoffs,
    expected_round_distributions,
    load_zd_table,
    long_run_cooperation,
    next_action,
    regime_of,
    simulate_memory_one,
    stationary_distribution,
    strategy_from_name,
    zd_params,
)

OPPONENTS = ("ALLC", "ALLD", "TFT", "RandomP(0.5)")
ORACLE_SET = ("ES", "EM", "GM", "GS") + OPPONENTS


def _scripted(name):
    return ScriptedStrategy.parse(name).as_memory_one()


class TestZDTable(unittest.TestCase):
    """Test cases for the ZD parameter table."""

    def test_values(self):
        self.assertEqual(zd_params(ZDCondition.ES).as_tuple(), (0.0, 0.692, 0.0, 0.538, 0.0))
        self.assertEqual(zd_params(ZDCondition.EM).as_tuple(), (0.0, 0.857, 0.0, 0.786, 0.0))
        self.assertEqual(zd_params(ZDCondition.GM).as_tuple(), (1.0, 1.0, 0.077, 1.0, 0.154))
        self.assertEqual(zd_params(ZDCondition.GS).as_tuple(), (1.0, 1.0, 0.182, 1.0, 0.364))

    def test_regimes(self):
        self.assertIs(ZDCondition.ES.regime, Regime.EXTORTION)
        self.assertIs(ZDCondition.EM.regime, Regime.EXTORTION)
        self.assertIs(ZDCondition.GM.regime, Regime.GENEROSITY)
        self.assertIs(ZDCondition.GS.regime, Regime.GENEROSITY)
        self.assertIsNone(regime_of("society"))

    def test_probabilities_are_checked(self):
        with self.assertRaises(ValueError):
            MemoryOneStrategy(0.0, 1.2, 0.0, 0.0, 0.0)

    def test_load_table_overrides_one_condition(self):
        temp_dir = tempfile.mkdtemp(prefix="dilemma-bench-test-")
        try:
            path = os.path.join(temp_dir, "zd.yaml")
            with open(path, "w") as f:
                f.write("GS: [1, 1, 0.2, 1, 0.4]\nes: {p0: 0, pCC: 0.7, pCD: 0, pDC: 0.5, pDD: 0}\n")
            table = load_zd_table(path)
        finally:
            shutil.rmtree(temp_dir)
        self.assertEqual(table[ZDCondition.GS].as_tuple(), (1.0, 1.0, 0.2, 1.0, 0.4))
        self.assertEqual(table[ZDCondition.ES].p_cc, 0.7)
        self.assertEqual(table[ZDCondition.GM], ZD_TABLE[ZDCondition.GM])

    def test_load_table_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_zd_table("/nonexistent/zd.yaml")


class TestNextAction(unittest.TestCase):
    """Test cases for memory-one sampling."""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_round_one_uses_p0(self):
        gm = zd_params(ZDCondition.GM)
        es = zd_params(ZDCondition.ES)
        for _ in range(50):
            self.assertIs(next_action(gm, None, self.rng), Action.C)
            self.assertIs(next_action(es, None, self.rng), Action.D)

    def test_state_probability_is_own_perspective(self):
        tft = _scripted("TFT")
        self.assertIs(next_action(tft, JointState.DC, self.rng), Action.C)
        self.assertIs(next_action(tft, JointState.CD, self.rng), Action.D)

    def test_frequency_matches_probability(self):
        gs = zd_params(ZDCondition.GS)
        draws = [next_action(gs, JointState.DD, self.rng) for _ in range(20000)]
        rate = sum(1 for a in draws if a is Action.C) / len(draws)
        self.assertAlmostEqual(rate, 0.364, delta=0.015)

    def test_generous_zd_reads_state_from_its_own_side(self):
        # CD means GM cooperated and was defected against: p = 0.077, not pDC = 1.
        gm = zd_params(ZDCondition.GM)
        draws = [next_action(gm, JointState.CD, self.rng) for _ in range(20000)]
        rate = sum(1 for a in draws if a is Action.C) / len(draws)
        self.assertAlmostEqual(rate, 0.077, delta=0.01)
        for _ in range(50):
            self.assertIs(next_action(gm, JointState.DC, self.rng), Action.C)
            self.assertIs(next_action(gm, JointState.CC, self.rng), Action.C)


class TestScriptedStrategy(unittest.TestCase):
    """Test cases for strategy names."""

    def test_parse(self):
        self.assertIs(ScriptedStrategy.parse("tft").kind, ScriptedKind.TFT)
        random_p = ScriptedStrategy.parse("RandomP(0.3)")
        self.assertIs(random_p.kind, ScriptedKind.RANDOM)
        self.assertEqual(random_p.p, 0.3)
        self.assertEqual(random_p.label, "RandomP(0.3)")
        with self.assertRaises(ValueError):
            ScriptedStrategy.parse("Pavlov")

    def test_grim_is_not_memory_one(self):
        with self.assertRaises(ValueError):
            ScriptedStrategy.parse("GRIM").as_memory_one()

    def test_strategy_from_name(self):
        self.assertEqual(strategy_from_name("ZD:GM"), ZD_TABLE[ZDCondition.GM])
        self.assertEqual(strategy_from_name("es"), ZD_TABLE[ZDCondition.ES])
        self.assertEqual(strategy_from_name("ALLD").as_tuple(), (0, 0, 0, 0, 0))


class TestOracle(unittest.TestCase):
    """Test cases for the stationary-distribution oracle."""

    def test_distribution_sums_to_one(self):
        for condition in ZDCondition:
            for name in OPPONENTS:
                dist = stationary_distribution(zd_params(condition), _scripted(name))
                self.assertAlmostEqual(float(dist.sum()), 1.0, places=9)
                self.assertTrue(np.all(dist >= -1e-12))

    def test_absorbing_chains(self):
        v1, v2 = expected_payoffs(_scripted("TFT"), _scripted("ALLD"))
        self.assertAlmostEqual(v1, 1.0, places=6)
        self.assertAlmostEqual(v2, 1.0, places=6)
        v1, v2 = expected_payoffs(_scripted("ALLC"), _scripted("ALLC"))
        self.assertAlmostEqual(v1, 3.0)
        self.assertAlmostEqual(v2, 3.0)

    def test_periodic_chain_is_averaged(self):
        # TFT opening with D against TFT opening with C alternates CD / DC forever.
        suspicious = MemoryOneStrategy(0, 1, 0, 1, 0, name="STFT")
        dist = stationary_distribution(_scripted("TFT"), suspicious)
        np.testing.assert_allclose(dist, [0.0, 0.5, 0.5, 0.0], atol=1e-8)

    def test_non_convergence(self):
        with self.assertRaises(NonConvergence):
            stationary_distribution(_scripted("TFT"), _scripted("ALLD"), max_iter=1)

    def test_extortion_enforces_linear_relation(self):
        # ES and EM enforce (v_zd - P) = chi * (v_opp - P) with chi = 3 and 1.5.
        for condition, chi in ((ZDCondition.ES, 3.0), (ZDCondition.EM, 1.5)):
            for name in ("ALLC", "TFT", "RandomP(0.5)", "RandomP(0.2)"):
                v_zd, v_opp = expected_payoffs(zd_params(condition), _scripted(name))
                self.assertAlmostEqual(v_zd - 1.0, chi * (v_opp - 1.0), delta=0.05, msg=f"{condition} vs {name}")

    def test_generosity_enforces_linear_relation(self):
        # GM and GS enforce (v_zd - R) = chi * (v_opp - R) with chi = 1.5 and 3.
        for condition, chi in ((ZDCondition.GM, 1.5), (ZDCondition.GS, 3.0)):
            for name in ("ALLD", "RandomP(0.5)", "RandomP(0.8)"):
                v_zd, v_opp = expected_payoffs(zd_params(condition), _scripted(name))
                self.assertAlmostEqual(v_zd - 3.0, chi * (v_opp - 3.0), delta=0.05, msg=f"{condition} vs {name}")

    def test_simulation_matches_oracle(self):
        rng = np.random.default_rng(2024)
        for name_1, name_2 in itertools.product(ORACLE_SET, repeat=2):
            with self.subTest(pair=f"{name_1} vs {name_2}"):
                strat_1 = strategy_from_name(name_1)
                strat_2 = strategy_from_name(name_2)
                coop_1, coop_2 = long_run_cooperation(strat_1, strat_2)
                v1, v2 = expected_payoffs(strat_1, strat_2)
                sim = simulate_memory_one(strat_1, strat_2, rounds=1000, chains=1000, rng=rng)
                self.assertAlmostEqual(sim["coop_1"], coop_1, delta=0.02)
                self.assertAlmostEqual(sim["coop_2"], coop_2, delta=0.02)
                self.assertAlmostEqual(sim["payoff_1"], v1, delta=0.1)
                self.assertAlmostEqual(sim["payoff_2"], v2, delta=0.1)


class TestFiniteHorizon(unittest.TestCase):
    """Test cases for the per-round oracle."""

    def test_rows_are_distributions(self):
        rows = expected_round_distributions(zd_params(ZDCondition.EM), _scripted("TFT"), 30)
        self.assertEqual(rows.shape, (30, 4))
        np.testing.assert_allclose(rows.sum(axis=1), np.ones(30))

    def test_first_row_is_opening(self):
        rows = expected_round_distributions(_scripted("TFT"), zd_params(ZDCondition.ES), 3)
        np.testing.assert_allclose(rows[0], [0.0, 1.0, 0.0, 0.0])

    def test_mutual_cooperators(self):
        self.assertEqual(expected_episode_cooperation(_scripted("TFT"), zd_params(ZDCondition.GM), 30), (1.0, 1.0))

    def test_horizon_must_be_positive(self):
        with self.assertRaises(ValueError):
            expected_round_distributions(_scripted("TFT"), _scripted("TFT"), 0)


if __name__ == "__main__":
    unittest.main()
