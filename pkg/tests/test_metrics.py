"""
Tests for the behavioural metrics, including their values on scripted agents.
"""

import random
import unittest

from dilemma_bench.agents import AgentSpec, build_agent
from dilemma_bench.exceptions import EmptySlice, MissingCondition, MissingLevel, MissingRegime, UndefinedDrop
from dilemma_bench.experiments import (
    DirectReciprocityConfig,
    SocietyConfig,
    TrialOutcome,
    generate_reputation_trials,
    run_direct_reciprocity,
    run_reputation,
    run_society,
)
from dilemma_bench.game import Action, EpisodeRecord, JointState, RoundRecord, SIDE_A, SIDE_B, derive_seed, run_episode
from dilemma_bench.metrics import (
    CSV_HEADER,
    aggregate,
    conditional_cooperation,
    conditional_table,
    coop_rate,
    cooperation_drop,
    direct_report,
    first_defection,
    mean_tau_by_episode,
    observability_effect,
    regime_discrimination,
    regime_discrimination_episode_mean,
    reputation_gradient,
    reputation_report,
    role_trajectories,
    score_profile,
    society_report,
    tau_records,
)
from dilemma_bench.strategies import ScriptedStrategy, ZDCondition, expected_episode_cooperation, zd_params

C, D = Action.C, Action.D


def _scripted(name):
    return AgentSpec(kind="scripted", strategy=name)


def _episode(actions_a, actions_b, tag="GM", index=1, valid=True, metadata=None):
    rounds = tuple(
        RoundRecord(t, a, b, 0, 0) for t, (a, b) in enumerate(zip(actions_a, actions_b), start=1)
    )
    return EpisodeRecord(index, len(rounds), rounds, condition_tag=tag, valid=valid, metadata=metadata or {})


class TestRates(unittest.TestCase):
    """Test cases for basic rates."""

    def test_coop_rate(self):
        self.assertEqual(coop_rate([C, D, C, C]), 0.75)
        with self.assertRaises(EmptySlice):
            coop_rate([])

    def test_conditional_table_by_hand(self):
        record = _episode([C, C, D, C, D], [C, D, C, D, D])
        table = conditional_table([record])
        # Prior states seen by side a: CC -> C, CD -> D, DC -> C, CD -> D.
        self.assertEqual(table[JointState.CC].rate, 1.0)
        self.assertEqual(table[JointState.CD].rate, 0.0)
        self.assertEqual(table[JointState.CD].count, 2)
        self.assertEqual(table[JointState.DC].rate, 1.0)
        self.assertIsNone(table[JointState.DD].rate)
        self.assertEqual(table[JointState.DD].count, 0)
        self.assertEqual(cooperation_drop(table), 1.0)

    def test_conditional_table_other_perspective(self):
        record = _episode([C, D], [D, D])
        table = conditional_table([record], side=SIDE_B)
        self.assertEqual(table[JointState.DC].count, 1)
        self.assertEqual(table[JointState.DC].rate, 0.0)

    def test_undefined_drop(self):
        with self.assertRaises(UndefinedDrop):
            conditional_cooperation([_episode([D, D, D], [C, C, C])])

    def test_invalid_records_are_ignored(self):
        good = _episode([C, C], [C, C], tag="GM")
        bad = _episode([D, D], [C, C], tag="GM", valid=False)
        self.assertEqual(aggregate([good, bad], "condition")["GM"].rate, 1.0)
        report = direct_report([good, bad])
        self.assertEqual(report.excluded_count, 1)

    def test_missing_regime(self):
        with self.assertRaises(MissingRegime):
            regime_discrimination([_episode([C], [C], tag="GM")])
        with self.assertRaises(MissingRegime):
            regime_discrimination_episode_mean([_episode([C], [C], tag="ES")])

    def test_pooled_and_episode_mean_differ(self):
        records = [
            _episode([C, C, C, C], [C] * 4, tag="GM"),
            _episode([D, D], [C] * 2, tag="GS"),
            _episode([D, D], [D] * 2, tag="ES"),
        ]
        self.assertAlmostEqual(regime_discrimination(records), 4 / 6)
        self.assertAlmostEqual(regime_discrimination_episode_mean(records), 0.5)

    def test_aggregate(self):
        records = [_episode([C, D], [C, C], tag="GM", index=1), _episode([D, D], [C, C], tag="ES", index=2)]
        by_round = aggregate(records, "round")
        self.assertEqual(by_round[1].rate, 0.5)
        self.assertEqual(by_round[2].rate, 0.0)
        self.assertEqual(list(aggregate(records, "condition")), ["ES", "GM"])
        with self.assertRaises(ValueError):
            aggregate(records, "weekday")
        with self.assertRaises(EmptySlice):
            aggregate([], "episode")

    def test_first_defection(self):
        self.assertEqual(first_defection(_episode([C, C, D], [C, C, C])), 3)
        self.assertEqual(first_defection(_episode([C, C, C], [D, D, D])), 4)
        with self.assertRaises(ValueError):
            first_defection(_episode([C], [C], valid=False))

    def test_extra_defection_never_delays_first_defection(self):
        rng = random.Random(5)
        for _ in range(200):
            actions = [rng.choice((C, C, C, D)) for _ in range(12)]
            tau = first_defection(_episode(actions, [C] * 12))
            for t, action in enumerate(actions):
                if action is C:
                    flipped = actions[:t] + [D] + actions[t + 1:]
                    self.assertLessEqual(first_defection(_episode(flipped, [C] * 12)), tau)

    def test_round_slices_pool_to_overall_rate(self):
        records = run_direct_reciprocity(
            _scripted("RandomP(0.5)"), DirectReciprocityConfig(horizon=10, episodes=5, seed=4), progress=False
        )
        overall = coop_rate(a for r in records for a in r.actions(SIDE_A))
        for granularity in ("round", "episode", "condition"):
            cells = aggregate(records, granularity).values()
            weighted = sum(cell.cooperations for cell in cells) / sum(cell.count for cell in cells)
            self.assertAlmostEqual(weighted, overall, msg=granularity)
            self.assertAlmostEqual(sum(cell.rate * cell.count for cell in cells) / sum(cell.count for cell in cells), overall)


class TestDirectReciprocityMetrics(unittest.TestCase):
    """Metric values of scripted agents under the default protocol."""

    def test_tft(self):
        records = run_direct_reciprocity(_scripted("TFT"), DirectReciprocityConfig(seed=0), progress=False)
        _, drop = conditional_cooperation(records)
        self.assertEqual(drop, 1.0)

        tft = ScriptedStrategy.parse("TFT").as_memory_one()
        oracle = {c: expected_episode_cooperation(tft, zd_params(c), 30)[0] for c in ZDCondition}
        expected = (oracle[ZDCondition.GM] + oracle[ZDCondition.GS]) / 2 - (oracle[ZDCondition.ES] + oracle[ZDCondition.EM]) / 2
        self.assertAlmostEqual(regime_discrimination(records), expected, delta=0.05)

    def test_allc(self):
        records = run_direct_reciprocity(_scripted("ALLC"), DirectReciprocityConfig(seed=0), progress=False)
        self.assertEqual(regime_discrimination(records), 0.0)
        self.assertEqual(conditional_cooperation(records)[1], 0.0)
        report = direct_report(records)
        self.assertEqual(report.delta_reg, 0.0)
        self.assertEqual(report.rho_drop, 0.0)
        self.assertEqual(report.p_hat_by_slice["ES"].rate, 1.0)

    def test_record_order_does_not_matter(self):
        records = run_direct_reciprocity(
            _scripted("RandomP(0.5)"), DirectReciprocityConfig(horizon=10, episodes=5, seed=9), progress=False
        )
        delta = regime_discrimination(records)
        drop = conditional_cooperation(records)[1]
        shuffler = random.Random(23)
        for _ in range(5):
            shuffled = list(records)
            shuffler.shuffle(shuffled)
            self.assertAlmostEqual(regime_discrimination(shuffled), delta)
            self.assertAlmostEqual(conditional_cooperation(shuffled)[1], drop)


class TestReputationMetrics(unittest.TestCase):
    """Metric values of reputation rule agents."""

    @classmethod
    def setUpClass(cls):
        cls.trials = generate_reputation_trials(0)

    def _outcomes(self, name):
        return run_reputation(_scripted(name), self.trials, progress=False)

    def test_threshold_agent(self):
        outcomes = self._outcomes("threshold")
        self.assertEqual(reputation_gradient(outcomes), 1.0)
        self.assertEqual(reputation_gradient(outcomes, "public"), 1.0)

    def test_anti_threshold_agent(self):
        self.assertEqual(reputation_gradient(self._outcomes("anti-threshold")), -1.0)

    def test_public_agent(self):
        effect, baseline = observability_effect(self._outcomes("public"))
        self.assertEqual(effect, 1.0)
        self.assertEqual(baseline, 0.0)

    def test_unconditional_agents(self):
        for name in ("ALLC", "ALLD"):
            outcomes = self._outcomes(name)
            self.assertEqual(reputation_gradient(outcomes), 0.0)
            self.assertEqual(observability_effect(outcomes)[0], 0.0)

    def test_outcome_order_does_not_matter(self):
        rng = random.Random(31)
        outcomes = [TrialOutcome(trial=t, choice=rng.choice((C, D))) for t in self.trials]
        gradient = reputation_gradient(outcomes)
        effect = observability_effect(outcomes)
        for _ in range(5):
            shuffled = list(outcomes)
            rng.shuffle(shuffled)
            self.assertAlmostEqual(reputation_gradient(shuffled), gradient)
            self.assertAlmostEqual(observability_effect(shuffled)[0], effect[0])
            self.assertAlmostEqual(observability_effect(shuffled)[1], effect[1])

    def test_missing_levels(self):
        outcomes = [o for o in self._outcomes("ALLC") if o.trial.level is None or o.trial.level.value == "mid"]
        with self.assertRaises(MissingLevel):
            reputation_gradient(outcomes)
        public_only = [o for o in self._outcomes("ALLC") if o.trial.is_public]
        with self.assertRaises(MissingCondition):
            observability_effect(public_only)

    def test_report_and_profile(self):
        outcomes = self._outcomes("threshold")
        invalid = TrialOutcome(trial=outcomes[0].trial, choice=None, valid=False, error="x")
        report = reputation_report(outcomes[1:] + [invalid])
        self.assertEqual(report.excluded_count, 1)
        self.assertEqual(report.g_rep, 1.0)
        self.assertEqual(report.p_hat_by_slice["level:high"].rate, 1.0)
        self.assertEqual(report.p_hat_by_slice["control"].rate, 0.0)
        for row in report.csv_rows():
            self.assertEqual(len(row), len(CSV_HEADER))

        rows = score_profile(outcomes, draws=200)
        self.assertEqual(len(rows), 22)
        for row in rows:
            self.assertEqual(row["rate"], 1.0 if row["score"] >= 0 else 0.0)
            self.assertLessEqual(row["ci_low"], row["rate"])
            self.assertGreaterEqual(row["ci_high"], row["rate"])


class TestSocietyMetrics(unittest.TestCase):
    """Metric values of scripted societies."""

    def test_all_defectors(self):
        log = run_society(_scripted("ALLD"), SocietyConfig(seed=0), progress=False)
        self.assertEqual(mean_tau_by_episode(log.records), {g: 1.0 for g in range(1, 11)})
        for cell in aggregate(log.records, "episode").values():
            self.assertEqual(cell.rate, 0.0)

    def test_all_cooperators(self):
        log = run_society(_scripted("ALLC"), SocietyConfig(seed=0), progress=False)
        self.assertEqual(mean_tau_by_episode(log.records), {g: 11.0 for g in range(1, 11)})
        self.assertEqual(aggregate(log.records, "composition")[0.4].rate, 1.0)

    def test_tau_records_cover_both_directions(self):
        log = run_society(_scripted("TFT"), SocietyConfig(episodes=1, seed=0), progress=False)
        rows = tau_records(log.records)
        self.assertEqual(len(rows), 20)
        self.assertEqual({(r["from"], r["to"]) for r in rows}, {(i, j) for i in range(5) for j in range(5) if i != j})

    def test_single_dyad_society_matches_dyadic_run(self):
        members = [_scripted("TFT"), _scripted("RandomP(0.5)")]
        config = SocietyConfig(n_agents=2, horizon=12, episodes=1, rc_fraction=0.0, seed=5)
        log = run_society(_scripted("TFT"), config, members=members, progress=False)
        (dyad,) = log.records
        dyadic = run_episode(build_agent(members[0]), build_agent(members[1]), horizon=12, seed=derive_seed(5, 1, 0, 1))
        self.assertEqual([r.to_dict() for r in dyad.rounds], [r.to_dict() for r in dyadic.rounds])

        both_sides = dyadic.actions(SIDE_A) + dyadic.actions(SIDE_B)
        report = society_report(log.records)
        self.assertAlmostEqual(report.p_hat_by_slice["episode:1"].rate, coop_rate(both_sides))
        self.assertEqual(report.p_hat_by_slice["episode:1"].count, 24)
        self.assertEqual(
            [row["tau"] for row in report.tau_records],
            [first_defection(dyadic, SIDE_A), first_defection(dyadic, SIDE_B)],
        )
        for t, cell in aggregate(log.records, "round").items():
            self.assertAlmostEqual(cell.rate, coop_rate(r.action(s) for r in dyadic.rounds[t - 1:t] for s in (SIDE_A, SIDE_B)))

    def test_society_round_slices_pool_to_overall_rate(self):
        log = run_society(_scripted("RandomP(0.5)"), SocietyConfig(episodes=2, seed=3), progress=False)
        overall = coop_rate(a for r in log.records for side in (SIDE_A, SIDE_B) for a in r.actions(side))
        cells = aggregate(log.records, "round").values()
        self.assertAlmostEqual(sum(c.cooperations for c in cells) / sum(c.count for c in cells), overall)

    def test_role_trajectories(self):
        members = [_scripted(name) for name in ("ALLC", "ALLD", "TFT", "TFT", "ALLC")]
        log = run_society(_scripted("TFT"), SocietyConfig(horizon=4, episodes=2, seed=1), members=members, progress=False)
        cells = role_trajectories(log.records)
        self.assertEqual(list(cells), [(role, t) for role in ("RC", "RP") for t in range(1, 5)])
        self.assertEqual(sum(c.count for c in cells.values()), 2 * 10 * 4 * 2)
        by_role = aggregate(log.records, "role")
        for role in ("RC", "RP"):
            pooled = [c for (r, _), c in cells.items() if r == role]
            self.assertEqual(sum(c.cooperations for c in pooled), by_role[role].cooperations)
            self.assertEqual(sum(c.count for c in pooled), by_role[role].count)
        with self.assertRaises(EmptySlice):
            role_trajectories([])

    def test_role_slices(self):
        log = run_society(_scripted("ALLC"), SocietyConfig(episodes=1, seed=0), progress=False)
        report = society_report(log.records)
        self.assertEqual(report.p_hat_by_slice["role:RC"].count, 2 * 4 * 10)
        self.assertEqual(report.p_hat_by_slice["role:RP"].count, 3 * 4 * 10)
        self.assertEqual(report.excluded_count, 0)


if __name__ == "__main__":
    unittest.main()
