"""
Experiment orchestration and report generation for Dilemma Bench.
"""

import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from dilemma_bench import __version__
from dilemma_bench.agents import AgentSpec, DecisionStats
from dilemma_bench.analysis import (
    KeywordLexicon,
    bayesian_bootstrap_contrast,
    lexical_by_source,
    load_lexicon,
)
from dilemma_bench.config import config_hash, experiments_of
from dilemma_bench.exceptions import EmptyGroup, MissingData
from dilemma_bench.experiments import (
    DirectReciprocityConfig,
    SocietyConfig,
    TrialOutcome,
    TrialSet,
    generate_reputation_trials,
    load_trial_set,
    run_direct_reciprocity,
    run_reputation,
    run_society,
)
from dilemma_bench.game import EpisodeRecord, SIDE_A, SIDE_B
from dilemma_bench.gateway import SamplingConfig, gateway_from_config
from dilemma_bench.metrics import (
    CSV_HEADER,
    aggregate,
    direct_report,
    episode_series,
    mean_tau_by_episode,
    reputation_report,
    role_trajectories,
    score_profile,
    society_report,
    tau_records,
)
from dilemma_bench.output import (
    JsonlWriter,
    dict_rows,
    generate_text_summary,
    iter_jsonl,
    read_json,
    write_csv,
    write_json,
    write_jsonl,
)
from dilemma_bench.strategies import Regime, load_zd_table, regime_of

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
EPISODES_FILE = "episodes.jsonl"
TRIALS_FILE = "trials.jsonl"
REPUTATION_FILE = "reputation.jsonl"
SOCIETY_FILE = "society.jsonl"
SOCIETY_CONTEXTS_FILE = "society_contexts.jsonl"
TRANSCRIPTS_FILE = "transcripts.jsonl"

REPORT_KINDS = ("metrics", "payoff-plane", "trajectories", "tau", "lexical", "contrasts")


def _uses_remote(config: Dict[str, Any]) -> bool:
    agents = [config["agent"]] + list(config["society"].get("members") or [])
    return any(a.get("kind") == "remote" for a in agents)


def _model_ids(config: Dict[str, Any]) -> List[str]:
    agents = [config["agent"]] + list(config["society"].get("members") or [])
    ids = []
    for agent in agents:
        if agent.get("kind") == "remote" and agent["endpoint"]["model_id"] not in ids:
            ids.append(agent["endpoint"]["model_id"])
    return ids


def run_experiment(config: Dict[str, Any], out_dir: str, progress: bool = True) -> Dict[str, Any]:
    """
    Run the configured experiment(s) and persist every output in out_dir.

    Args:
        config (Dict[str, Any]): Validated configuration.
        out_dir (str): Output directory; created if missing.
        progress (bool): Show progress bars.

    Returns:
        Dict[str, Any]: The manifest that was written.
    """
    os.makedirs(out_dir, exist_ok=True)
    started_at = datetime.now(timezone.utc).isoformat()
    seed = config["seed"]
    workers = config["concurrency"]
    experiments = experiments_of(config)
    logger.info(f"Running {', '.join(experiments)} with seed {seed} into {out_dir}")

    transcripts = None
    gateway = None
    if _uses_remote(config):
        transcripts = JsonlWriter(os.path.join(out_dir, TRANSCRIPTS_FILE))
        gateway = gateway_from_config(config, transcript_sink=lambda t: transcripts.write(t.to_dict()))

    zd_table = load_zd_table(config["zd_table"]) if config.get("zd_table") else None
    stats = DecisionStats()
    agent_options = {
        "gateway": gateway,
        "sampling": SamplingConfig.from_config(config["sampling"]),
        "stats": stats,
        "max_parse_retries": config["decision"]["max_parse_retries"],
        "long_horizon_placement": config["prompts"]["long_horizon_placement"],
        "zd_table": zd_table,
    }
    agent = AgentSpec.from_config(config["agent"])

    manifest: Dict[str, Any] = {
        "artifact_version": __version__,
        "config_hash": config_hash(config),
        "config": config,
        "experiments": experiments,
        "seeds": {"experiment": seed},
        "models": _model_ids(config),
        "started_at": started_at,
        "counts": {},
    }
    counts = manifest["counts"]

    try:
        if "direct" in experiments:
            direct_config = DirectReciprocityConfig.from_config(config["direct"], seed=seed)
            with JsonlWriter(os.path.join(out_dir, EPISODES_FILE)) as writer:
                records = run_direct_reciprocity(
                    agent,
                    direct_config,
                    agent_options=agent_options,
                    zd_table=zd_table,
                    workers=workers,
                    on_episode=lambda r: writer.write(r.to_dict()),
                    progress=progress,
                )
            counts["episodes"] = len(records)
            counts["episodes_excluded"] = sum(1 for r in records if not r.valid)

        if "reputation" in experiments:
            trials = _trial_set(config)
            manifest["seeds"]["trials"] = trials.seed
            write_jsonl(os.path.join(out_dir, TRIALS_FILE), (t.to_dict() for t in trials))
            with JsonlWriter(os.path.join(out_dir, REPUTATION_FILE)) as writer:
                outcomes = run_reputation(
                    agent,
                    trials,
                    agent_options=agent_options,
                    workers=workers,
                    on_outcome=lambda o: writer.write(o.to_dict()),
                    progress=progress,
                )
            counts["trials"] = len(outcomes)
            counts["trials_excluded"] = sum(1 for o in outcomes if not o.valid)

        if "society" in experiments:
            society_config = SocietyConfig.from_config(config["society"], seed=seed)
            members = None
            if config["society"].get("members"):
                members = [AgentSpec.from_config(m) for m in config["society"]["members"]]
            with JsonlWriter(os.path.join(out_dir, SOCIETY_FILE)) as writer:
                def write_dyads(dyads):
                    for record in dyads:
                        writer.write(record.to_dict())

                log = run_society(
                    agent,
                    society_config,
                    members=members,
                    agent_options=agent_options,
                    workers=workers,
                    on_episode=write_dyads,
                    progress=progress,
                )
            write_jsonl(os.path.join(out_dir, SOCIETY_CONTEXTS_FILE), log.snapshots)
            manifest["personas"] = log.persona_summary()
            counts["society_dyads"] = len(log.records)
            counts["society_dyads_excluded"] = sum(1 for r in log.records if not r.valid)
    finally:
        if transcripts is not None:
            transcripts.close()

    decision_stats = stats.to_dict()
    counts["parse_retries"] = decision_stats["parse_retries"]
    counts["decision_failures"] = decision_stats["failures"]
    if gateway is not None:
        manifest["gateway"] = gateway.stats.to_dict()
    manifest["finished_at"] = datetime.now(timezone.utc).isoformat()
    write_json(os.path.join(out_dir, MANIFEST_FILE), manifest)
    return manifest


def _trial_set(config: Dict[str, Any]) -> TrialSet:
    section = config["reputation"]
    trial_seed = section.get("trial_seed")
    if trial_seed is None:
        trial_seed = config["seed"]
    if section.get("trials_file"):
        logger.info(f"Loading trials from {section['trials_file']}")
        return load_trial_set(section["trials_file"], seed=trial_seed)
    return generate_reputation_trials(trial_seed)


def excluded_total(manifest: Dict[str, Any]) -> int:
    counts = manifest.get("counts", {})
    return sum(counts.get(k, 0) for k in ("episodes_excluded", "trials_excluded", "society_dyads_excluded"))


def gen_trials(seed: int, out_path: str) -> int:
    """
    Write the trial set for a seed as JSONL.

    Returns:
        int: Number of trials written.
    """
    trials = generate_reputation_trials(seed)
    count = write_jsonl(out_path, (t.to_dict() for t in trials))
    logger.info(f"Wrote {count} trials for seed {seed} to {out_path}")
    return count


# ---------------------------------------------------------------------------
# Loading persisted data
# ---------------------------------------------------------------------------

class RunData:
    """Lazy access to the data files of one output directory."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        manifest_path = os.path.join(out_dir, MANIFEST_FILE)
        if not os.path.exists(manifest_path):
            raise MissingData(f"No {MANIFEST_FILE} in {out_dir}")
        self.manifest = read_json(manifest_path)

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def has(self, name: str) -> bool:
        return os.path.exists(self._path(name))

    def episodes(self) -> List[EpisodeRecord]:
        return [EpisodeRecord.from_dict(d) for d in iter_jsonl(self._path(EPISODES_FILE))] if self.has(EPISODES_FILE) else []

    def outcomes(self) -> List[TrialOutcome]:
        return [TrialOutcome.from_dict(d) for d in iter_jsonl(self._path(REPUTATION_FILE))] if self.has(REPUTATION_FILE) else []

    def society(self) -> List[EpisodeRecord]:
        return [EpisodeRecord.from_dict(d) for d in iter_jsonl(self._path(SOCIETY_FILE))] if self.has(SOCIETY_FILE) else []

    @property
    def analysis_config(self) -> Dict[str, Any]:
        return self.manifest.get("config", {}).get("analysis", {})

    @property
    def seed(self) -> int:
        return int(self.manifest.get("seeds", {}).get("experiment", 0))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _report_metrics(data: RunData) -> List[str]:
    written = []
    sources = (
        ("direct", data.episodes, direct_report),
        ("reputation", data.outcomes, reputation_report),
        ("society", data.society, society_report),
    )
    for kind, load, build in sources:
        items = load()
        if not items:
            continue
        report = build(items)
        json_path = os.path.join(data.out_dir, f"metrics_{kind}.json")
        csv_path = os.path.join(data.out_dir, f"metrics_{kind}.csv")
        write_json(json_path, report.to_dict())
        write_csv(csv_path, CSV_HEADER, report.csv_rows())
        written.extend([json_path, csv_path])
        if kind == "reputation":
            analysis = data.analysis_config
            rows = score_profile(
                items,
                level=analysis.get("ci_level", 0.95),
                draws=analysis.get("profile_draws", 2000),
                seed=data.seed,
            )
            header = ["score", "visibility", "rate", "count", "ci_low", "ci_high"]
            profile_path = os.path.join(data.out_dir, "score_profile.csv")
            write_csv(profile_path, header, dict_rows(rows, header))
            written.append(profile_path)
    if not written:
        raise MissingData(f"No episode, reputation or society data in {data.out_dir}")
    return written


def _report_payoff_plane(data: RunData) -> List[str]:
    records = [r for r in data.episodes() if r.valid]
    if not records:
        raise MissingData(f"No valid direct-reciprocity episodes in {data.out_dir}")
    rows = [
        [r.condition_tag, r.episode_index, r.mean_payoff(SIDE_B), r.mean_payoff(SIDE_A)]
        for r in records
    ]
    path = os.path.join(data.out_dir, "payoff_plane.csv")
    write_csv(path, ["condition", "episode", "opponent_payoff", "agent_payoff"], rows)
    return [path]


def _report_trajectories(data: RunData) -> List[str]:
    written = []
    episodes = [r for r in data.episodes() if r.valid]
    if episodes:
        rows = []
        for condition in sorted({r.condition_tag for r in episodes}):
            subset = [r for r in episodes if r.condition_tag == condition]
            for t, cell in aggregate(subset, "round").items():
                rows.append([condition, t, cell.rate, cell.count])
        path = os.path.join(data.out_dir, "trajectories.csv")
        write_csv(path, ["condition", "round", "rate", "count"], rows)
        written.append(path)

    dyads = [r for r in data.society() if r.valid]
    if dyads:
        rows = []
        for g in sorted({r.episode_index for r in dyads}):
            subset = [r for r in dyads if r.episode_index == g]
            for t, cell in aggregate(subset, "round").items():
                rows.append([g, t, cell.rate, cell.count])
        path = os.path.join(data.out_dir, "society_trajectories.csv")
        write_csv(path, ["episode", "round", "rate", "count"], rows)
        written.append(path)

        rows = [[role, t, cell.rate, cell.count] for (role, t), cell in role_trajectories(dyads).items()]
        path = os.path.join(data.out_dir, "society_role_trajectories.csv")
        write_csv(path, ["role", "round", "rate", "count"], rows)
        written.append(path)
    if not written:
        raise MissingData(f"No valid episodes for trajectories in {data.out_dir}")
    return written


def _write_tau(out_dir: str, records: List[EpisodeRecord], suffix: str) -> List[str]:
    pairs = tau_records(records)
    counts: Dict[int, int] = {}
    for row in pairs:
        counts[row["episode"]] = counts.get(row["episode"], 0) + 1
    mean_path = os.path.join(out_dir, f"tau{suffix}.csv")
    pairs_path = os.path.join(out_dir, f"tau{suffix}_pairs.csv")
    write_csv(mean_path, ["episode", "mean_tau", "pairs"],
              [[g, tau, counts[g]] for g, tau in mean_tau_by_episode(records).items()])
    write_csv(pairs_path, ["episode", "from", "to", "tau"], dict_rows(pairs, ["episode", "from", "to", "tau"]))
    return [mean_path, pairs_path]


def _report_tau(data: RunData) -> List[str]:
    dyads = [r for r in data.society() if r.valid]
    episodes = [r for r in data.episodes() if r.valid]
    if not dyads and not episodes:
        raise MissingData(f"No valid episodes for first-defection rounds in {data.out_dir}")
    written = []
    # Society tau keeps the plain file names; direct episodes get "_direct" when both exist
    if dyads:
        written.extend(_write_tau(data.out_dir, dyads, ""))
    if episodes:
        written.extend(_write_tau(data.out_dir, episodes, "_direct" if dyads else ""))
    return written


def _traces(data: RunData) -> List[Dict[str, Any]]:
    traces = []
    for record in data.episodes() + data.society():
        for r in record.rounds:
            traces.extend(t for t in (r.trace_a, r.trace_b) if t)
    for outcome in data.outcomes():
        if outcome.decision is not None:
            traces.append({"reasoning": outcome.decision.reasoning, "think_trace": outcome.decision.think_trace})
    return traces


def _report_lexical(data: RunData) -> List[str]:
    lexicon_file = data.analysis_config.get("lexicon_file")
    lexicon = load_lexicon(lexicon_file) if lexicon_file else KeywordLexicon()
    signatures = lexical_by_source(_traces(data), lexicon)
    if not signatures:
        raise MissingData(f"No reasoning traces in {data.out_dir}")
    json_path = os.path.join(data.out_dir, "lexical.json")
    csv_path = os.path.join(data.out_dir, "lexical.csv")
    write_json(json_path, {source: sig.to_dict() for source, sig in signatures.items()})
    header = ["source", "coop_count", "defect_count", "total_words", "coop_per_100", "defect_per_100", "ratio"]
    write_csv(csv_path, header, [[source] + dict_rows([sig.to_dict()], header[1:])[0] for source, sig in signatures.items()])
    return [json_path, csv_path]


def _series(data: RunData) -> Dict[str, Dict[str, List[float]]]:
    """Per-unit statistics available for contrasts, grouped by family."""
    series: Dict[str, Dict[str, List[float]]] = {}

    episodes = episode_series(data.episodes())
    if episodes:
        by_regime = {
            regime.value: [row["coop_rate"] for row in episodes if regime_of(row["condition"]) is regime]
            for regime in (Regime.GENEROSITY, Regime.EXTORTION)
        }
        series["direct_coop"] = {"all": [row["coop_rate"] for row in episodes], **by_regime}

    outcomes = [o for o in data.outcomes() if o.valid and not o.trial.is_control]
    if outcomes:
        series["reputation_coop"] = {
            "all": [1.0 if o.choice.value == "C" else 0.0 for o in outcomes],
            "public": [1.0 if o.choice.value == "C" else 0.0 for o in outcomes if o.trial.is_public],
            "private": [1.0 if o.choice.value == "C" else 0.0 for o in outcomes if not o.trial.is_public],
        }

    dyads = data.society()
    society_rows = episode_series(dyads)
    if society_rows:
        series["society_coop"] = {
            "all": [row["coop_rate"] for row in society_rows],
            "RC": [row["coop_rate"] for row in society_rows if row["persona"] == "RC"],
            "RP": [row["coop_rate"] for row in society_rows if row["persona"] == "RP"],
        }
        series["society_tau"] = {
            "all": list(mean_tau_by_episode(dyads).values()),
            "RC": [float(row["tau"]) for row in society_rows if row["persona"] == "RC"],
            "RP": [float(row["tau"]) for row in society_rows if row["persona"] == "RP"],
        }
    return series


WITHIN_RUN_CONTRASTS = (
    ("direct_coop", Regime.GENEROSITY.value, Regime.EXTORTION.value),
    ("reputation_coop", "public", "private"),
    ("society_coop", "RC", "RP"),
    ("society_tau", "RC", "RP"),
)


def _report_contrasts(data: RunData, baseline: Optional[RunData] = None) -> List[str]:
    draws = data.analysis_config.get("draws", 10000)
    seed = data.seed
    ours = _series(data)
    results = []

    if baseline is None:
        pairs = [(family, ours[family].get(a, []), ours[family].get(b, []), a, b)
                 for family, a, b in WITHIN_RUN_CONTRASTS if family in ours]
    else:
        theirs = _series(baseline)
        pairs = []
        for family in ours:
            if family not in theirs:
                continue
            for group in ours[family]:
                if group in theirs[family]:
                    pairs.append((f"{family}:{group}", ours[family][group], theirs[family][group],
                                  f"run:{group}", f"baseline:{group}"))

    for family, a, b, label_a, label_b in pairs:
        try:
            result = bayesian_bootstrap_contrast(a, b, draws=draws, seed=seed, label_a=label_a, label_b=label_b)
        except EmptyGroup as e:
            logger.warning(f"Skipping contrast {family}: {e}")
            continue
        results.append({"family": family, **result.to_dict()})

    if not results:
        raise MissingData(f"No contrastable series in {data.out_dir}")
    json_path = os.path.join(data.out_dir, "contrasts.json")
    csv_path = os.path.join(data.out_dir, "contrasts.csv")
    header = ["family", "label_a", "label_b", "n_a", "n_b", "median_delta", "p_plus", "draws", "seed"]
    write_json(json_path, results)
    write_csv(csv_path, header, dict_rows(results, header))
    return [json_path, csv_path]


def generate_reports(out_dir: str, kind: str, baseline_dir: Optional[str] = None) -> List[str]:
    """
    Compute a report from persisted data only.

    Args:
        out_dir (str): Output directory of a run.
        kind (str): One of REPORT_KINDS.
        baseline_dir (str, optional): Another run to contrast against.

    Returns:
        List[str]: Files written.

    Raises:
        MissingData: If the directory lacks a manifest or the data the
            report needs.
        ValueError: For an unknown report kind.
    """
    if kind not in REPORT_KINDS:
        raise ValueError(f"Unknown report kind: {kind}")
    data = RunData(out_dir)
    logger.info(f"Generating {kind} report for {out_dir}")
    if kind == "metrics":
        return _report_metrics(data)
    if kind == "payoff-plane":
        return _report_payoff_plane(data)
    if kind == "trajectories":
        return _report_trajectories(data)
    if kind == "tau":
        return _report_tau(data)
    if kind == "lexical":
        return _report_lexical(data)
    return _report_contrasts(data, RunData(baseline_dir) if baseline_dir else None)


def run_summary(out_dir: str) -> str:
    """Text summary of a finished run, with metrics where computable."""
    data = RunData(out_dir)
    reports = {}
    episodes = data.episodes()
    if episodes:
        reports["direct"] = direct_report(episodes).to_dict()
    outcomes = data.outcomes()
    if outcomes:
        reports["reputation"] = reputation_report(outcomes).to_dict()
    dyads = data.society()
    if dyads:
        reports["society"] = society_report(dyads).to_dict()
    return generate_text_summary(data.manifest, reports)
