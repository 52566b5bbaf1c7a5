"""
Configuration handling for Dilemma Bench.
"""

import copy
import hashlib
import json
import os
from typing import List

import yaml

from dilemma_bench.agents import build_scripted_agent
from dilemma_bench.exceptions import ConfigInvalid

SCHEMA_VERSION = 1
EXPERIMENTS = ("direct", "reputation", "society")
SECTIONS = ("agent", "direct", "reputation", "society", "sampling", "gateway", "prompts", "decision", "analysis")


def load_config(config_path):
    """
    Load an experiment configuration from a JSON (or YAML) file.

    Args:
        config_path (str): Path to the configuration file.

    Returns:
        dict: Configuration dictionary.

    Raises:
        FileNotFoundError: If the configuration file does not exist.
        ConfigInvalid: If the file cannot be parsed or is not a mapping.
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        try:
            config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigInvalid([f"Error parsing configuration file: {e}"])
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigInvalid(["Configuration must be a mapping"])
    return config


def get_default_config():
    """
    Get the default configuration.

    Returns:
        dict: Default configuration dictionary.
    """
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": "direct",
        "seed": 0,
        "concurrency": 8,
        "agent": {
            "kind": "scripted",
            "strategy": "TFT",
            "endpoint": None,
            "model_class": "instruction_tuned",
            "persona": "RP",
        },
        "direct": {
            "conditions": ["ES", "EM", "GM", "GS"],
            "horizon": 30,
            "episodes": 50,
            "framing": "baseline",
        },
        "reputation": {
            "trials_file": None,
            "trial_seed": None,
        },
        "society": {
            "n_agents": 5,
            "horizon": 10,
            "episodes": 10,
            "rc_fraction": 0.4,
            "framing": "baseline",
            "history_format": "full",
            "shuffle_history": True,
            "members": None,
        },
        "sampling": {
            "temperature": 0.6,
            "top_p": 0.95,
            "top_k": 20,
            "max_tokens": 4096,
            "context_limit": 32768,
        },
        "gateway": {
            "timeout": 120.0,
            "max_attempts": 5,
            "backoff_base": 1.0,
            "backoff_max": 60.0,
        },
        "prompts": {
            "long_horizon_placement": "user",
        },
        "decision": {
            "max_parse_retries": 2,
        },
        "analysis": {
            "draws": 10000,
            "ci_level": 0.95,
            "profile_draws": 2000,
            "lexicon_file": None,
        },
        "zd_table": None,
    }


def merge_configs(default_config, user_config):
    """
    Merge the user configuration over the default configuration.

    Nested mappings are merged key by key; other values replace the default.

    Args:
        default_config (dict): Default configuration dictionary.
        user_config (dict): User configuration dictionary.

    Returns:
        dict: Merged configuration dictionary.
    """
    merged_config = copy.deepcopy(default_config)

    for key, value in user_config.items():
        if isinstance(merged_config.get(key), dict) and isinstance(value, dict):
            merged_config[key] = merge_configs(merged_config[key], value)
        else:
            merged_config[key] = copy.deepcopy(value)

    return merged_config


def experiments_of(config) -> List[str]:
    experiment = config.get("experiment")
    if isinstance(experiment, str):
        return [experiment]
    return list(experiment or [])


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _validate_agent(agent, where: str, problems: List[str]) -> None:
    if not isinstance(agent, dict):
        problems.append(f"{where} must be a mapping")
        return
    kind = agent.get("kind")
    if kind == "scripted":
        strategy = agent.get("strategy")
        if not isinstance(strategy, str) or not strategy:
            problems.append(f"{where}.strategy is required for scripted agents")
        else:
            try:
                build_scripted_agent(strategy)
            except ValueError as e:
                problems.append(f"{where}.strategy: {e}")
    elif kind == "remote":
        endpoint = agent.get("endpoint")
        if not isinstance(endpoint, dict) or not endpoint.get("base_url") or not endpoint.get("model_id"):
            problems.append(f"{where}.endpoint needs base_url and model_id")
        elif not str(endpoint["base_url"]).startswith(("http://", "https://")):
            problems.append(f"{where}.endpoint.base_url must be an absolute http(s) URL")
        if agent.get("model_class", "instruction_tuned") not in ("instruction_tuned", "reasoning"):
            problems.append(f"{where}.model_class must be instruction_tuned or reasoning")
    else:
        problems.append(f"{where}.kind must be scripted or remote, got {kind!r}")
    if agent.get("persona", "RP") not in ("RP", "RC"):
        problems.append(f"{where}.persona must be RP or RC")
    if agent.get("framing", "baseline") not in ("baseline", "long_horizon"):
        problems.append(f"{where}.framing must be baseline or long_horizon")


def validate_config(config) -> List[str]:
    """
    Check a merged configuration.

    Args:
        config (dict): Merged configuration dictionary.

    Returns:
        List[str]: Human-readable problems; empty when the config is valid.
    """
    problems: List[str] = []

    for section in SECTIONS:
        if not isinstance(config.get(section), dict):
            problems.append(f"{section} must be a mapping")
    if problems:
        return problems

    if config.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version must be {SCHEMA_VERSION}, got {config.get('schema_version')!r}")

    experiments = experiments_of(config)
    if not experiments:
        problems.append("experiment must name at least one of direct, reputation, society")
    for name in experiments:
        if name not in EXPERIMENTS:
            problems.append(f"Unknown experiment: {name!r}")

    if not _is_int(config.get("seed")) or config["seed"] < 0:
        problems.append("seed must be a non-negative integer")
    if not _is_int(config.get("concurrency")) or config["concurrency"] < 1:
        problems.append("concurrency must be an integer >= 1")

    _validate_agent(config.get("agent"), "agent", problems)

    direct = config.get("direct", {})
    for key in ("horizon", "episodes"):
        if not _is_int(direct.get(key)) or direct[key] < 1:
            problems.append(f"direct.{key} must be an integer >= 1")
    conditions = direct.get("conditions") or []
    if not conditions:
        problems.append("direct.conditions must not be empty")
    for condition in conditions:
        if str(condition).upper() not in ("ES", "EM", "GM", "GS"):
            problems.append(f"Unknown ZD condition: {condition!r}")
    if direct.get("framing", "baseline") not in ("baseline", "long_horizon"):
        problems.append("direct.framing must be baseline or long_horizon")

    reputation = config.get("reputation", {})
    trial_seed = reputation.get("trial_seed")
    if trial_seed is not None and (not _is_int(trial_seed) or trial_seed < 0):
        problems.append("reputation.trial_seed must be a non-negative integer")

    society = config.get("society", {})
    if not _is_int(society.get("n_agents")) or society["n_agents"] < 2:
        problems.append("society.n_agents must be an integer >= 2")
    for key in ("horizon", "episodes"):
        if not _is_int(society.get(key)) or society[key] < 1:
            problems.append(f"society.{key} must be an integer >= 1")
    if not _is_number(society.get("rc_fraction")) or not 0.0 <= society["rc_fraction"] <= 1.0:
        problems.append("society.rc_fraction must lie in [0, 1]")
    if society.get("history_format") not in ("full", "counts"):
        problems.append("society.history_format must be full or counts")
    if society.get("framing", "baseline") not in ("baseline", "long_horizon"):
        problems.append("society.framing must be baseline or long_horizon")
    members = society.get("members")
    if members is not None:
        if not isinstance(members, list) or len(members) != society.get("n_agents"):
            problems.append("society.members must list exactly n_agents agents")
        else:
            for i, member in enumerate(members):
                _validate_agent(member, f"society.members[{i}]", problems)

    sampling = config.get("sampling", {})
    for key in ("temperature", "top_p"):
        if not _is_number(sampling.get(key)) or sampling[key] < 0:
            problems.append(f"sampling.{key} must be a non-negative number")
    for key in ("top_k", "max_tokens", "context_limit"):
        if not _is_int(sampling.get(key)) or sampling[key] < 1:
            problems.append(f"sampling.{key} must be an integer >= 1")

    gateway = config.get("gateway", {})
    if not _is_int(gateway.get("max_attempts")) or gateway["max_attempts"] < 1:
        problems.append("gateway.max_attempts must be an integer >= 1")
    for key in ("timeout", "backoff_base", "backoff_max"):
        if not _is_number(gateway.get(key)) or gateway[key] < 0:
            problems.append(f"gateway.{key} must be a non-negative number")

    if config.get("prompts", {}).get("long_horizon_placement") not in ("user", "system"):
        problems.append("prompts.long_horizon_placement must be user or system")

    retries = config.get("decision", {}).get("max_parse_retries")
    if not _is_int(retries) or retries < 0:
        problems.append("decision.max_parse_retries must be a non-negative integer")

    analysis = config.get("analysis", {})
    if not _is_int(analysis.get("draws")) or analysis["draws"] < 1000:
        problems.append("analysis.draws must be an integer >= 1000")
    if not _is_int(analysis.get("profile_draws")) or analysis["profile_draws"] < 1:
        problems.append("analysis.profile_draws must be an integer >= 1")
    if not _is_number(analysis.get("ci_level")) or not 0.0 < analysis["ci_level"] < 1.0:
        problems.append("analysis.ci_level must lie in (0, 1)")

    return problems


def resolve_config(config_path, overrides=None):
    """
    Load, merge with defaults, apply overrides and validate.

    Args:
        config_path (str): Path to the configuration file.
        overrides (dict, optional): Top-level values from the command line.

    Returns:
        dict: Validated configuration.

    Raises:
        FileNotFoundError: If the configuration file does not exist.
        ConfigInvalid: If validation fails.
    """
    config = merge_configs(get_default_config(), load_config(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            config[key] = value
    problems = validate_config(config)
    if problems:
        raise ConfigInvalid(problems)
    return config


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
