"""
Run profiles: the YAML files in config/ plus an optional user config file.

Precedence, lowest first: built-in profile, `--config` file, explicit CLI
flags. A config file may be YAML or JSON (JSON parses as YAML) and either
keyed by family id like the profiles or flat (applied to every family).
"""
from adapters.families.registry import FAMILIES
import copy
from interfaces.errors import ConfigError
from pathlib import Path
from typing import Any, Dict, Optional, Union
import yaml

PROFILE_DIR = Path(__file__).resolve().parent.parent / "config"
PROFILES = ("desk", "paper")
SECTIONS = ("generate", "train")


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file {path} does not exist")
    try:
        data = yaml.load(path.read_text(), Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse {path}: {e}")
    if data is None:
        return dict()
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping, got {type(data).__name__}")
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; values of `override` win."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_profile(
    profile: str, family_id: str, config_file: Optional[Union[str, Path]] = None
) -> Dict[str, Dict[str, Any]]:
    """
    Settings of one family under a profile, with the config file applied.

    Returns:
        settings: {"generate": {...}, "train": {...}}
    """
    if profile not in PROFILES:
        raise ConfigError(f"Unknown profile {profile!r}; expected one of {PROFILES}")
    profiles = load_yaml(PROFILE_DIR / f"{profile}.yaml")
    if family_id not in profiles:
        raise ConfigError(f"Profile {profile!r} has no section for family {family_id!r}")
    settings = deep_merge({s: {} for s in SECTIONS}, profiles[family_id])
    if config_file is not None:
        user = load_yaml(config_file)
        if set(user) & set(FAMILIES):
            user = user.get(family_id, {})
        unknown = set(user) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown config sections {sorted(unknown)}; expected {SECTIONS}")
        settings = deep_merge(settings, user)
    return settings


def apply_flags(section: Dict[str, Any], **flags: Any) -> Dict[str, Any]:
    """Overrides settings with every flag that was given (not None)."""
    out = copy.deepcopy(section)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out
