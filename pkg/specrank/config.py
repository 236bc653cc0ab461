import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from dotenv import load_dotenv

from specrank.conditions import parse_conditions
from specrank.errors import MissingArtifact, ValidationError
from specrank.scoring.scorer import ScorerConfig

# Load environment variables from .env file
load_dotenv()


class Config:
    # Generation service (variant-gen). The token is never written to outputs.
    GEN_TOKEN = os.getenv('SPECRANK_GEN_TOKEN')
    GEN_ENDPOINT = os.getenv('SPECRANK_GEN_ENDPOINT')

    # Remote embedding service (compat-scorer)
    EMBED_ENDPOINT = os.getenv('SPECRANK_EMBED_ENDPOINT')
    EMBED_TOKEN = os.getenv('SPECRANK_EMBED_TOKEN')

    LOG_LEVEL = os.getenv('SPECRANK_LOG_LEVEL', 'INFO').upper()
    THREADS = int(os.getenv('SPECRANK_THREADS', '4'))


def get_generation_token() -> Optional[str]:
    """Read SPECRANK_GEN_TOKEN at call time so tests and shells can set it late"""
    return os.getenv('SPECRANK_GEN_TOKEN') or Config.GEN_TOKEN


# ========== Run Configuration ==========

@dataclass(frozen=True)
class PathsConfig:
    manifest: Optional[str] = None
    image_embeddings: Optional[str] = None
    text_embeddings: Optional[str] = None
    trials: Optional[str] = None
    specificity_trials: Optional[str] = None
    out_dir: str = 'specrank_out'


@dataclass(frozen=True)
class RankOptions:
    block_rows: int = 256
    subsample: Optional[int] = None
    seed: int = 0


@dataclass(frozen=True)
class StatsOptions:
    reference: str = 'original'
    bin_width: int = 10
    min_bin_count: int = 10
    trim: Tuple[float, float] = (2.5, 97.5)
    n_resamples: int = 2000
    level: float = 0.95
    seed: int = 0


@dataclass(frozen=True)
class GenerationOptions:
    endpoint: Optional[str] = None
    model: str = 'gpt-4o-mini'
    temperature: Optional[float] = None
    parallelism: int = 4
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    rank: RankOptions = field(default_factory=RankOptions)
    stats: StatsOptions = field(default_factory=StatsOptions)
    generation: GenerationOptions = field(default_factory=GenerationOptions)
    conditions: Tuple[str, ...] = ()
    # Execution-only settings (with paths.out_dir) stay out of the checksum
    threads: int = 4
    quiet: bool = False

    def to_dict(self, include_runtime: bool = True) -> Dict:
        data = asdict(self)
        if not include_runtime:
            data.pop('threads')
            data.pop('quiet')
            data['paths'].pop('out_dir')
        return data

    def checksum(self) -> str:
        """SHA-256 over every result-affecting setting in canonical JSON form"""
        canonical = json.dumps(self.to_dict(include_runtime=False), sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def seeds(self) -> Dict[str, int]:
        return {
            'rank_seed': self.rank.seed,
            'stats_seed': self.stats.seed,
            'generation_seed': self.generation.seed,
        }

    def provenance(self) -> Dict:
        """Header fields recorded in every output artifact"""
        return {'config_sha256': self.checksum(), **self.seeds()}

    def require_paths(self, *names: str) -> None:
        """
        Validate that the named input paths are set and exist

        Raises:
            ValidationError: path not configured
            MissingArtifact: path configured but absent
        """
        for name in names:
            value = getattr(self.paths, name)
            if not value:
                raise ValidationError(f"Missing required path '{name}' (set it in [paths] or by flag)")
            if not Path(value).exists():
                raise MissingArtifact(f"{name} not found: {value}")


def _to_bool(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ('true', '1', 'yes', 'on'):
        return True
    if lowered in ('false', '0', 'no', 'off'):
        return False
    raise ValidationError(f"Expected a boolean, got {value!r}")


def _to_optional_int(value: str) -> Optional[int]:
    if value is None or str(value).strip().lower() in ('', 'none'):
        return None
    return int(value)


def _to_optional_float(value: str) -> Optional[float]:
    if value is None or str(value).strip().lower() in ('', 'none'):
        return None
    return float(value)


def _to_optional_str(value: str) -> Optional[str]:
    if value is None or str(value).strip() == '':
        return None
    return str(value).strip()


def _to_trim(value) -> Tuple[float, float]:
    if isinstance(value, (tuple, list)):
        parts = list(value)
    else:
        parts = [p for p in str(value).replace(' ', '').split(',') if p]
    if len(parts) != 2:
        raise ValidationError(f"trim needs two percentiles 'low,high', got {value!r}")
    low, high = float(parts[0]), float(parts[1])
    if not 0.0 <= low < high <= 100.0:
        raise ValidationError(f"trim percentiles must satisfy 0 <= low < high <= 100, got {value!r}")
    return (low, high)


# section -> key -> converter
_SCHEMA = {
    'paths': {
        'manifest': _to_optional_str,
        'image_embeddings': _to_optional_str,
        'text_embeddings': _to_optional_str,
        'trials': _to_optional_str,
        'specificity_trials': _to_optional_str,
        'out_dir': str,
    },
    'scorer': {
        'weight_w': float,
        'clamp_at_zero': _to_bool,
        'token_limit': _to_optional_int,
        'backend': str,
        'endpoint': _to_optional_str,
        'batch_size': int,
        'max_in_flight': int,
        'timeout': float,
    },
    'rank': {
        'block_rows': int,
        'subsample': _to_optional_int,
        'seed': int,
    },
    'stats': {
        'reference': str,
        'bin_width': int,
        'min_bin_count': int,
        'trim': _to_trim,
        'n_resamples': int,
        'level': float,
        'seed': int,
    },
    'generation': {
        'endpoint': _to_optional_str,
        'model': str,
        'temperature': _to_optional_float,
        'parallelism': int,
        'seed': int,
    },
    'run': {
        'conditions': lambda v: tuple(parse_conditions(v)),
        'threads': int,
        'quiet': _to_bool,
    },
}


def _coerce(section: str, key: str, value):
    converters = _SCHEMA.get(section)
    if converters is None:
        raise ValidationError(f"Unknown config section [{section}]")
    if key not in converters:
        raise ValidationError(f"Unknown config key '{key}' in [{section}]")
    try:
        return converters[key](value)
    except ValidationError:
        raise
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Bad value for {section}.{key}: {value!r} ({e})")


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """
    Build a RunConfig from an optional sectioned config file and flag overrides

    Args:
        path: Path to a key=value file with [paths]/[scorer]/[rank]/[stats]/[generation]/[run] sections
        overrides: Mapping of 'section.key' -> value; flags win over the file.
            None values are ignored so unset flags never clobber file settings.

    Returns:
        Fully validated RunConfig
    """
    values: Dict[str, Dict[str, object]] = {section: {} for section in _SCHEMA}

    if path:
        if not Path(path).exists():
            raise MissingArtifact(f"Config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.read(path, encoding='utf-8')
        for section in parser.sections():
            for key, raw in parser.items(section):
                values.setdefault(section, {})[key] = _coerce(section, key, raw)

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition('.')
        values[section][key] = _coerce(section, key, value)

    run = values.pop('run')
    try:
        config = RunConfig(
            paths=PathsConfig(**values['paths']),
            scorer=ScorerConfig(**values['scorer']),
            rank=RankOptions(**values['rank']),
            stats=StatsOptions(**values['stats']),
            generation=GenerationOptions(**values['generation']),
            conditions=run.get('conditions', ()),
            threads=run.get('threads', Config.THREADS),
            quiet=run.get('quiet', False),
        )
    except TypeError as e:
        raise ValidationError(str(e))

    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    if config.threads < 1:
        raise ValidationError("threads must be >= 1")
    if config.rank.block_rows < 1:
        raise ValidationError("rank.block_rows must be >= 1")
    if config.rank.subsample is not None and config.rank.subsample < 2:
        raise ValidationError("rank.subsample must be >= 2")
    if config.stats.bin_width < 1:
        raise ValidationError("stats.bin_width must be >= 1")
    if config.stats.min_bin_count < 1:
        raise ValidationError("stats.min_bin_count must be >= 1")
    if not 0.0 < config.stats.level < 1.0:
        raise ValidationError("stats.level must be in (0, 1)")
    if config.stats.n_resamples < 1:
        raise ValidationError("stats.n_resamples must be >= 1")
    if config.generation.parallelism < 1:
        raise ValidationError("generation.parallelism must be >= 1")
    parse_conditions([config.stats.reference])

