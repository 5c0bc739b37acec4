"""Flat YAML run configuration with strict key and type checking."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from fefakit.dsp import NOISE_KINDS, SpectrogramConfig
from fefakit.exp.corpus import SyntheticCorpusSpec
from fefakit.exp.training import TrainConfig
from fefakit.nn.models import FEFA_MODES, ModelSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # spectrogram
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    window_kind: str = "hann"
    # model
    backbone: str = "vgg_m"
    fefa: str = "none"
    scale_mode: str = "preserve"
    connectivity: str = "full"
    local_window: int = 9
    embedding_dim: int = 32
    se_reduction: int = 4
    # corpus
    n_speakers: int = 8
    utterances_per_speaker: int = 200
    duration_s: float = 1.0
    sample_rate_hz: int = 16000
    harmonics_per_speaker: int = 4
    f0_range_hz: list = field(default_factory=lambda: [120.0, 320.0])
    jitter_pct: float = 3.0
    utterance_noise_snr_db: float = 30.0
    train_fraction: float = 0.8
    corpus_seed: int = 0
    # training (``seed`` drives weight init and batch order)
    epochs: int = 4
    batch_size: int = 32
    base_lr: float = 1e-4
    max_lr: float = 3e-3
    step_size: int = 80
    input_transform: str = "log1p"
    seed: int = 0
    # evaluation and noise sweep
    n_trials: int = 2000
    trial_seed: int = 0
    snr_db_list: list = field(default_factory=lambda: [20.0, 50.0, 100.0])
    noise_dists: list = field(default_factory=lambda: list(NOISE_KINDS))
    noise_seed: int = 0
    sweep_seeds: list = field(default_factory=lambda: [0, 1, 2])
    sweep_variants: list = field(default_factory=lambda: ["none", "single"])

    def __post_init__(self):
        try:
            self.spectrogram_config()
            self.corpus_spec().check_nyquist()
            self.model_spec()
            self.train_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_trials < 2 or self.n_trials % 2:
            raise ConfigError("n_trials must be an even number >= 2")
        if not self.snr_db_list or any(math.isnan(s) for s in self.snr_db_list):
            raise ConfigError("snr_db_list must be a non-empty list of numbers")
        bad = [d for d in self.noise_dists if d not in NOISE_KINDS]
        if bad or not self.noise_dists:
            raise ConfigError(f"noise_dists must be drawn from {NOISE_KINDS}, got {bad}")
        if not self.sweep_seeds:
            raise ConfigError("sweep_seeds must not be empty")
        bad = [v for v in self.sweep_variants if v not in FEFA_MODES]
        if bad or not self.sweep_variants:
            raise ConfigError(f"sweep_variants must be drawn from {FEFA_MODES}, got {bad}")

    def spectrogram_config(self) -> SpectrogramConfig:
        return SpectrogramConfig(self.window_ms, self.hop_ms, self.fft_size, self.window_kind)

    def corpus_spec(self) -> SyntheticCorpusSpec:
        return SyntheticCorpusSpec(
            self.n_speakers, self.utterances_per_speaker, self.duration_s, self.sample_rate_hz,
            self.harmonics_per_speaker, tuple(self.f0_range_hz), self.jitter_pct,
            self.utterance_noise_snr_db, self.train_fraction, self.corpus_seed)

    def model_spec(self, fefa=None, seed=None) -> ModelSpec:
        return ModelSpec(
            backbone=self.backbone, fefa=self.fefa if fefa is None else fefa,
            scale_mode=self.scale_mode, connectivity=self.connectivity,
            local_window=self.local_window, n_classes=self.n_speakers,
            embedding_dim=self.embedding_dim, input_bins=self.fft_size // 2 + 1,
            se_reduction=self.se_reduction, seed=self.seed if seed is None else seed)

    def train_config(self, seed=None) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.base_lr, self.max_lr,
                           self.step_size, self.seed if seed is None else seed,
                           self.input_transform)

    def to_dict(self):
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _coerce(name, value, default):
    """Check ``value`` against the type of the field default."""
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{name}: booleans are not accepted")
    if isinstance(default, float):
        if isinstance(value, str) and value.lower() in ("inf", "+inf", ".inf"):
            return math.inf
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        if default and len({type(d) for d in default}) == 1:
            return [_coerce(f"{name}[{i}]", v, default[0]) for i, v in enumerate(value)]
        return list(value)
    raise ConfigError(f"{name}: unsupported field type")


def config_from_dict(data: dict | None) -> RunConfig:
    """Build a :class:`RunConfig`; unknown keys and wrong types raise ``ConfigError``."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(map(str, unknown))}")
    values = {k: _coerce(k, v, getattr(defaults, k)) for k, v in data.items()}
    if "f0_range_hz" in values and len(values["f0_range_hz"]) != 2:
        raise ConfigError("f0_range_hz needs exactly two values")
    return replace(defaults, **values)


def load_config(path=None, seed=None) -> RunConfig:
    """Read a YAML config (or the defaults when ``path`` is None); ``seed`` overrides."""
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    cfg = config_from_dict(data)
    return replace(cfg, seed=seed) if seed is not None else cfg
