"""Experiment configuration files, manifests, and run-directory locks.

Configs are INI-style text with one section per component; every key maps
onto a dataclass field, unknown sections or keys are rejected by name, and
a saved config re-runs bit-identically (all randomness derives from the
single seed).  Each command writes a manifest recording the config hash,
seed, and sha256 of every input and output file.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .classifier import ClassifierConfig
from .decoding import BeamConfig
from .encoder import EncoderConfig
from .summarizer import ConditioningWeights, SummarizerConfig
from .synthetic import SyntheticConfig


class ConfigFileError(ValueError):
    pass


@dataclass
class ExperimentMeta:
    seed: int = 7
    train_clusters: int = 24
    val_clusters: int = 6
    test_clusters: int = 6
    target_class: int = 0


@dataclass
class DataSection:
    source: str = "synthetic"  # or "jsonl"
    train_path: str = ""
    val_path: str = ""
    test_path: str = ""


@dataclass
class SummarizerSection:
    decoder_layers: int = 2
    max_summary_tokens: int = 64
    lr: float = 1e-3
    epochs: int = 40
    fusion_top_k: int = 50


@dataclass
class ExperimentConfig:
    experiment: ExperimentMeta = field(default_factory=ExperimentMeta)
    data: DataSection = field(default_factory=DataSection)
    corpus: SyntheticConfig = field(default_factory=SyntheticConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    summarizer: SummarizerSection = field(default_factory=SummarizerSection)
    conditioning: ConditioningWeights = field(default_factory=ConditioningWeights)
    beam: BeamConfig = field(default_factory=BeamConfig)

    def summarizer_config(self) -> SummarizerConfig:
        s = self.summarizer
        return SummarizerConfig(
            encoder=replace(self.encoder),
            decoder_layers=s.decoder_layers,
            max_summary_tokens=s.max_summary_tokens,
            lr=s.lr,
            epochs=s.epochs,
            fusion_top_k=s.fusion_top_k,
        )

    def to_text(self) -> str:
        lines = []
        for section_field in fields(self):
            section = getattr(self, section_field.name)
            lines.append(f"[{section_field.name}]")
            for f in fields(section):
                lines.append(f"{f.name} = {getattr(section, f.name)}")
            lines.append("")
        return "\n".join(lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _parse_value(raw: str, kind: type):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigFileError(f"expected boolean, got {raw!r}")
    return kind(raw)


def load_config(path: str | Path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigFileError(f"config file not found: {path}")
    config = ExperimentConfig()
    known_sections = {f.name: getattr(config, f.name) for f in fields(config)}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigFileError(f"unknown config section [{section}]")
        target = known_sections[section]
        known_keys = {f.name: f for f in fields(target)}
        for key, raw in parser.items(section):
            if key not in known_keys:
                raise ConfigFileError(f"unknown config key [{section}] {key}")
            kind = type(getattr(target, key))
            try:
                setattr(target, key, _parse_value(raw, kind))
            except (TypeError, ValueError) as exc:
                raise ConfigFileError(f"bad value for [{section}] {key}: {raw!r} ({exc})") from exc
    # re-validate invariants that dataclass __post_init__ checked at defaults
    for name in ("encoder", "conditioning", "beam"):
        section = getattr(config, name)
        section.__post_init__()
    return config


def apply_overrides(config: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Apply ``section.key=value`` command-line overrides in place."""
    for dotted, raw in overrides.items():
        if "." not in dotted:
            raise ConfigFileError(f"override must look like section.key, got {dotted!r}")
        section_name, key = dotted.split(".", 1)
        section_fields = {f.name for f in fields(config)}
        if section_name not in section_fields:
            raise ConfigFileError(f"unknown config section [{section_name}]")
        target = getattr(config, section_name)
        if key not in {f.name for f in fields(target)}:
            raise ConfigFileError(f"unknown config key [{section_name}] {key}")
        kind = type(getattr(target, key))
        setattr(target, key, _parse_value(raw, kind))
    return config


# ---------------------------------------------------------------------------
# manifests and locks
# ---------------------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    path: str | Path,
    config_hash: str,
    seed: int,
    inputs: list[str | Path],
    outputs: list[str | Path],
) -> None:
    manifest = {
        "config_hash": config_hash,
        "seed": seed,
        "inputs": [{"path": str(p), "sha256": sha256_file(p)} for p in sorted(map(str, inputs))],
        "outputs": [{"path": str(p), "sha256": sha256_file(p)} for p in sorted(map(str, outputs))],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class RunLock:
    """Exclusive ownership of a run directory via an O_EXCL lock file."""

    def __init__(self, directory: str | Path):
        self.path = Path(directory) / ".lock"
        self._fd: int | None = None

    def __enter__(self) -> "RunLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"run directory {self.path.parent} is locked by another process "
                f"(remove {self.path} if stale)"
            ) from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self.path.unlink(missing_ok=True)
