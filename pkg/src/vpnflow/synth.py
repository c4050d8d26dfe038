"""Deterministic synthetic flows for desk-scale end-to-end runs.

Labels 0..4 draw each byte from a rounded, clipped Gaussian around a
sinusoidal per-position mean and then stamp a class motif every ``period``
bytes (with a per-sample random offset of up to ``jitter``). Label 5 (VPN)
is i.i.d. uniform over 0..255 with no motif.

Every sample owns a Philox counter-based stream keyed by
``(seed << 64) | (label << 32) | index``, so any sample can be regenerated
independently of the others. Samples are emitted grouped by label, in
label order, each group in index order.

Override file schema (``key=value`` per line, ``#`` comments)::

    seed=42
    count=2000              # all classes
    count.5=500             # one class
    class.3.sigma=60
    class.3.min_len=784
    class.3.max_len=4000
    class.3.mean_base=150
    class.3.mean_amp=30
    class.3.mean_wavelength=40
    class.3.mean_phase=3.0
    class.3.motif_period=17
    class.3.motif=47400010   # hex bytes
    class.3.motif_jitter=3
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from vpnflow.errors import ConfigError
from vpnflow.ingest import FEATURE_LEN, N_LABELS, VPN_LABEL, LabeledSample, featurize


@dataclass(frozen=True)
class ClassProfile:
    label: int
    min_len: int
    max_len: int
    uniform: bool = False
    mean_base: float = 128.0
    mean_amp: float = 0.0
    mean_wavelength: float = 64.0
    mean_phase: float = 0.0
    sigma: float = 40.0
    motif_period: int = 0
    motif: bytes = b""
    motif_jitter: int = 0

    def __post_init__(self):
        if not 0 <= self.label < N_LABELS:
            raise ConfigError(f"profile label {self.label} outside 0..5")
        if not 0 <= self.min_len <= self.max_len:
            raise ConfigError(f"class {self.label}: need 0 <= min_len <= max_len")
        if self.label == VPN_LABEL and (not self.uniform or self.motif):
            raise ConfigError("the VPN profile must be uniform with no motif")
        if not self.uniform:
            lo, hi = self.mean_base - abs(self.mean_amp), self.mean_base + abs(self.mean_amp)
            if lo < 0 or hi > 255:
                raise ConfigError(f"class {self.label}: per-position means leave 0..255")
            if self.sigma < 0:
                raise ConfigError(f"class {self.label}: sigma must be >= 0")
        if self.motif and self.motif_period < 1:
            raise ConfigError(f"class {self.label}: a motif needs motif_period >= 1")

    def position_means(self, n: int) -> np.ndarray:
        pos = np.arange(n)
        return self.mean_base + self.mean_amp * np.sin(
            2 * np.pi * pos / self.mean_wavelength + self.mean_phase
        )


def default_profiles() -> tuple[ClassProfile, ...]:
    """The stable default profile set; motif periods 7, 11, 13, 17, 19 for labels 0..4."""
    return (
        ClassProfile(0, 120, 700, mean_base=96, mean_amp=40, mean_wavelength=50, mean_phase=0.0,
                     sigma=45, motif_period=7, motif=b"\x17\x03", motif_jitter=1),
        ClassProfile(1, 300, 1500, mean_base=140, mean_amp=50, mean_wavelength=90, mean_phase=1.0,
                     sigma=45, motif_period=11, motif=b"\x0d\x0a\x2e", motif_jitter=2),
        ClassProfile(2, 500, 2000, mean_base=110, mean_amp=60, mean_wavelength=130, mean_phase=2.0,
                     sigma=50, motif_period=13, motif=b"\xff\x00", motif_jitter=2),
        ClassProfile(3, 784, 4000, mean_base=160, mean_amp=35, mean_wavelength=40, mean_phase=3.0,
                     sigma=50, motif_period=17, motif=b"\x47\x40\x00\x10", motif_jitter=3),
        ClassProfile(4, 160, 600, mean_base=128, mean_amp=45, mean_wavelength=25, mean_phase=4.0,
                     sigma=40, motif_period=19, motif=b"\x80\x00", motif_jitter=1),
        ClassProfile(5, 200, 2000, uniform=True),
    )


@dataclass(frozen=True)
class SynthConfig:
    counts: tuple[int, ...] = (2000,) * N_LABELS
    seed: int = 42
    profiles: tuple[ClassProfile, ...] = field(default_factory=default_profiles)

    def __post_init__(self):
        if len(self.counts) != N_LABELS or any(c < 0 for c in self.counts):
            raise ConfigError("counts must be 6 non-negative integers")
        if len(self.profiles) != N_LABELS or [p.label for p in self.profiles] != list(range(N_LABELS)):
            raise ConfigError("need exactly 6 profiles, one per label, in label order")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def sample_rng(seed: int, label: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | (label << 32) | index))


def generate_payload(profile: ClassProfile, rng: np.random.Generator) -> bytes:
    length = int(rng.integers(profile.min_len, profile.max_len + 1))
    if profile.uniform:
        return rng.integers(0, 256, size=length, dtype=np.uint8).tobytes()
    noisy = rng.normal(profile.position_means(length), profile.sigma)
    data = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    if profile.motif and length:
        offset = int(rng.integers(0, profile.motif_jitter + 1))
        motif = np.frombuffer(profile.motif, dtype=np.uint8)
        for start in range(offset, length, profile.motif_period):
            end = min(start + motif.size, length)
            data[start:end] = motif[: end - start]
    return data.tobytes()


def generate_payloads(cfg: SynthConfig):
    """Yield ``(label, payload bytes)`` in output order."""
    for profile, count in zip(cfg.profiles, cfg.counts):
        for k in range(count):
            yield profile.label, generate_payload(profile, sample_rng(cfg.seed, profile.label, k))


def generate(cfg: SynthConfig | None = None) -> list[LabeledSample]:
    cfg = cfg or SynthConfig()
    return [LabeledSample(featurize(payload), label) for label, payload in generate_payloads(cfg)]


def generate_arrays(cfg: SynthConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Same samples as :func:`generate`, stacked as (raw uint8 (N, 784), labels)."""
    cfg = cfg or SynthConfig()
    n = sum(cfg.counts)
    raw = np.zeros((n, FEATURE_LEN), dtype=np.uint8)
    labels = np.zeros(n, dtype=np.int64)
    for i, (label, payload) in enumerate(generate_payloads(cfg)):
        raw[i] = featurize(payload).raw
        labels[i] = label
    return raw, labels


_PROFILE_FIELDS = {f.name for f in fields(ClassProfile)}


def _coerce(name: str, value: str):
    if name == "motif":
        return bytes.fromhex(value)
    if name == "uniform":
        return value.lower() in ("1", "true", "yes")
    if name in ("min_len", "max_len", "motif_period", "motif_jitter"):
        return int(value)
    return float(value)


def parse_config(text: str, base: SynthConfig | None = None) -> SynthConfig:
    base = base or SynthConfig()
    seed = base.seed
    counts = list(base.counts)
    profiles = list(base.profiles)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        try:
            if key == "seed":
                seed = int(value)
            elif key == "count":
                counts = [int(value)] * N_LABELS
            elif parts[0] == "count" and len(parts) == 2:
                counts[int(parts[1])] = int(value)
            elif parts[0] == "class" and len(parts) == 3 and parts[2] in _PROFILE_FIELDS and parts[2] != "label":
                label = int(parts[1])
                profiles[label] = replace(profiles[label], **{parts[2]: _coerce(parts[2], value)})
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return SynthConfig(tuple(counts), seed, tuple(profiles))


def load_config(path: str | os.PathLike, base: SynthConfig | None = None) -> SynthConfig:
    with open(path) as fh:
        return parse_config(fh.read(), base)
