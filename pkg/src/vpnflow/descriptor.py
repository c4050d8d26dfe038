"""Text pipeline descriptors.

Example::

    vpnflow-pipeline 1
    method=score
    arch=mlp
    net1=model.nnmd
    net2=model.net2.nnmd
    lambda=0.5
    mu=0.9
    eta=1.0
    delta=0.1
    seed=1
    test_frac=0.2
    label.0=Chat
    ...
    label.5=VPN

Model paths are relative to the descriptor's directory unless absolute.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from vpnflow.decision import Method, Pipeline, Thresholds
from vpnflow.errors import ConfigError, DatasetFormatError, VpnflowError
from vpnflow.ingest import LABEL_NAMES
from vpnflow.neural.modelio import read_model

HEADER = "vpnflow-pipeline"
VERSION = 1


class ModelFileError(VpnflowError):
    def __init__(self, path, reason):
        self.path = os.fspath(path)
        super().__init__(f"{self.path}: {reason}")


@dataclass(frozen=True)
class PipelineDescriptor:
    method: Method
    net1: str
    net2: str
    thresholds: Thresholds = Thresholds()
    arch: str = "mlp"
    seed: int = 0
    test_fraction: float = 0.2
    labels: tuple[str, ...] = field(default=LABEL_NAMES)

    def to_text(self) -> str:
        t = self.thresholds
        lines = [
            f"{HEADER} {VERSION}",
            f"method={self.method.value}",
            f"arch={self.arch}",
            f"net1={self.net1}",
            f"net2={self.net2}",
            f"lambda={t.lam!r}",
            f"mu={t.mu!r}",
            f"eta={t.eta!r}",
            f"delta={t.delta!r}",
            f"seed={self.seed}",
            f"test_frac={self.test_fraction!r}",
        ]
        lines += [f"label.{i}={name}" for i, name in enumerate(self.labels)]
        return "\n".join(lines) + "\n"


def parse_descriptor(text: str) -> PipelineDescriptor:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0].split()[0] != HEADER:
        raise DatasetFormatError(f"not a pipeline descriptor (expected '{HEADER} {VERSION}' header)")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise DatasetFormatError("pipeline descriptor header has no version") from None
    if version != VERSION:
        raise DatasetFormatError(f"unsupported pipeline descriptor version {version}")
    kv = {}
    for ln in lines[1:]:
        if "=" not in ln:
            raise DatasetFormatError(f"bad descriptor line {ln!r}")
        k, v = ln.split("=", 1)
        kv[k.strip()] = v.strip()
    try:
        labels = tuple(kv.get(f"label.{i}", LABEL_NAMES[i]) for i in range(len(LABEL_NAMES)))
        return PipelineDescriptor(
            method=Method(kv["method"]),
            net1=kv["net1"],
            net2=kv["net2"],
            thresholds=Thresholds(
                lam=float(kv.get("lambda", 0.5)), mu=float(kv.get("mu", 0.9)),
                eta=float(kv.get("eta", 1.0)), delta=float(kv.get("delta", 0.1)),
            ),
            arch=kv.get("arch", "mlp"),
            seed=int(kv.get("seed", 0)),
            test_fraction=float(kv.get("test_frac", 0.2)),
            labels=labels,
        )
    except KeyError as exc:
        raise DatasetFormatError(f"pipeline descriptor is missing {exc.args[0]!r}") from None
    except ValueError as exc:
        raise DatasetFormatError(f"bad value in pipeline descriptor: {exc}") from None


def read_descriptor(path) -> PipelineDescriptor:
    with open(path) as fh:
        return parse_descriptor(fh.read())


def write_descriptor(desc: PipelineDescriptor, path) -> None:
    with open(path, "w") as fh:
        fh.write(desc.to_text())


def _load_net(base: Path, name: str):
    path = Path(name) if os.path.isabs(name) else base / name
    if not path.is_file():
        raise ModelFileError(path, "model file not found")
    try:
        return read_model(path)
    except DatasetFormatError as exc:
        raise ModelFileError(path, str(exc)) from None


def load_pipeline(path) -> tuple[Pipeline, PipelineDescriptor]:
    """Read a descriptor and both model files it names."""
    desc = read_descriptor(path)
    base = Path(path).resolve().parent
    net1 = _load_net(base, desc.net1)
    net2 = _load_net(base, desc.net2)
    try:
        pipeline = Pipeline(desc.method, net1, net2, desc.thresholds)
    except ConfigError as exc:
        raise ConfigError(f"{os.fspath(path)}: {exc}") from None
    return pipeline, desc
