"""Packet capture parsing, bidirectional flow assembly and 784-byte featurization.

Also holds the FLOW1 dataset format::

    b"FLOW1" | u32 LE sample count N | N * ([u8 label][784 raw feature bytes])

Feature bytes are stored before normalization; readers divide by 255.
"""
from __future__ import annotations

import csv
import enum
import io
import os
import struct
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from typing import BinaryIO, Iterable, Sequence, Union

import numpy as np

from vpnflow import _kernels
from vpnflow.errors import (
    BadMagicError,
    CaptureError,
    LabelRangeError,
    ShortFileError,
    TrailingDataError,
    UnsupportedLinkTypeError,
)

FEATURE_LEN = 784
N_LABELS = 6
LABEL_NAMES = ("Chat", "Email", "Ftp", "Streaming", "Voip", "VPN")
VPN_LABEL = 5

FLOW1_MAGIC = b"FLOW1"
_FLOW1_HEADER = struct.Struct("<5sI")
_RECORD_LEN = 1 + FEATURE_LEN

LINKTYPE_ETHERNET = 1
_PCAP_MAGIC_USEC = 0xA1B2C3D4
_PCAP_MAGIC_NSEC = 0xA1B23C4D

PathOrFile = Union[str, os.PathLike, BinaryIO]


class Protocol(enum.IntEnum):
    TCP = 6
    UDP = 17


@dataclass(frozen=True)
class RawPacket:
    timestamp: tuple[int, int]
    src: tuple[IPv4Address, int]
    dst: tuple[IPv4Address, int]
    protocol: Protocol
    payload: bytes


@dataclass(frozen=True, order=True)
class FlowKey:
    """Direction-free flow identity: endpoint_a <= endpoint_b."""

    endpoint_a: tuple[IPv4Address, int]
    endpoint_b: tuple[IPv4Address, int]
    protocol: Protocol

    def __post_init__(self):
        if self.endpoint_a > self.endpoint_b:
            raise ValueError("FlowKey endpoints must be in canonical order")
        Protocol(self.protocol)

    @classmethod
    def of(cls, packet: RawPacket) -> "FlowKey":
        a, b = sorted((packet.src, packet.dst))
        return cls(a, b, packet.protocol)


@dataclass(frozen=True)
class FlowRecord:
    key: FlowKey
    payload: bytes
    label: int | None = None

    def __post_init__(self):
        if self.label is not None and not 0 <= self.label < N_LABELS:
            raise ValueError(f"label {self.label} outside 0..5")


@dataclass
class Capture:
    """Result of :func:`parse_capture`; iterates over the kept packets."""

    packets: list[RawPacket]
    skipped: int
    link_type: int = LINKTYPE_ETHERNET

    def __iter__(self):
        return iter(self.packets)

    def __len__(self):
        return len(self.packets)

    def __getitem__(self, i):
        return self.packets[i]


@dataclass(frozen=True, eq=False)
class ByteVector:
    """The 784-entry model input. ``raw`` keeps the unnormalized bytes."""

    raw: np.ndarray = field(repr=False)

    def __post_init__(self):
        raw = np.ascontiguousarray(self.raw, dtype=np.uint8)
        if raw.shape != (FEATURE_LEN,):
            raise ValueError(f"ByteVector needs {FEATURE_LEN} entries, got shape {raw.shape}")
        raw.setflags(write=False)
        object.__setattr__(self, "raw", raw)

    @property
    def values(self) -> np.ndarray:
        return self.raw / 255.0

    def __len__(self):
        return FEATURE_LEN

    def __eq__(self, other):
        return isinstance(other, ByteVector) and np.array_equal(self.raw, other.raw)

    __hash__ = None


@dataclass(frozen=True)
class LabeledSample:
    features: ByteVector
    label: int

    def __post_init__(self):
        if not 0 <= int(self.label) < N_LABELS:
            raise ValueError(f"label {self.label} outside 0..5")


def _read_all(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def parse_capture(source, backend: str | None = None) -> Capture:
    """Decode a classic pcap (bytes, path or binary file) into TCP/UDP packets.

    Only Ethernet captures are accepted. Non-IPv4, non-TCP/UDP and
    fragmented frames are skipped and counted in ``Capture.skipped``.
    """
    data = _read_all(source)
    if len(data) < 24:
        raise CaptureError("malformed pcap header: file shorter than 24 bytes")
    magic_le = struct.unpack_from("<I", data)[0]
    magic_be = struct.unpack_from(">I", data)[0]
    if magic_le in (_PCAP_MAGIC_USEC, _PCAP_MAGIC_NSEC):
        big_endian, magic = False, magic_le
    elif magic_be in (_PCAP_MAGIC_USEC, _PCAP_MAGIC_NSEC):
        big_endian, magic = True, magic_be
    else:
        raise CaptureError(f"malformed pcap header: bad magic 0x{magic_le:08x}")
    link_type = struct.unpack_from(">I" if big_endian else "<I", data, 20)[0]
    if link_type != LINKTYPE_ETHERNET:
        raise UnsupportedLinkTypeError(link_type)

    records, skipped = _kernels.scan_records(
        data, 24, big_endian, magic == _PCAP_MAGIC_NSEC, backend=backend
    )
    packets = [
        RawPacket(
            timestamp=(sec, usec),
            src=(IPv4Address(sip), sport),
            dst=(IPv4Address(dip), dport),
            protocol=Protocol(proto),
            payload=data[start:end],
        )
        for _, sec, usec, sip, sport, dip, dport, proto, start, end in records
    ]
    return Capture(packets, skipped, link_type)


def assemble_flows(packets: Iterable[RawPacket], label: int | None = None) -> list[FlowRecord]:
    """Group packets by canonical five-tuple, concatenating payloads in capture order.

    Flows come out in order of first appearance.
    """
    chunks: dict[FlowKey, list[bytes]] = {}
    for pkt in packets:
        chunks.setdefault(FlowKey.of(pkt), []).append(pkt.payload)
    return [FlowRecord(key, b"".join(parts), label) for key, parts in chunks.items()]


def featurize(flow: FlowRecord | bytes) -> ByteVector:
    """First 784 payload bytes, zero-padded. Accepts a FlowRecord or raw bytes."""
    data = flow.payload if isinstance(flow, FlowRecord) else bytes(flow)
    raw = np.zeros(FEATURE_LEN, dtype=np.uint8)
    head = np.frombuffer(data[:FEATURE_LEN], dtype=np.uint8)
    raw[: head.size] = head
    return ByteVector(raw)


def samples_to_arrays(samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (raw uint8 (N, 784), labels int64 (N,))."""
    raw = np.zeros((len(samples), FEATURE_LEN), dtype=np.uint8)
    labels = np.zeros(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        raw[i] = s.features.raw
        labels[i] = s.label
    return raw, labels


def arrays_to_samples(raw: np.ndarray, labels: np.ndarray) -> list[LabeledSample]:
    return [LabeledSample(ByteVector(r), int(l)) for r, l in zip(raw, labels)]


def _encode_flow1(samples: Sequence[LabeledSample]) -> bytes:
    labels = []
    for i, s in enumerate(samples):
        lab = int(s.label)
        if not 0 <= lab < N_LABELS:
            raise LabelRangeError(i, lab)
        labels.append(lab)
    body = np.zeros((len(samples), _RECORD_LEN), dtype=np.uint8)
    body[:, 0] = labels
    for i, s in enumerate(samples):
        body[i, 1:] = s.features.raw
    return _FLOW1_HEADER.pack(FLOW1_MAGIC, len(samples)) + body.tobytes()


def write_dataset(samples: Sequence[LabeledSample], destination: PathOrFile) -> int:
    """Write samples as FLOW1; returns the number of samples written."""
    blob = _encode_flow1(samples)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            fh.write(blob)
    else:
        destination.write(blob)
    return len(samples)


def read_dataset_arrays(source) -> tuple[np.ndarray, np.ndarray]:
    """Read a FLOW1 file into (raw uint8 (N, 784), labels int64 (N,))."""
    data = _read_all(source)
    if len(data) < _FLOW1_HEADER.size:
        if not FLOW1_MAGIC.startswith(data[:5]):
            raise BadMagicError(f"bad FLOW1 magic {data[:5]!r}")
        raise ShortFileError(f"FLOW1 header needs 9 bytes, got {len(data)}")
    magic, count = _FLOW1_HEADER.unpack_from(data)
    if magic != FLOW1_MAGIC:
        raise BadMagicError(f"bad FLOW1 magic {magic!r}")
    expected = _FLOW1_HEADER.size + count * _RECORD_LEN
    if len(data) < expected:
        raise ShortFileError(f"FLOW1 declares {count} samples ({expected} bytes), file has {len(data)}")
    if len(data) > expected:
        raise TrailingDataError(f"{len(data) - expected} trailing bytes after {count} FLOW1 samples")
    body = np.frombuffer(data, dtype=np.uint8, offset=_FLOW1_HEADER.size).reshape(count, _RECORD_LEN)
    labels = body[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= N_LABELS)
    if bad.size:
        raise LabelRangeError(int(bad[0]), int(labels[bad[0]]))
    return body[:, 1:].copy(), labels


def read_dataset(source) -> list[LabeledSample]:
    return arrays_to_samples(*read_dataset_arrays(source))


def export_csv(samples: Sequence[LabeledSample], destination) -> None:
    """Debug CSV: header ``label,b0,...,b783`` then one row of integers per sample."""
    own = isinstance(destination, (str, os.PathLike))
    fh = open(destination, "w", newline="") if own else destination
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"b{i}" for i in range(FEATURE_LEN)])
        for s in samples:
            writer.writerow([int(s.label)] + s.features.raw.tolist())
    finally:
        if own:
            fh.close()


def write_pcap(packets: Iterable[tuple], destination=None, big_endian: bool = False) -> bytes:
    """Build a classic Ethernet pcap from ``(ts, src, dst, proto, payload)`` tuples.

    ``src``/``dst`` are ``(ip_string, port)``. Used for fixtures and the
    benchmark; returns the bytes and optionally writes them.
    """
    e = ">" if big_endian else "<"
    out = io.BytesIO()
    out.write(struct.pack(e + "IHHiIII", _PCAP_MAGIC_USEC, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
    for ts, (sip, sport), (dip, dport), proto, payload in packets:
        proto = Protocol(proto)
        if proto is Protocol.TCP:
            l4 = struct.pack(">HHIIBBHHH", sport, dport, 0, 0, 5 << 4, 0x18, 65535, 0, 0)
        else:
            l4 = struct.pack(">HHHH", sport, dport, 8 + len(payload), 0)
        total = 20 + len(l4) + len(payload)
        ip = struct.pack(
            ">BBHHHBBH4s4s", 0x45, 0, total, 0, 0x4000, 64, int(proto), 0,
            IPv4Address(sip).packed, IPv4Address(dip).packed,
        )
        frame = b"\x00\x11\x22\x33\x44\x55\x66\x77\x88\x99\xaa\xbb\x08\x00" + ip + l4 + payload
        sec, usec = ts
        out.write(struct.pack(e + "IIII", sec, usec, len(frame), len(frame)) + frame)
    blob = out.getvalue()
    if destination is not None:
        with open(destination, "wb") as fh:
            fh.write(blob)
    return blob
