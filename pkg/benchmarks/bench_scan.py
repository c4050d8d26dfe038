"""Time the pcap record scan with each available backend.

    python3 benchmarks/bench_scan.py [--packets N] [--repeat R]

Builds one synthetic capture in memory, checks that every backend returns
identical records, then reports the best-of-R wall time per backend.
"""
import argparse
import time

import numpy as np

from vpnflow import _kernels
from vpnflow.ingest import Protocol, write_pcap

PCAP_HEADER_LEN = 24


def synthetic_capture(n: int, seed: int = 0) -> bytes:
    rng = np.random.default_rng(seed)
    sizes = rng.integers(0, 1400, n)
    protos = rng.choice([Protocol.TCP, Protocol.UDP], n)
    ports = rng.integers(1024, 65535, (n, 2))
    blob = rng.integers(0, 256, int(sizes.max()), dtype=np.uint8).tobytes()
    packets = (
        ((i, 0), (f"10.0.{i % 200}.1", int(ports[i, 0])), ("192.168.1.2", int(ports[i, 1])),
         protos[i], blob[: sizes[i]])
        for i in range(n)
    )
    return write_pcap(packets)


def best_time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--packets", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    buf = synthetic_capture(args.packets)
    print(f"capture: {args.packets} packets, {len(buf) / 1e6:.1f} MB")
    results = {}
    for name, fn in _kernels.BACKENDS.items():
        results[name] = fn(buf, PCAP_HEADER_LEN, False, False)
        t = best_time(lambda: fn(buf, PCAP_HEADER_LEN, False, False), args.repeat)
        print(f"{name:>8}: {t * 1e3:9.1f} ms  ({args.packets / t / 1e6:.2f} M packets/s)")
    first = next(iter(results.values()))
    assert all(r == first for r in results.values()), "backends disagree"
    if "cython" not in results:
        print("compiled extension not built; only the Python fallback was timed")


if __name__ == "__main__":
    main()
