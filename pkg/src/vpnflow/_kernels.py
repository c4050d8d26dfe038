"""Select the packet-scan backend: compiled extension if built, else pure Python."""
from vpnflow import _scan_py

try:
    from vpnflow import _scan as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _scan_py.scan_records}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.scan_records

BACKEND = "cython" if _compiled is not None else "python"


def scan_records(buf, start, big_endian, nanos, backend=None):
    name = backend or BACKEND
    try:
        fn = BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable scan backend {name!r}") from None
    return fn(buf, start, big_endian, nanos)
