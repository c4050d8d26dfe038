# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pcap record scanner.

Mirrors vpnflow._scan_py.scan_records exactly; see that module for the
record tuple layout.
"""
from vpnflow.errors import TruncatedRecordError


cdef inline unsigned int _be16(const unsigned char[:] b, Py_ssize_t i) nogil:
    return (b[i] << 8) | b[i + 1]


cdef inline unsigned int _u32(const unsigned char[:] b, Py_ssize_t i, bint big_endian) nogil:
    if big_endian:
        return (<unsigned int>b[i] << 24) | (b[i + 1] << 16) | (b[i + 2] << 8) | b[i + 3]
    return b[i] | (b[i + 1] << 8) | (b[i + 2] << 16) | (<unsigned int>b[i + 3] << 24)


def scan_records(const unsigned char[:] buf, Py_ssize_t start, bint big_endian, bint nanos):
    cdef Py_ssize_t n = buf.shape[0]
    cdef Py_ssize_t off = start
    cdef Py_ssize_t index = 0
    cdef Py_ssize_t frame, frame_end, ip, ip_end, tp, hdr, ihl, total
    cdef unsigned int incl, ts_sec, ts_sub, frag
    cdef int proto
    cdef Py_ssize_t skipped = 0
    records = []
    while off < n:
        if off + 16 > n:
            raise TruncatedRecordError(index, "truncated record header")
        ts_sec = _u32(buf, off, big_endian)
        ts_sub = _u32(buf, off + 4, big_endian)
        incl = _u32(buf, off + 8, big_endian)
        frame = off + 16
        frame_end = frame + incl
        if frame_end > n:
            raise TruncatedRecordError(index, "truncated packet data")
        off = frame_end
        index += 1
        if nanos:
            ts_sub = ts_sub // 1000
        # Ethernet II, IPv4 only
        if incl < 14 or _be16(buf, frame + 12) != 0x0800:
            skipped += 1
            continue
        ip = frame + 14
        if ip + 20 > frame_end or (buf[ip] >> 4) != 4:
            skipped += 1
            continue
        ihl = (buf[ip] & 0x0F) * 4
        total = _be16(buf, ip + 2)
        frag = _be16(buf, ip + 6)
        proto = buf[ip + 9]
        if ihl < 20 or total < ihl or ip + ihl > frame_end or (frag & 0x3FFF) != 0:
            skipped += 1
            continue
        if proto != 6 and proto != 17:
            skipped += 1
            continue
        ip_end = ip + total
        if ip_end > frame_end:
            ip_end = frame_end
        tp = ip + ihl
        if proto == 6:
            if tp + 20 > ip_end:
                skipped += 1
                continue
            hdr = (buf[tp + 12] >> 4) * 4
            if hdr < 20 or tp + hdr > ip_end:
                skipped += 1
                continue
        else:
            hdr = 8
            if tp + 8 > ip_end:
                skipped += 1
                continue
        records.append((
            index - 1, ts_sec, ts_sub,
            _u32(buf, ip + 12, True), _be16(buf, tp),
            _u32(buf, ip + 16, True), _be16(buf, tp + 2),
            proto, tp + hdr, ip_end,
        ))
    return records, skipped
