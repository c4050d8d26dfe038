"""Pure-Python pcap record scanner (fallback for the compiled ``_scan``).

``scan_records`` walks the per-packet records of a classic pcap body and
decodes Ethernet/IPv4/TCP/UDP headers. Each kept packet is returned as::

    (record_index, ts_sec, ts_usec, src_ip, src_port, dst_ip, dst_port,
     proto, payload_start, payload_end)

with IPs as 32-bit integers and payload offsets into ``buf``. Frames that
are not IPv4 TCP/UDP, are IP fragments, or whose headers do not fit are
skipped and counted.
"""
import struct

from vpnflow.errors import TruncatedRecordError

_BE16 = struct.Struct(">H")
_BE32 = struct.Struct(">I")


def scan_records(buf, start, big_endian, nanos):
    buf = memoryview(buf).cast("B")
    rec_hdr = struct.Struct(">IIII" if big_endian else "<IIII")
    n = len(buf)
    off = start
    index = 0
    skipped = 0
    records = []
    while off < n:
        if off + 16 > n:
            raise TruncatedRecordError(index, "truncated record header")
        ts_sec, ts_sub, incl, _orig = rec_hdr.unpack_from(buf, off)
        frame = off + 16
        frame_end = frame + incl
        if frame_end > n:
            raise TruncatedRecordError(index, "truncated packet data")
        off = frame_end
        index += 1
        if nanos:
            ts_sub //= 1000
        if incl < 14 or _BE16.unpack_from(buf, frame + 12)[0] != 0x0800:
            skipped += 1
            continue
        ip = frame + 14
        if ip + 20 > frame_end or buf[ip] >> 4 != 4:
            skipped += 1
            continue
        ihl = (buf[ip] & 0x0F) * 4
        total = _BE16.unpack_from(buf, ip + 2)[0]
        frag = _BE16.unpack_from(buf, ip + 6)[0]
        proto = buf[ip + 9]
        if ihl < 20 or total < ihl or ip + ihl > frame_end or frag & 0x3FFF:
            skipped += 1
            continue
        if proto not in (6, 17):
            skipped += 1
            continue
        ip_end = min(ip + total, frame_end)
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
            _BE32.unpack_from(buf, ip + 12)[0], _BE16.unpack_from(buf, tp)[0],
            _BE32.unpack_from(buf, ip + 16)[0], _BE16.unpack_from(buf, tp + 2)[0],
            proto, tp + hdr, ip_end,
        ))
    return records, skipped
