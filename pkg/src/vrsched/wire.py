"""Codec for the 12-byte frame-metadata option in the transport header.

The server stamps each outgoing frame with its identity, deadline and the
freshest RTT measurement; the bottleneck reads these to estimate queuing
delay bounds without any per-flow signaling channel.

Layout, big-endian:

    offset  size  field
    ------  ----  -----------------------------------------------
    0       1     kind, 0xFE (experimental option range)
    1       1     length, always 12
    2       1     flags: bit0 = vr_flag, remaining bits zero
    3       2     chunk index c
    5       1     tile index m
    6       1     GoP position k
    7       2     frame deadline, unsigned ms, saturating
    9       2     RTT value, unsigned ms, saturating
    11      1     RTT reference: frames backward from this frame
                  in send order (0 = no reference available)

Millisecond fields saturate at 0 and 65535 rather than wrapping. The
reference is a backward offset because one byte cannot address the 4-byte
frame-index space; within a flow the offset resolves uniquely.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

OPTION_KIND = 0xFE
OPTION_LEN = 12

_PACK = struct.Struct(">BBBHBBHHB")


class WireError(ValueError):
    """Malformed option bytes or out-of-range field."""


@dataclass(frozen=True)
class MetadataOption:
    vr_flag: bool
    chunk: int
    tile: int
    gop_pos: int
    deadline_ms: int
    rtt_ms: int
    rtt_ref_offset: int


def saturate_ms(value: float) -> int:
    """Clamp a millisecond value into the unsigned 16-bit wire range."""
    return int(min(65535, max(0, round(value))))


def encode(opt: MetadataOption) -> bytes:
    """Serialize an option to its 12-byte wire form.

    Millisecond fields are saturated; identity fields out of range raise,
    since clamping an index would silently mislabel the frame.
    """
    if not 0 <= opt.chunk <= 0xFFFF:
        raise WireError(f"chunk index {opt.chunk} outside 0..65535")
    if not 0 <= opt.tile <= 0xFF:
        raise WireError(f"tile index {opt.tile} outside 0..255")
    if not 0 <= opt.gop_pos <= 0xFF:
        raise WireError(f"gop position {opt.gop_pos} outside 0..255")
    if not 0 <= opt.rtt_ref_offset <= 0xFF:
        raise WireError(f"rtt reference offset {opt.rtt_ref_offset} outside 0..255")
    return _PACK.pack(
        OPTION_KIND,
        OPTION_LEN,
        1 if opt.vr_flag else 0,
        opt.chunk,
        opt.tile,
        opt.gop_pos,
        saturate_ms(opt.deadline_ms),
        saturate_ms(opt.rtt_ms),
        opt.rtt_ref_offset,
    )


def decode(buf: bytes) -> MetadataOption:
    """Parse the 12-byte wire form; inverse of :func:`encode` on its image."""
    if len(buf) < OPTION_LEN:
        raise WireError(f"option needs {OPTION_LEN} bytes, got {len(buf)}")
    kind, length, flags, chunk, tile, gop_pos, ddl, rtt, ref = _PACK.unpack(
        buf[:OPTION_LEN]
    )
    if kind != OPTION_KIND:
        raise WireError(f"unexpected option kind 0x{kind:02X}")
    if length != OPTION_LEN:
        raise WireError(f"unexpected option length {length}")
    return MetadataOption(
        vr_flag=bool(flags & 1),
        chunk=chunk,
        tile=tile,
        gop_pos=gop_pos,
        deadline_ms=ddl,
        rtt_ms=rtt,
        rtt_ref_offset=ref,
    )
