"""MAC frame model with bit-exact encoding.

Synthetic bit layout (field widths in bits), sized to match the standard
control/header sizes used throughout the simulator:

    common header:  kind(4) fd(1) fdti(1) rsvd(10) | duration(16) | src(16) | dst(16)
    RTS             common + zero padding          -> 288 bits total
    CTS / ACK       common + zero padding          -> 240 bits total
    DATA            common + payload_len(32) + pad -> 272-bit header + payload bits
    BEACON / ASSOC  common + capability(16) + pad  -> 288 bits total

Two reserved bits of the frame-control word carry the full-duplex
extensions: bit FC_FD_BIT marks a CTS-FD, bit FC_FDTI_BIT marks an FD
transmission indicator.  A frame with both flags clear encodes exactly like
a legacy frame, and `decode_legacy` ignores the reserved bits entirely, so
half-duplex receivers see plain legacy frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

__all__ = [
    "FrameKind",
    "FrameControl",
    "CapabilityInfo",
    "Frame",
    "FrameError",
    "FrameEncodeError",
    "FrameDecodeError",
    "encode",
    "decode",
    "decode_legacy",
    "make_cts_fd",
    "make_fdti",
    "summarize",
    "BROADCAST",
    "FC_FD_BIT",
    "FC_FDTI_BIT",
    "CI_FD_BIT",
]

# Reserved-bit assignments, fixed across the codebase.
FC_FD_BIT = 4      # frame-control bit carrying the CTS-FD marker
FC_FDTI_BIT = 5    # frame-control bit carrying the FD-transmission-indicator marker
CI_FD_BIT = 15     # capability-information bit advertising FD support

BROADCAST = 0xFFFF

_DURATION_MAX = 0x7FFF  # Duration/ID field is 15 bits wide


class FrameError(Exception):
    pass


class FrameEncodeError(FrameError):
    pass


class FrameDecodeError(FrameError):
    pass


class FrameKind(IntEnum):
    RTS = 1
    CTS = 2
    DATA = 3
    ACK = 4
    BEACON = 5
    ASSOC_REQUEST = 6
    ASSOC_RESPONSE = 7


# Total encoded size in bits for fixed-size kinds; DATA is 272 + payload.
_FIXED_SIZE_BITS = {
    FrameKind.RTS: 288,
    FrameKind.CTS: 240,
    FrameKind.ACK: 240,
    FrameKind.BEACON: 288,
    FrameKind.ASSOC_REQUEST: 288,
    FrameKind.ASSOC_RESPONSE: 288,
}
DATA_HEADER_BITS = 272

_MGMT_KINDS = (FrameKind.BEACON, FrameKind.ASSOC_REQUEST, FrameKind.ASSOC_RESPONSE)
_FDTI_KINDS = (FrameKind.DATA,) + _MGMT_KINDS


@dataclass(frozen=True)
class FrameControl:
    """Frame-control word: kind plus the two reserved-bit FD extensions."""

    frame_kind: FrameKind
    fd_flag: bool = False
    fdti_flag: bool = False

    def __post_init__(self):
        if self.fdti_flag and self.frame_kind not in _FDTI_KINDS:
            raise FrameEncodeError(
                f"fdti_flag is only valid on data/management frames, not {self.frame_kind.name}"
            )


@dataclass(frozen=True)
class CapabilityInfo:
    """16-bit capability-information field; FD support lives in one reserved bit."""

    raw: int = 0

    def __post_init__(self):
        if not 0 <= self.raw <= 0xFFFF:
            raise FrameEncodeError(f"capability raw value out of range: {self.raw}")

    @property
    def fd_capable(self) -> bool:
        return bool(self.raw >> CI_FD_BIT & 1)

    def with_fd_capable(self, enabled: bool) -> "CapabilityInfo":
        if enabled:
            return CapabilityInfo(self.raw | (1 << CI_FD_BIT))
        return CapabilityInfo(self.raw & ~(1 << CI_FD_BIT))


@dataclass(frozen=True)
class Frame:
    """A MAC frame at field granularity.

    `payload_bits` is a bit count, not content; the simulator never models
    payload bytes.  `capability` is present on beacon/association frames
    only.
    """

    control: FrameControl
    duration_us: int
    src: int
    dst: int
    payload_bits: int = 0
    capability: CapabilityInfo | None = None

    def __post_init__(self):
        kind = self.control.frame_kind
        if not 0 <= self.duration_us <= _DURATION_MAX:
            raise FrameEncodeError(
                f"duration {self.duration_us} does not fit the 15-bit Duration/ID field"
            )
        if self.payload_bits < 0:
            raise FrameEncodeError("payload_bits must be nonnegative")
        if self.payload_bits and kind is not FrameKind.DATA:
            raise FrameEncodeError(f"{kind.name} frames carry no payload")
        for node in (self.src, self.dst):
            if not 0 <= node <= 0xFFFF:
                raise FrameEncodeError(f"node id out of range: {node}")
        if kind in _MGMT_KINDS:
            if self.capability is None:
                object.__setattr__(self, "capability", CapabilityInfo(0))
        elif self.capability is not None:
            raise FrameEncodeError(f"{kind.name} frames carry no capability field")

    @property
    def kind(self) -> FrameKind:
        return self.control.frame_kind

    def legacy_view(self) -> "Frame":
        """The frame as a legacy decoder sees it: reserved flags ignored.

        Equivalent to `decode_legacy(encode(self))`; kept as a cheap
        field-level operation for the simulation hot path.
        """
        if not (self.control.fd_flag or self.control.fdti_flag):
            return self
        return replace(self, control=FrameControl(self.control.frame_kind))


def _pack(value: int, width: int) -> str:
    return format(value, f"0{width}b")


def _frame_bits_length(kind: FrameKind, payload_bits: int) -> int:
    if kind is FrameKind.DATA:
        return DATA_HEADER_BITS + payload_bits
    return _FIXED_SIZE_BITS[kind]


def encode(frame: Frame) -> str:
    """Encode a frame to its bit-string. Deterministic inverse of `decode`."""
    kind = frame.kind
    fc = kind.value  # kind occupies the top 4 bits of the FC word
    fc_word = _pack(fc, 4)
    reserved = ["0"] * 12
    if frame.control.fd_flag:
        reserved[FC_FD_BIT - 4] = "1"
    if frame.control.fdti_flag:
        reserved[FC_FDTI_BIT - 4] = "1"
    bits = [
        fc_word,
        "".join(reserved),
        _pack(frame.duration_us, 16),
        _pack(frame.src, 16),
        _pack(frame.dst, 16),
    ]
    if kind is FrameKind.DATA:
        bits.append(_pack(frame.payload_bits, 32))
    elif kind in _MGMT_KINDS:
        bits.append(_pack(frame.capability.raw, 16))
    body = "".join(bits)
    total = _frame_bits_length(kind, frame.payload_bits)
    if kind is FrameKind.DATA:
        pad = DATA_HEADER_BITS - len(body)
    else:
        pad = total - len(body)
    body += "0" * pad
    if kind is FrameKind.DATA:
        body += "0" * frame.payload_bits  # payload content is opaque
    assert len(body) == total
    return body


def _parse(bits: str, keep_reserved: bool) -> Frame:
    if not bits or len(bits) < 64 or any(c not in "01" for c in bits):
        raise FrameDecodeError("malformed bit-string")
    kind_value = int(bits[0:4], 2)
    try:
        kind = FrameKind(kind_value)
    except ValueError:
        raise FrameDecodeError(f"unknown frame kind {kind_value}") from None
    fd = keep_reserved and bits[FC_FD_BIT] == "1"
    fdti = keep_reserved and bits[FC_FDTI_BIT] == "1"
    duration = int(bits[16:32], 2)
    src = int(bits[32:48], 2)
    dst = int(bits[48:64], 2)
    payload_bits = 0
    capability = None
    if kind is FrameKind.DATA:
        payload_bits = int(bits[64:96], 2)
    elif kind in _MGMT_KINDS:
        capability = CapabilityInfo(int(bits[64:80], 2))
    expected = _frame_bits_length(kind, payload_bits)
    if len(bits) != expected:
        raise FrameDecodeError(
            f"{kind.name} frame has {len(bits)} bits, expected {expected}"
        )
    if fdti and kind not in _FDTI_KINDS:
        fdti = False  # reserved bit without meaning for this kind
    return Frame(
        control=FrameControl(kind, fd_flag=fd, fdti_flag=fdti),
        duration_us=duration,
        src=src,
        dst=dst,
        payload_bits=payload_bits,
        capability=capability,
    )


def decode(bits: str) -> Frame:
    """Decode a bit-string produced by `encode`, reserved bits included."""
    return _parse(bits, keep_reserved=True)


def decode_legacy(bits: str) -> Frame:
    """Decode as a legacy receiver: reserved bits are ignored entirely.

    A CTS-FD therefore decodes as a plain CTS with the same duration and
    destination, and FDTI-flagged frames decode as their base kind.
    """
    return _parse(bits, keep_reserved=False)


def make_cts_fd(dst: int, duration_us: int, src: int = 0) -> Frame:
    """Build a CTS-FD: a legacy CTS whose designated reserved bit is set."""
    return Frame(
        control=FrameControl(FrameKind.CTS, fd_flag=True),
        duration_us=duration_us,
        src=src,
        dst=dst,
    )


def make_fdti(src: int) -> Frame:
    """Build an FD transmission indicator.

    Modeled as a minimal zero-payload data frame with the FDTI reserved bit
    set, broadcast after a full-duplex exchange completes.  Legacy receivers
    decode it as an ordinary (empty) data frame.
    """
    return Frame(
        control=FrameControl(FrameKind.DATA, fdti_flag=True),
        duration_us=0,
        src=src,
        dst=BROADCAST,
    )


def summarize(frame: Frame) -> str:
    """One-line debug rendering used in event traces."""
    flags = ""
    if frame.control.fd_flag:
        flags += "+fd"
    if frame.control.fdti_flag:
        flags += "+fdti"
    extra = ""
    if frame.kind is FrameKind.DATA:
        extra = f" len={frame.payload_bits}"
    elif frame.capability is not None:
        extra = f" ci={frame.capability.raw:#06x}"
    return (
        f"{frame.kind.name}{flags} dur={frame.duration_us}"
        f" src={frame.src} dst={frame.dst}{extra}"
    )
