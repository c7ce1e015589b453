"""OOK/PWM pulse-train framing and protocol codecs for the two supported
sensor families.

The pipeline starts at the demodulated pulse level: a capture is a sequence
of alternating high/low durations. ``frame_pulses`` slices it into candidate
bitstrings, ``decode_a5n1``/``decode_lcw`` validate and extract physical
values, and the ``encode_*`` functions run the whole thing backwards for
simulation and round-trip testing.

Bit layouts, timings and scale factors are normative for this toolkit (the
device vendors publish none of it); they follow the publicly documented
behaviour of the AcuRite 5-in-1 and La Crosse WS-2300 families.

Codecs are pure functions and the framer holds no state between calls.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import Protocol, StationId, WeatherRecord


class DecodeError(ValueError):
    """Base for all frame validation failures."""


class ChecksumError(DecodeError):
    pass


class ParityError(DecodeError):
    def __init__(self, byte_index: int):
        super().__init__(f"parity failure in byte {byte_index}")
        self.byte_index = byte_index


class SyncError(DecodeError):
    pass


class DigitRepeatError(DecodeError):
    pass


class BcdError(DecodeError):
    pass


class UnknownMessageTypeError(DecodeError):
    pass


class ValueRangeError(DecodeError):
    """Encoder input (or decoded value) outside the representable range."""


# ---------------------------------------------------------------------------
# Pulse trains

@dataclass(frozen=True)
class PulseTrain:
    """Demodulated OOK capture: alternating ('H'|'L', duration_us) entries."""

    entries: tuple[tuple[str, int], ...]

    def __post_init__(self):
        prev = None
        for i, (level, dur) in enumerate(self.entries):
            if level not in ("H", "L"):
                raise ValueError(f"entry {i}: level must be 'H' or 'L', got {level!r}")
            if dur <= 0:
                raise ValueError(f"entry {i}: duration must be positive, got {dur}")
            if level == prev:
                raise ValueError(f"entry {i}: levels must strictly alternate")
            prev = level

    def scaled(self, factor: float) -> "PulseTrain":
        return PulseTrain(tuple((lv, max(1, round(d * factor))) for lv, d in self.entries))

    def to_text(self) -> str:
        return "\n".join(f"{lv} {d}" for lv, d in self.entries) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PulseTrain":
        entries = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or parts[0] not in ("H", "L") or not parts[1].isdigit():
                raise ValueError(f"line {lineno}: expected 'H <us>' or 'L <us>', got {raw!r}")
            entries.append((parts[0], int(parts[1])))
        return cls(tuple(entries))

    @classmethod
    def concat(cls, trains: "list[PulseTrain]") -> "PulseTrain":
        """Join trains, merging the seam when levels would repeat."""
        entries: list[tuple[str, int]] = []
        for train in trains:
            for lv, d in train.entries:
                if entries and entries[-1][0] == lv:
                    entries[-1] = (lv, entries[-1][1] + d)
                else:
                    entries.append((lv, d))
        return cls(tuple(entries))


@dataclass(frozen=True)
class TimingSpec:
    """Nominal PWM durations (us) per protocol plus the shared tolerance.

    The A5N1 link marks a frame with sync pairs and encodes bits in the
    high/low split of a fixed bit period. The LCW link has no pulse-level
    sync (sync lives in the first nibble); the bit value is the high width
    and the low is a fixed inter-bit gap.
    """

    a5n1_sync_us: tuple[int, int] = (600, 600)
    a5n1_sync_pairs: int = 4
    a5n1_one_us: tuple[int, int] = (400, 200)
    a5n1_zero_us: tuple[int, int] = (200, 400)
    lcw_zero_high_us: int = 1300
    lcw_one_high_us: int = 550
    lcw_gap_us: int = 1000
    tolerance: float = 0.35

    def __post_init__(self):
        if not 0 < self.tolerance < 0.5:
            raise ValueError("tolerance must be in (0, 0.5)")
        durations = (
            *self.a5n1_sync_us, *self.a5n1_one_us, *self.a5n1_zero_us,
            self.lcw_zero_high_us, self.lcw_one_high_us, self.lcw_gap_us,
        )
        if any(d <= 0 for d in durations):
            raise ValueError("nominal durations must be positive")
        if self.a5n1_sync_pairs < 1:
            raise ValueError("need at least one sync pair")


DEFAULT_TIMING = TimingSpec()


def _pairs(train: PulseTrain) -> list[tuple[int, int]]:
    """(high, low) duration pairs; a leading low and a trailing lone high
    cannot form a pair and are dropped."""
    entries = train.entries
    start = 1 if entries and entries[0][0] == "L" else 0
    out = []
    for i in range(start, len(entries) - 1, 2):
        out.append((entries[i][1], entries[i + 1][1]))
    return out


def _rel(d: int, nominal: int) -> float:
    return abs(d / nominal - 1.0)


def _frame_a5n1(pairs: list[tuple[int, int]], spec: TimingSpec) -> list[str]:
    # Classify each pair jointly against the three pair classes; the joint
    # relative distance keeps classification stable under uniform scaling
    # of the whole train (the individual duration bands overlap).
    classes = (("S", spec.a5n1_sync_us), ("1", spec.a5n1_one_us), ("0", spec.a5n1_zero_us))
    tol = spec.tolerance
    runs: list[str] = []
    bits: list[str] = []
    sync_count = 0
    armed = False

    def flush():
        if bits:
            runs.append("".join(bits))
            bits.clear()

    for h, l in pairs:
        label = None
        best = None
        for name, (nh, nl) in classes:
            score = _rel(h, nh) + _rel(l, nl)
            if best is None or score < best:
                best = score
                label = name
                nom = (nh, nl)
        if _rel(h, nom[0]) > tol or _rel(l, nom[1]) > tol:
            label = None
        if label == "S":
            flush()
            sync_count += 1
            armed = sync_count >= spec.a5n1_sync_pairs
        elif label is not None and armed:
            bits.append(label)
            sync_count = 0
        else:
            flush()
            sync_count = 0
            armed = False
    flush()
    return runs


def _frame_lcw(pairs: list[tuple[int, int]], spec: TimingSpec) -> list[str]:
    # Bit value is carried by the high width alone; the low is a fixed
    # separator. A low longer than the tolerance band is an inter-frame
    # gap: the bit still counts but the run ends there.
    tol = spec.tolerance
    gap = spec.lcw_gap_us
    runs: list[str] = []
    bits: list[str] = []

    def flush():
        if bits:
            runs.append("".join(bits))
            bits.clear()

    for h, l in pairs:
        d0 = _rel(h, spec.lcw_zero_high_us)
        d1 = _rel(h, spec.lcw_one_high_us)
        label = "0" if d0 <= d1 else "1"
        if min(d0, d1) > tol or l < gap * (1 - tol):
            flush()
            continue
        bits.append(label)
        if l > gap * (1 + tol):
            flush()
    flush()
    return runs


def frame_pulses(
    train: PulseTrain,
    spec: TimingSpec = DEFAULT_TIMING,
    protocol: Protocol = Protocol.A5N1,
) -> list[str]:
    """Slice a pulse train into candidate frame bitstrings.

    Returns every maximal run of classifiable bits (sync-gated for A5N1).
    Pulses that fail classification end the current run and are skipped;
    there is no error path -- an unmatchable train yields an empty list.
    """
    pairs = _pairs(train)
    if protocol is Protocol.A5N1:
        return _frame_a5n1(pairs, spec)
    return _frame_lcw(pairs, spec)


# ---------------------------------------------------------------------------
# AcuRite 5-in-1 style frames (8 bytes, 64 bits)

A5N1_MSG_WIND_DIR_RAIN = 0x31
A5N1_MSG_TEMP_HUMIDITY = 0x38
A5N1_MESSAGE_TYPES = (A5N1_MSG_WIND_DIR_RAIN, A5N1_MSG_TEMP_HUMIDITY)

_WIND_SLOPE = 0.8278   # kph per raw count, +1.0 offset, 0 raw means calm
_RAIN_MM_PER_TIP = 0.254
_DIR_STEP_DEG = 22.5


def _a5n1_checksum(data: bytes) -> int:
    return sum(data[:7]) & 0xFF


def _even_parity_ok(byte: int) -> bool:
    return bin(byte).count("1") % 2 == 0


@dataclass(frozen=True)
class A5N1Frame:
    """Validated 8-byte frame. Construction re-checks the integrity rules."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != 8:
            raise ValueError("a5n1 frame must be exactly 8 bytes")
        if self.data[7] != _a5n1_checksum(self.data):
            raise ChecksumError("byte checksum mismatch")
        for i in range(2, 7):
            if not _even_parity_ok(self.data[i]):
                raise ParityError(i)
        if self.data[2] & 0x3F not in A5N1_MESSAGE_TYPES:
            raise UnknownMessageTypeError(f"message type {self.data[2] & 0x3F:#04x}")

    @property
    def channel(self) -> int:
        return self.data[0] >> 6

    @property
    def station_id(self) -> int:
        return (self.data[0] & 0x3F) << 8 | self.data[1]

    @property
    def battery_ok(self) -> bool:
        return bool(self.data[2] & 0x40)

    @property
    def message_type(self) -> int:
        return self.data[2] & 0x3F

    def to_hex(self) -> str:
        return self.data.hex()


def bits_to_bytes(bits: str) -> bytes:
    if len(bits) % 8 or any(c not in "01" for c in bits):
        raise ValueError("bitstring must be 0/1 characters in whole bytes")
    return bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))


def bytes_to_bits(data: bytes) -> str:
    return "".join(f"{b:08b}" for b in data)


def f_to_c(deg_f: float) -> float:
    return (deg_f - 32.0) * 5.0 / 9.0


def c_to_f(deg_c: float) -> float:
    return deg_c * 9.0 / 5.0 + 32.0


def decode_a5n1(bits: str) -> tuple[A5N1Frame, WeatherRecord]:
    """Validate a 64-bit string and extract the partial weather record.

    Checksum is verified first, then per-byte parity on bytes 2..6, then
    the message type. Every failure raises a typed DecodeError.
    """
    if len(bits) != 64:
        raise ValueError(f"expected 64 bits, got {len(bits)}")
    data = bits_to_bytes(bits)
    if data[7] != _a5n1_checksum(data):
        raise ChecksumError(
            f"checksum {data[7]:#04x} != computed {_a5n1_checksum(data):#04x}"
        )
    for i in range(2, 7):
        if not _even_parity_ok(data[i]):
            raise ParityError(i)
    msg_type = data[2] & 0x3F
    if msg_type not in A5N1_MESSAGE_TYPES:
        raise UnknownMessageTypeError(f"message type {msg_type:#04x}")

    frame = A5N1Frame(data)
    station = StationId(Protocol.A5N1, frame.station_id, frame.channel)
    wind_raw = data[3] & 0x7F
    wind_kph = 0.0 if wind_raw == 0 else _WIND_SLOPE * wind_raw + 1.0

    if msg_type == A5N1_MSG_WIND_DIR_RAIN:
        dir_code = data[4] & 0x0F
        counter = (data[5] & 0x7F) << 7 | (data[6] & 0x7F)
        record = WeatherRecord.build(
            station,
            sensor_battery_ok=frame.battery_ok,
            wind_speed_kph=wind_kph,
            wind_dir_deg=dir_code * _DIR_STEP_DEG,
            rain_mm=counter * _RAIN_MM_PER_TIP,
        )
    else:
        temp_raw = (data[4] & 0x7F) << 4 | (data[5] >> 3) & 0x0F
        record = WeatherRecord.build(
            station,
            sensor_battery_ok=frame.battery_ok,
            wind_speed_kph=wind_kph,
            temperature_c=f_to_c(temp_raw / 10.0 - 40.0),
            humidity_pct=float(data[6] & 0x7F),
        )
    return frame, record


def _with_parity(byte: int) -> int:
    """Set bit 7 so the whole byte has even parity."""
    if not 0 <= byte <= 0x7F:
        raise ValueError("payload bits must fit in bits 6..0")
    return byte | (0x80 if bin(byte).count("1") % 2 else 0x00)


def _wind_raw(wind_kph: float) -> int:
    """Nearest representable wind code. The representable set is {0} plus
    {slope*raw + 1 : raw 1..127}, so values inside the (0, 1.8278) gap snap
    to whichever end is closer."""
    if wind_kph < 0:
        raise ValueRangeError(f"wind speed {wind_kph} kph is negative")
    if wind_kph <= (_WIND_SLOPE + 1.0) / 2:
        return 0
    raw = max(1, round((wind_kph - 1.0) / _WIND_SLOPE))
    if raw > 127:
        raise ValueRangeError(f"wind speed {wind_kph} kph exceeds the 7-bit range")
    return raw


def build_a5n1_frame(
    station: StationId,
    message_type: int,
    *,
    battery_ok: bool = True,
    wind_kph: float = 0.0,
    wind_dir_deg: float = 0.0,
    rain_mm: float = 0.0,
    temperature_c: float = 0.0,
    humidity_pct: float = 0.0,
) -> bytes:
    """Assemble a valid frame; parity and checksum are always computed."""
    if station.protocol is not Protocol.A5N1:
        raise ValueError("station protocol must be A5N1")
    if message_type not in A5N1_MESSAGE_TYPES:
        raise UnknownMessageTypeError(f"message type {message_type:#04x}")
    b = bytearray(8)
    b[0] = station.channel << 6 | station.id >> 8
    b[1] = station.id & 0xFF
    b[2] = _with_parity((0x40 if battery_ok else 0x00) | message_type)
    b[3] = _with_parity(_wind_raw(wind_kph))
    if message_type == A5N1_MSG_WIND_DIR_RAIN:
        if not 0 <= wind_dir_deg < 360:
            raise ValueRangeError(f"wind direction {wind_dir_deg} outside [0, 360)")
        if rain_mm < 0:
            raise ValueRangeError("rain total is negative")
        tips = round(rain_mm / _RAIN_MM_PER_TIP)
        if tips > 0x3FFF:
            raise ValueRangeError(f"rain total {rain_mm} mm exceeds the 14-bit counter")
        b[4] = _with_parity(round(wind_dir_deg / _DIR_STEP_DEG) % 16)
        b[5] = _with_parity(tips >> 7)
        b[6] = _with_parity(tips & 0x7F)
    else:
        temp_raw = round((c_to_f(temperature_c) + 40.0) * 10.0)
        if not 0 <= temp_raw <= 0x7FF:
            raise ValueRangeError(f"temperature {temperature_c} C outside the 11-bit range")
        hum = round(humidity_pct)
        if not 0 <= hum <= 127:
            raise ValueRangeError(f"humidity {humidity_pct} outside 0..127")
        b[4] = _with_parity(temp_raw >> 4)
        b[5] = _with_parity((temp_raw & 0x0F) << 3)
        b[6] = _with_parity(hum)
    b[7] = _a5n1_checksum(b)
    return bytes(b)


def a5n1_to_pulses(data: bytes, spec: TimingSpec = DEFAULT_TIMING) -> PulseTrain:
    entries: list[tuple[str, int]] = []
    for _ in range(spec.a5n1_sync_pairs):
        entries.append(("H", spec.a5n1_sync_us[0]))
        entries.append(("L", spec.a5n1_sync_us[1]))
    for bit in bytes_to_bits(data):
        h, l = spec.a5n1_one_us if bit == "1" else spec.a5n1_zero_us
        entries.append(("H", h))
        entries.append(("L", l))
    return PulseTrain(tuple(entries))


def encode_a5n1(
    station: StationId,
    message_type: int,
    *,
    battery_ok: bool = True,
    wind_kph: float = 0.0,
    wind_dir_deg: float = 0.0,
    rain_mm: float = 0.0,
    temperature_c: float = 0.0,
    humidity_pct: float = 0.0,
    spec: TimingSpec = DEFAULT_TIMING,
) -> PulseTrain:
    frame = build_a5n1_frame(
        station,
        message_type,
        battery_ok=battery_ok,
        wind_kph=wind_kph,
        wind_dir_deg=wind_dir_deg,
        rain_mm=rain_mm,
        temperature_c=temperature_c,
        humidity_pct=humidity_pct,
    )
    return a5n1_to_pulses(frame, spec)


def rain_counter_delta(prev: int, curr: int) -> float:
    """Rain increment in mm between two 14-bit tip counter readings,
    handling counter wrap. Always non-negative; fold deltas to keep a
    session's cumulative rain monotone."""
    if not 0 <= prev <= 0x3FFF or not 0 <= curr <= 0x3FFF:
        raise ValueError("counters must be 14-bit values")
    return ((curr - prev) % 0x4000) * _RAIN_MM_PER_TIP


# ---------------------------------------------------------------------------
# La Crosse WS-2300 style frames (13 nibbles, 52 bits)

LCW_SYNC_NIBBLE = 0x9
_LCW_RAIN_MM_PER_COUNT = 0.518


class LcwQuantity(enum.IntEnum):
    TEMP = 0
    HUMIDITY = 1
    RAIN = 2
    WIND_SPEED = 3
    WIND_DIR = 4


@dataclass(frozen=True)
class LCWFrame:
    """Validated 13-nibble frame."""

    nibbles: tuple[int, ...]

    def __post_init__(self):
        n = self.nibbles
        if len(n) != 13 or any(not 0 <= x <= 0xF for x in n):
            raise ValueError("lcw frame must be 13 nibbles")
        if n[0] != LCW_SYNC_NIBBLE:
            raise SyncError(f"sync nibble {n[0]:#x} != 0x9")
        if n[12] != sum(n[:12]) % 16:
            raise ChecksumError("nibble checksum mismatch")
        if n[10] != n[4] or n[11] != n[5]:
            raise DigitRepeatError("repeated digits disagree")
        if n[1] not in tuple(LcwQuantity):
            raise UnknownMessageTypeError(f"quantity type {n[1]:#x}")

    @property
    def quantity(self) -> LcwQuantity:
        return LcwQuantity(self.nibbles[1])

    @property
    def station_id(self) -> int:
        return self.nibbles[2] << 3 | self.nibbles[3] >> 1

    @property
    def battery_ok(self) -> bool:
        return bool(self.nibbles[3] & 1)

    def to_hex(self) -> str:
        return "".join(f"{x:x}" for x in self.nibbles)


def bits_to_nibbles(bits: str) -> tuple[int, ...]:
    if len(bits) % 4 or any(c not in "01" for c in bits):
        raise ValueError("bitstring must be 0/1 characters in whole nibbles")
    return tuple(int(bits[i:i + 4], 2) for i in range(0, len(bits), 4))


def nibbles_to_bits(nibbles: tuple[int, ...]) -> str:
    return "".join(f"{x:04b}" for x in nibbles)


def decode_lcw(bits: str) -> tuple[LCWFrame, WeatherRecord]:
    """Validate a 52-bit string and extract the single reported quantity.

    Checks run in order: sync nibble, checksum, digit repeat, BCD digits,
    quantity type, value range. Every failure raises a typed DecodeError.
    """
    if len(bits) != 52:
        raise ValueError(f"expected 52 bits, got {len(bits)}")
    n = bits_to_nibbles(bits)
    if n[0] != LCW_SYNC_NIBBLE:
        raise SyncError(f"sync nibble {n[0]:#x} != 0x9")
    if n[12] != sum(n[:12]) % 16:
        raise ChecksumError(f"checksum {n[12]:#x} != computed {sum(n[:12]) % 16:#x}")
    if n[10] != n[4] or n[11] != n[5]:
        raise DigitRepeatError(
            f"repeat nibbles {n[10]:#x}{n[11]:#x} != digits {n[4]:#x}{n[5]:#x}"
        )
    if any(d > 9 for d in n[4:7]):
        raise BcdError(f"non-BCD digit in value nibbles {n[4]:#x}{n[5]:#x}{n[6]:#x}")
    if n[1] not in tuple(LcwQuantity):
        raise UnknownMessageTypeError(f"quantity type {n[1]:#x}")

    frame = LCWFrame(n)
    value = n[4] * 100 + n[5] * 10 + n[6]
    station = StationId(Protocol.LCW, frame.station_id, 0)
    common = dict(sensor_battery_ok=frame.battery_ok)
    q = frame.quantity
    if q is LcwQuantity.TEMP:
        record = WeatherRecord.build(station, temperature_c=value / 10.0 - 40.0, **common)
    elif q is LcwQuantity.HUMIDITY:
        record = WeatherRecord.build(station, humidity_pct=value / 10.0, **common)
    elif q is LcwQuantity.RAIN:
        record = WeatherRecord.build(station, rain_mm=value * _LCW_RAIN_MM_PER_COUNT, **common)
    elif q is LcwQuantity.WIND_SPEED:
        # value is m/s * 10 on the wire; records store km/h
        record = WeatherRecord.build(station, wind_speed_kph=value / 10.0 * 3.6, **common)
    else:
        if value > 15:
            raise ValueRangeError(f"wind direction code {value} outside 0..15")
        record = WeatherRecord.build(station, wind_dir_deg=value * _DIR_STEP_DEG, **common)
    return frame, record


def _lcw_value(quantity: LcwQuantity, value: float) -> int:
    if quantity is LcwQuantity.TEMP:
        v = round((value + 40.0) * 10.0)
    elif quantity is LcwQuantity.HUMIDITY:
        v = round(value * 10.0)
    elif quantity is LcwQuantity.RAIN:
        v = round(value / _LCW_RAIN_MM_PER_COUNT)
    elif quantity is LcwQuantity.WIND_SPEED:
        v = round(value * 10.0)   # value given in m/s
    else:
        v = round(value / _DIR_STEP_DEG) % 16
    if not 0 <= v <= 999:
        raise ValueRangeError(f"{quantity.name.lower()} value {value} is not encodable")
    return v


def build_lcw_frame(
    quantity: LcwQuantity,
    value: float,
    station: StationId,
    *,
    battery_ok: bool = True,
) -> tuple[int, ...]:
    """Assemble a valid frame; checksum and digit repeats always computed.

    ``value`` is physical: temp degC, humidity %, rain mm, wind speed m/s,
    wind direction degrees. Nibbles 7..9 are reserved and sent as zero.
    """
    if station.protocol is not Protocol.LCW:
        raise ValueError("station protocol must be LCW")
    if station.id > 0x7F:
        raise ValueRangeError(f"lcw station id {station.id} exceeds 7 bits")
    v = _lcw_value(quantity, value)
    d = (v // 100, v // 10 % 10, v % 10)
    n = [
        LCW_SYNC_NIBBLE,
        int(quantity),
        station.id >> 3,
        (station.id & 0x7) << 1 | (1 if battery_ok else 0),
        d[0], d[1], d[2],
        0, 0, 0,
        d[0], d[1],
    ]
    n.append(sum(n) % 16)
    return tuple(n)


def lcw_to_pulses(
    nibbles: tuple[int, ...],
    spec: TimingSpec = DEFAULT_TIMING,
    frame_gap_us: int = 10_000,
) -> PulseTrain:
    """The low after the final bit is stretched to ``frame_gap_us`` so that
    concatenated frames stay separable."""
    entries: list[tuple[str, int]] = []
    bits = nibbles_to_bits(nibbles)
    for bit in bits:
        high = spec.lcw_one_high_us if bit == "1" else spec.lcw_zero_high_us
        entries.append(("H", high))
        entries.append(("L", spec.lcw_gap_us))
    entries[-1] = ("L", frame_gap_us)
    return PulseTrain(tuple(entries))


def encode_lcw(
    quantity: LcwQuantity,
    value: float,
    station: StationId,
    *,
    battery_ok: bool = True,
    spec: TimingSpec = DEFAULT_TIMING,
) -> PulseTrain:
    return lcw_to_pulses(
        build_lcw_frame(quantity, value, station, battery_ok=battery_ok), spec
    )
