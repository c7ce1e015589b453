import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wxkit.core import Protocol, StationId
from wxkit.rfdecode import (
    A5N1_MSG_TEMP_HUMIDITY,
    A5N1_MSG_WIND_DIR_RAIN,
    BcdError,
    ChecksumError,
    DecodeError,
    DigitRepeatError,
    LcwQuantity,
    ParityError,
    PulseTrain,
    SyncError,
    UnknownMessageTypeError,
    ValueRangeError,
    bits_to_nibbles,
    build_a5n1_frame,
    build_lcw_frame,
    bytes_to_bits,
    decode_a5n1,
    decode_lcw,
    encode_a5n1,
    encode_lcw,
    frame_pulses,
    nibbles_to_bits,
    rain_counter_delta,
)

STATION = StationId(Protocol.A5N1, 0x2A7, 2)
LCW_STATION = StationId(Protocol.LCW, 42, 0)


# ---------------------------------------------------------------------------
# pulse framing

def test_frame_pulses_roundtrip_single_frame():
    train = encode_a5n1(STATION, A5N1_MSG_TEMP_HUMIDITY,
                        temperature_c=21.0, humidity_pct=50)
    runs = frame_pulses(train, protocol=Protocol.A5N1)
    assert len(runs) == 1
    assert len(runs[0]) == 64


def test_frame_pulses_tolerates_20pct_scaling():
    train = encode_a5n1(STATION, A5N1_MSG_WIND_DIR_RAIN,
                        wind_kph=12.0, wind_dir_deg=90.0, rain_mm=5.08)
    runs = frame_pulses(train, protocol=Protocol.A5N1)
    scaled = frame_pulses(train.scaled(1.2), protocol=Protocol.A5N1)
    assert scaled == runs


def test_frame_pulses_uniform_train_yields_nothing():
    train = PulseTrain(tuple(("H", 1000) if i % 2 == 0 else ("L", 1000)
                             for i in range(40)))
    assert frame_pulses(train, protocol=Protocol.A5N1) == []


def test_frame_pulses_back_to_back_frames():
    t1 = encode_a5n1(STATION, A5N1_MSG_TEMP_HUMIDITY, temperature_c=10.0)
    t2 = encode_a5n1(STATION, A5N1_MSG_WIND_DIR_RAIN, wind_dir_deg=45.0)
    joined = PulseTrain.concat([t1, t2])
    runs = frame_pulses(joined, protocol=Protocol.A5N1)
    assert [len(r) for r in runs] == [64, 64]


def test_frame_pulses_lcw_concatenation():
    t1 = encode_lcw(LcwQuantity.TEMP, 25.3, LCW_STATION)
    t2 = encode_lcw(LcwQuantity.HUMIDITY, 60.0, LCW_STATION)
    joined = PulseTrain.concat([t1, t2])
    runs = frame_pulses(joined, protocol=Protocol.LCW)
    assert [len(r) for r in runs] == [52, 52]


@settings(max_examples=60)
@given(st.floats(0.7, 1.3))
def test_frame_pulses_scale_property(factor):
    train = encode_a5n1(STATION, A5N1_MSG_TEMP_HUMIDITY,
                        temperature_c=3.3, humidity_pct=70, wind_kph=20.0)
    assert frame_pulses(train.scaled(factor), protocol=Protocol.A5N1) == \
        frame_pulses(train, protocol=Protocol.A5N1)


@settings(max_examples=60)
@given(st.floats(0.7, 1.3))
def test_frame_pulses_scale_property_lcw(factor):
    train = encode_lcw(LcwQuantity.WIND_SPEED, 4.4, LCW_STATION)
    assert frame_pulses(train.scaled(factor), protocol=Protocol.LCW) == \
        frame_pulses(train, protocol=Protocol.LCW)


@settings(max_examples=100)
@given(st.lists(st.integers(1, 20_000), min_size=0, max_size=80),
       st.booleans(), st.sampled_from((Protocol.A5N1, Protocol.LCW)))
def test_frame_pulses_never_raises_on_arbitrary_trains(durations, starts_low, protocol):
    levels = ("L", "H") if starts_low else ("H", "L")
    train = PulseTrain(tuple((levels[i % 2], d) for i, d in enumerate(durations)))
    for run in frame_pulses(train, protocol=protocol):
        assert set(run) <= {"0", "1"}


def test_pulse_train_text_roundtrip():
    train = encode_a5n1(STATION, A5N1_MSG_TEMP_HUMIDITY)
    text = train.to_text()
    assert PulseTrain.from_text(text) == train
    assert PulseTrain.from_text("# comment\n\n" + text) == train


def test_pulse_train_alternation_enforced():
    with pytest.raises(ValueError):
        PulseTrain((("H", 100), ("H", 100)))
    with pytest.raises(ValueError):
        PulseTrain((("H", 0),))


# ---------------------------------------------------------------------------
# a5n1 decode

def _bits(station=STATION, msg=A5N1_MSG_TEMP_HUMIDITY, **kw) -> str:
    return bytes_to_bits(build_a5n1_frame(station, msg, **kw))


def test_decode_a5n1_temp_frame_offsets_cancel():
    # raw 400 -> 0.0 F; zero wind stays zero
    bits = _bits(temperature_c=(0.0 - 32) * 5 / 9, humidity_pct=45, wind_kph=0.0)
    _, rec = decode_a5n1(bits)
    assert rec.wind_speed_kph == 0.0
    assert rec.temperature_c == pytest.approx(-17.7778, abs=1e-3)
    assert rec.humidity_pct == 45.0


def test_decode_a5n1_temp_raw_1115():
    # 71.5 F = 21.944 C, hand-evaluated from raw/10 - 40
    frame = bytearray(build_a5n1_frame(STATION, A5N1_MSG_TEMP_HUMIDITY))
    raw = 1115
    from wxkit.rfdecode import _with_parity
    frame[4] = _with_parity(raw >> 4)
    frame[5] = _with_parity((raw & 0xF) << 3)
    frame[7] = sum(frame[:7]) & 0xFF
    _, rec = decode_a5n1(bytes_to_bits(bytes(frame)))
    assert rec.temperature_c == pytest.approx(21.9444, abs=1e-3)


def test_decode_a5n1_wind_dir_rain():
    bits = _bits(msg=A5N1_MSG_WIND_DIR_RAIN, wind_dir_deg=90.0, rain_mm=0.254)
    _, rec = decode_a5n1(bits)
    assert rec.wind_dir_deg == 90.0
    assert rec.rain_mm == pytest.approx(0.254)
    assert rec.valid.wind_dir and rec.valid.rain and not rec.valid.temp


def test_decode_a5n1_checksum_error():
    frame = bytearray(build_a5n1_frame(STATION, A5N1_MSG_TEMP_HUMIDITY))
    frame[7] = (frame[7] + 1) & 0xFF
    with pytest.raises(ChecksumError):
        decode_a5n1(bytes_to_bits(bytes(frame)))


def test_decode_a5n1_parity_error_names_byte():
    frame = bytearray(build_a5n1_frame(STATION, A5N1_MSG_TEMP_HUMIDITY))
    frame[4] ^= 0x80           # flip only the parity bit
    frame[7] = sum(frame[:7]) & 0xFF   # keep checksum consistent
    with pytest.raises(ParityError) as exc:
        decode_a5n1(bytes_to_bits(bytes(frame)))
    assert exc.value.byte_index == 4


def test_decode_a5n1_unknown_message_type():
    frame = bytearray(build_a5n1_frame(STATION, A5N1_MSG_TEMP_HUMIDITY))
    frame[2] = 0x12   # even parity already; type 0x12 unknown
    frame[7] = sum(frame[:7]) & 0xFF
    with pytest.raises(UnknownMessageTypeError):
        decode_a5n1(bytes_to_bits(bytes(frame)))


def test_decode_a5n1_station_identity():
    bits = _bits()
    _, rec = decode_a5n1(bits)
    assert rec.station == STATION
    assert rec.sensor_battery_ok


def test_decode_a5n1_battery_low():
    bits = _bits(battery_ok=False)
    _, rec = decode_a5n1(bits)
    assert not rec.sensor_battery_ok


@settings(max_examples=200)
@given(st.integers(0, 2**64 - 1))
def test_decode_a5n1_never_panics(value):
    bits = f"{value:064b}"
    try:
        decode_a5n1(bits)
    except DecodeError:
        pass


# ---------------------------------------------------------------------------
# a5n1 encode round trips

def test_encode_a5n1_mostly_zero_checksum():
    frame = build_a5n1_frame(StationId(Protocol.A5N1, 0, 0),
                             A5N1_MSG_WIND_DIR_RAIN, battery_ok=False)
    assert frame[3:7] == bytes(4)
    assert frame[7] == (frame[0] + frame[1] + frame[2]) & 0xFF


def test_encode_a5n1_range_errors():
    with pytest.raises(ValueRangeError):
        build_a5n1_frame(STATION, A5N1_MSG_TEMP_HUMIDITY, humidity_pct=128)
    with pytest.raises(ValueRangeError):
        build_a5n1_frame(STATION, A5N1_MSG_TEMP_HUMIDITY, temperature_c=100.0)
    with pytest.raises(ValueRangeError):
        build_a5n1_frame(STATION, A5N1_MSG_WIND_DIR_RAIN, wind_dir_deg=360.0)
    with pytest.raises(ValueRangeError):
        build_a5n1_frame(STATION, A5N1_MSG_WIND_DIR_RAIN, wind_kph=120.0)


def test_encode_decode_a5n1_random_field_sets():
    rng = random.Random(20_240_817)
    for _ in range(1000):
        station = StationId(Protocol.A5N1, rng.randrange(0x4000), rng.randrange(4))
        battery = rng.random() < 0.5
        wind_raw = rng.randrange(128)
        wind_kph = 0.0 if wind_raw == 0 else 0.8278 * wind_raw + 1.0
        if rng.random() < 0.5:
            dir_code = rng.randrange(16)
            tips = rng.randrange(0x4000)
            train = encode_a5n1(station, A5N1_MSG_WIND_DIR_RAIN,
                                battery_ok=battery, wind_kph=wind_kph,
                                wind_dir_deg=dir_code * 22.5,
                                rain_mm=tips * 0.254)
            runs = frame_pulses(train, protocol=Protocol.A5N1)
            assert len(runs) == 1
            _, rec = decode_a5n1(runs[0])
            assert rec.wind_dir_deg == dir_code * 22.5
            assert rec.rain_mm == pytest.approx(tips * 0.254)
        else:
            temp_raw = rng.randrange(0x800)
            temp_c = ((temp_raw / 10 - 40) - 32) * 5 / 9
            hum = rng.randrange(101)
            train = encode_a5n1(station, A5N1_MSG_TEMP_HUMIDITY,
                                battery_ok=battery, wind_kph=wind_kph,
                                temperature_c=temp_c, humidity_pct=hum)
            runs = frame_pulses(train, protocol=Protocol.A5N1)
            assert len(runs) == 1
            _, rec = decode_a5n1(runs[0])
            assert rec.temperature_c == pytest.approx(temp_c, abs=0.006)
            assert rec.humidity_pct == hum
        assert rec.station == station
        assert rec.sensor_battery_ok == battery
        assert rec.wind_speed_kph == pytest.approx(wind_kph, abs=1e-9)


def test_a5n1_single_bit_flip_always_detected():
    frame = build_a5n1_frame(STATION, A5N1_MSG_TEMP_HUMIDITY,
                             temperature_c=21.0, humidity_pct=45, wind_kph=5.0)
    base = bytes_to_bits(frame)
    for pos in range(56):   # all payload bits, bytes 0..6
        flipped = base[:pos] + ("1" if base[pos] == "0" else "0") + base[pos + 1:]
        with pytest.raises(DecodeError):
            decode_a5n1(flipped)


# ---------------------------------------------------------------------------
# lcw

def test_decode_lcw_temp():
    nibbles = build_lcw_frame(LcwQuantity.TEMP, 25.3, LCW_STATION)
    assert nibbles[4:7] == (6, 5, 3)
    assert nibbles[12] == sum(nibbles[:12]) % 16
    _, rec = decode_lcw(nibbles_to_bits(nibbles))
    assert rec.temperature_c == pytest.approx(25.3)
    assert rec.station == LCW_STATION


def test_decode_lcw_zero_humidity():
    nibbles = build_lcw_frame(LcwQuantity.HUMIDITY, 0.0, LCW_STATION)
    _, rec = decode_lcw(nibbles_to_bits(nibbles))
    assert rec.humidity_pct == 0.0
    assert rec.valid.humidity


def test_decode_lcw_digit_repeat_error():
    nibbles = list(build_lcw_frame(LcwQuantity.TEMP, 25.3, LCW_STATION))
    nibbles[10] = (nibbles[10] + 1) % 10
    nibbles[12] = sum(nibbles[:12]) % 16
    with pytest.raises(DigitRepeatError):
        decode_lcw(nibbles_to_bits(tuple(nibbles)))


def test_decode_lcw_sync_error():
    nibbles = list(build_lcw_frame(LcwQuantity.TEMP, 25.3, LCW_STATION))
    nibbles[0] = 0xA
    nibbles[12] = sum(nibbles[:12]) % 16
    with pytest.raises(SyncError):
        decode_lcw(nibbles_to_bits(tuple(nibbles)))


def test_decode_lcw_checksum_error():
    nibbles = list(build_lcw_frame(LcwQuantity.TEMP, 25.3, LCW_STATION))
    nibbles[12] = (nibbles[12] + 1) % 16
    with pytest.raises(ChecksumError):
        decode_lcw(nibbles_to_bits(tuple(nibbles)))


def test_decode_lcw_bcd_error():
    nibbles = list(build_lcw_frame(LcwQuantity.TEMP, 25.3, LCW_STATION))
    nibbles[6] = 0xB
    nibbles[12] = sum(nibbles[:12]) % 16
    with pytest.raises(BcdError):
        decode_lcw(nibbles_to_bits(tuple(nibbles)))


def test_decode_lcw_unknown_quantity():
    nibbles = list(build_lcw_frame(LcwQuantity.TEMP, 25.3, LCW_STATION))
    nibbles[1] = 7
    nibbles[12] = sum(nibbles[:12]) % 16
    with pytest.raises(UnknownMessageTypeError):
        decode_lcw(nibbles_to_bits(tuple(nibbles)))


def test_decode_lcw_wind_dir_range():
    nibbles = list(build_lcw_frame(LcwQuantity.WIND_DIR, 337.5, LCW_STATION))
    assert decode_lcw(nibbles_to_bits(tuple(nibbles)))[1].wind_dir_deg == 337.5
    nibbles[1] = int(LcwQuantity.WIND_DIR)
    nibbles[4], nibbles[5], nibbles[6] = 0, 1, 6   # code 16 is out of range
    nibbles[10], nibbles[11] = nibbles[4], nibbles[5]
    nibbles[12] = sum(nibbles[:12]) % 16
    with pytest.raises(ValueRangeError):
        decode_lcw(nibbles_to_bits(tuple(nibbles)))


def test_encode_lcw_value_range():
    with pytest.raises(ValueRangeError):
        build_lcw_frame(LcwQuantity.TEMP, 60.0, LCW_STATION)   # V would be 1000
    with pytest.raises(ValueRangeError):
        build_lcw_frame(LcwQuantity.HUMIDITY, -1.0, LCW_STATION)


def test_lcw_single_nibble_substitutions_detected():
    nibbles = build_lcw_frame(LcwQuantity.TEMP, 25.3, LCW_STATION)
    for i in range(13):
        for sub in range(16):
            if sub == nibbles[i]:
                continue
            mutated = nibbles[:i] + (sub,) + nibbles[i + 1:]
            with pytest.raises(DecodeError):
                decode_lcw(nibbles_to_bits(mutated))


def test_encode_decode_lcw_random_values():
    rng = random.Random(99)
    for _ in range(1000):
        station = StationId(Protocol.LCW, rng.randrange(128), 0)
        battery = rng.random() < 0.5
        quantity = LcwQuantity(rng.randrange(5))
        v = rng.randrange(16 if quantity is LcwQuantity.WIND_DIR else 1000)
        physical = {
            LcwQuantity.TEMP: v / 10 - 40,
            LcwQuantity.HUMIDITY: v / 10,
            LcwQuantity.RAIN: v * 0.518,
            LcwQuantity.WIND_SPEED: v / 10,
            LcwQuantity.WIND_DIR: v * 22.5,
        }[quantity]
        train = encode_lcw(quantity, physical, station, battery_ok=battery)
        runs = frame_pulses(train, protocol=Protocol.LCW)
        assert len(runs) == 1
        frame, rec = decode_lcw(runs[0])
        assert frame.quantity == quantity
        assert rec.station == station
        assert rec.sensor_battery_ok == battery
        expected_kph = physical * 3.6 if quantity is LcwQuantity.WIND_SPEED else None
        field = {
            LcwQuantity.TEMP: rec.temperature_c,
            LcwQuantity.HUMIDITY: rec.humidity_pct,
            LcwQuantity.RAIN: rec.rain_mm,
            LcwQuantity.WIND_SPEED: rec.wind_speed_kph,
            LcwQuantity.WIND_DIR: rec.wind_dir_deg,
        }[quantity]
        assert field == pytest.approx(expected_kph if expected_kph is not None else physical,
                                      abs=1e-9)


@settings(max_examples=200)
@given(st.integers(0, 2**52 - 1))
def test_decode_lcw_never_panics(value):
    bits = f"{value:052b}"
    try:
        decode_lcw(bits)
    except DecodeError:
        pass


def test_bits_nibbles_helpers():
    assert bits_to_nibbles("10010000") == (9, 0)
    assert nibbles_to_bits((9, 0)) == "10010000"
    with pytest.raises(ValueError):
        bits_to_nibbles("101")


# ---------------------------------------------------------------------------
# rain counter

def test_rain_counter_delta():
    assert rain_counter_delta(100, 103) == pytest.approx(0.762)
    assert rain_counter_delta(16383, 2) == pytest.approx(0.762)
    assert rain_counter_delta(7, 7) == 0.0
    with pytest.raises(ValueError):
        rain_counter_delta(-1, 0)


@given(st.lists(st.integers(0, 0x3FFF), min_size=2, max_size=20))
def test_rain_delta_fold_is_monotone(counters):
    total = 0.0
    for prev, curr in zip(counters, counters[1:]):
        delta = rain_counter_delta(prev, curr)
        assert delta >= 0.0
        total += delta
    assert total >= 0.0
