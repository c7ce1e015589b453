"""Weather-station RF decoding, compact LoRaWAN repacking, and transponder
duty-cycle/energy simulation."""

from .core import (
    Protocol,
    StationId,
    ValidityFlags,
    WeatherRecord,
    merge_partial,
    quantize_roundtrip_bounds,
)
from .rfdecode import (
    A5N1Frame,
    LCWFrame,
    PulseTrain,
    TimingSpec,
    decode_a5n1,
    decode_lcw,
    encode_a5n1,
    encode_lcw,
    frame_pulses,
    rain_counter_delta,
)
from .lorawan import (
    AbpSession,
    RadioParams,
    airtime,
    duty_cycle_wait,
    frame_build,
    frame_parse,
    governor_check,
    payload_decode,
    payload_encode,
)
from .energy import (
    BSF32,
    LOPY4,
    EnergyProfile,
    battery_life_days,
    cycle_energy,
    daily_energy,
    fit_component_power,
)
from .simkit import SimConfig, SimTrace, channel_apply, run

__version__ = "0.1.0"
