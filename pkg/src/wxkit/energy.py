"""Closed-form cycle-energy and battery-life model for the two transponder
platforms.

The active phase is treated as a measured lump (``e_active_uwh``); the
optional component detail splits it into receiver, radio-TX and residual
MCU shares for the simulator's ledger, but never changes the total.
"""

from __future__ import annotations

from dataclasses import dataclass

HOUR_S = 3600.0
DAY_S = 86400.0


class EnergyModelError(ValueError):
    pass


@dataclass(frozen=True)
class ComponentDetail:
    """Measured component currents and nominal phase durations used to
    attribute the active-phase lump across simulator states."""

    i_shr_ma: float = 9.9       # average draw while the 433 MHz receiver is on
    i_tx_ma: float = 102.0      # draw during the LoRa transmission
    t_shr_s: float = 41.0       # nominal receiver-on time per cycle
    t_tx_s: float = 0.289       # nominal transmission time


@dataclass(frozen=True)
class EnergyProfile:
    name: str
    supply_v: float
    t_active_s: float
    e_active_uwh: float
    i_sleep_ua: float
    battery_uwh: float
    detail: ComponentDetail | None = None

    def __post_init__(self):
        if self.t_active_s <= 0 or self.e_active_uwh <= 0:
            raise EnergyModelError("active phase duration and energy must be positive")
        if self.supply_v <= 0 or self.i_sleep_ua < 0 or self.battery_uwh <= 0:
            raise EnergyModelError("supply, sleep current and battery must be positive")
        if self.detail is not None:
            # component energies must not exceed the measured active lump
            fit_component_power(self)

    @property
    def sleep_power_uw(self) -> float:
        return self.i_sleep_ua * self.supply_v


def cycle_energy(profile: EnergyProfile, t_cycle_s: float) -> float:
    """Energy per cycle in uWh: the active lump plus sleep for the rest."""
    if t_cycle_s < profile.t_active_s:
        raise EnergyModelError(
            f"cycle of {t_cycle_s} s is shorter than the {profile.t_active_s} s active phase"
        )
    return profile.e_active_uwh + profile.sleep_power_uw * (t_cycle_s - profile.t_active_s) / HOUR_S


def daily_energy(profile: EnergyProfile, t_cycle_s: float) -> float:
    """Consumption per day in uWh."""
    return cycle_energy(profile, t_cycle_s) * (DAY_S / t_cycle_s)


def battery_life_days(profile: EnergyProfile, t_cycle_s: float) -> float:
    return profile.battery_uwh / daily_energy(profile, t_cycle_s)


def fit_component_power(
    profile: EnergyProfile,
    measured_e_active_uwh: float | None = None,
    *,
    t_shr_s: float | None = None,
    t_tx_s: float | None = None,
) -> float:
    """Residual MCU power in uW after the receiver and radio-TX shares are
    taken out of the measured active-phase energy.

    Durations default to the profile's component detail. A parameter set
    whose component energies exceed the measured total is inconsistent and
    raises; the caller is expected to fix the durations, not clamp.
    """
    if profile.detail is None:
        raise EnergyModelError(f"profile {profile.name} carries no component detail")
    d = profile.detail
    e_active = profile.e_active_uwh if measured_e_active_uwh is None else measured_e_active_uwh
    t_shr = d.t_shr_s if t_shr_s is None else t_shr_s
    t_tx = d.t_tx_s if t_tx_s is None else t_tx_s
    e_shr = d.i_shr_ma * 1000.0 * profile.supply_v * t_shr / HOUR_S
    e_tx = d.i_tx_ma * 1000.0 * profile.supply_v * t_tx / HOUR_S
    residual = e_active - e_shr - e_tx
    if residual < 0:
        raise EnergyModelError(
            f"component energies ({e_shr:.1f} + {e_tx:.1f} uWh) exceed the "
            f"measured active total ({e_active:.1f} uWh)"
        )
    return residual * HOUR_S / profile.t_active_s


BSF32 = EnergyProfile(
    name="bsf32",
    supply_v=3.7,
    t_active_s=42.2,
    e_active_uwh=449.0,
    i_sleep_ua=144.0,
    battery_uwh=7.4e6,      # 3.7 V, 2000 mAh Li-ion
    detail=ComponentDetail(),
)

LOPY4 = EnergyProfile(
    name="lopy4",
    supply_v=4.5,
    t_active_s=44.06,
    e_active_uwh=1170.0,
    i_sleep_ua=32.8,
    battery_uwh=48e6,       # 3 type D alkaline cells
    detail=ComponentDetail(),
)

PROFILES = {p.name: p for p in (BSF32, LOPY4)}
