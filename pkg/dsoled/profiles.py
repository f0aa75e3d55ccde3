"""Synthetic normalized demand and PV availability profiles"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

_LOGGER = logging.getLogger(__name__)

PV_TN = "pv_tn"
PV_DN = "pv_dn"


@dataclass(frozen=True)
class ProfileSpec:
    """Shape parameters of the synthetic profile family"""

    n_profiles: int = 17

    morning_peak_hour: float = 9.0
    evening_peak_hour: float = 20.0
    peak_width_hours: float = 2.5

    peak_jitter_hours: float = 1.5
    """Per-profile random shift of both peaks"""

    valley_depth: float = 0.55
    """Night level is (1 - valley_depth) before normalization"""

    sunrise_hour: float = 6.0
    sunset_hour: float = 20.0

    noon_plateau_hours: float = 2.0
    """Width of the flat top of the PV curve"""

    noise: float = 0.03
    seed: int = 0

    @staticmethod
    def from_dict(config: Dict[str, Any]) -> "ProfileSpec":
        return ProfileSpec(
            n_profiles=int(config.get("n_profiles", 17)),
            morning_peak_hour=float(config.get("morning_peak_hour", 9.0)),
            evening_peak_hour=float(config.get("evening_peak_hour", 20.0)),
            peak_width_hours=float(config.get("peak_width_hours", 2.5)),
            peak_jitter_hours=float(config.get("peak_jitter_hours", 1.5)),
            valley_depth=float(config.get("valley_depth", 0.55)),
            sunrise_hour=float(config.get("sunrise_hour", 6.0)),
            sunset_hour=float(config.get("sunset_hour", 20.0)),
            noon_plateau_hours=float(config.get("noon_plateau_hours", 2.0)),
            noise=float(config.get("noise", 0.03)),
            seed=int(config.get("seed", 0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_profiles": self.n_profiles,
            "morning_peak_hour": self.morning_peak_hour,
            "evening_peak_hour": self.evening_peak_hour,
            "peak_width_hours": self.peak_width_hours,
            "peak_jitter_hours": self.peak_jitter_hours,
            "valley_depth": self.valley_depth,
            "sunrise_hour": self.sunrise_hour,
            "sunset_hour": self.sunset_hour,
            "noon_plateau_hours": self.noon_plateau_hours,
            "noise": self.noise,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ProfileSet:
    spec: ProfileSpec
    demand: np.ndarray
    """(n_profiles, horizon), each row peaking at exactly 1.0"""

    pv_tn: np.ndarray
    pv_dn: np.ndarray

    @property
    def horizon(self) -> int:
        return int(self.demand.shape[1])

    @property
    def n_profiles(self) -> int:
        return int(self.demand.shape[0])

    def assign(self, index: int) -> int:
        """Cyclic assignment of a 0-based bus index to a profile"""
        return index % self.n_profiles

    def curve(self, index: int) -> Tuple[float, ...]:
        return tuple(float(v) for v in self.demand[self.assign(index)])

    def to_frame(self) -> pd.DataFrame:
        """Long format (period, profile_id, value)"""
        records = []
        for k in range(self.n_profiles):
            for t in range(self.horizon):
                records.append((t, f"demand{k + 1}", float(self.demand[k, t])))

        for name, curve in ((PV_TN, self.pv_tn), (PV_DN, self.pv_dn)):
            for t in range(self.horizon):
                records.append((t, name, float(curve[t])))

        return pd.DataFrame.from_records(records, columns=["period", "profile_id", "value"])


def _hours(horizon: int) -> np.ndarray:
    return np.arange(horizon, dtype=float) * 24.0 / horizon


def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    # circular distance on the 24 h clock
    distance = np.abs((hours - center + 12.0) % 24.0 - 12.0)
    return np.exp(-0.5 * (distance / width) ** 2)


def _normalize_unique_peak(values: np.ndarray) -> np.ndarray:
    values = np.clip(values, 0.0, None)
    peak = int(np.argmax(values))
    values = values / values[peak]
    others = np.arange(values.size) != peak
    values[others] = np.minimum(values[others], 1.0 - 1e-9)
    values[peak] = 1.0
    return values


def _pv_curve(spec: ProfileSpec, hours: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    span = spec.sunset_hour - spec.sunrise_hour
    assert span > 0, "Sunset before sunrise"

    daylight = (hours > spec.sunrise_hour) & (hours < spec.sunset_hour)
    phase = np.where(daylight, (hours - spec.sunrise_hour) / span, 0.0)
    plateau = np.cos(np.pi * spec.noon_plateau_hours / (2.0 * span))
    curve = np.where(daylight, np.minimum(1.0, np.sin(np.pi * phase) / plateau), 0.0)
    curve = curve * (1.0 - spec.noise * rng.random(hours.size))
    curve[~daylight] = 0.0
    if curve.max() > 0:
        curve = curve / curve.max()

    return curve


def synthesize_profiles(spec: ProfileSpec, horizon: int) -> ProfileSet:
    """Seeded demand curves (max exactly 1.0 once each) and one PV curve per layer"""
    assert horizon >= 1, "Empty horizon"
    assert spec.n_profiles >= 1, "No profiles requested"

    if horizon == 1:
        ones = np.ones((spec.n_profiles, 1))
        return ProfileSet(spec, ones, np.ones(1), np.ones(1))

    rng = np.random.default_rng(spec.seed)
    hours = _hours(horizon)
    demand = np.zeros((spec.n_profiles, horizon))
    for k in range(spec.n_profiles):
        shift_morning, shift_evening = rng.uniform(
            -spec.peak_jitter_hours, spec.peak_jitter_hours, size=2
        )
        weight_morning, weight_evening = rng.uniform(0.5, 1.0, size=2)
        shape = weight_morning * _bump(
            hours, spec.morning_peak_hour + shift_morning, spec.peak_width_hours
        ) + weight_evening * _bump(
            hours, spec.evening_peak_hour + shift_evening, spec.peak_width_hours
        )
        base = 1.0 - spec.valley_depth
        curve = base + spec.valley_depth * shape / max(shape.max(), 1e-12)
        curve = curve * (1.0 + spec.noise * rng.standard_normal(horizon))
        demand[k] = _normalize_unique_peak(curve)

    pv_tn = _pv_curve(spec, hours, rng)
    pv_dn = _pv_curve(spec, hours, rng)
    _LOGGER.debug(
        "Synthesized %s demand profile(s) over %s period(s), seed %s",
        spec.n_profiles,
        horizon,
        spec.seed,
    )

    return ProfileSet(spec, demand, pv_tn, pv_dn)
