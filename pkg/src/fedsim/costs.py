"""Calibrated resource model.

Maps (architecture, resolution, batch) to training time, peak GPU memory,
power and utilization ranges, using measured values shipped in
``data/cost_calibration.json``.  Values the calibration does not cover are
derived (scaled or interpolated) and flagged as estimated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import ConfigError

ARCHITECTURES = ("v5", "v8", "v11")
RESOLUTIONS = (320, 640, 960)
BATCHES = (4, 8, 16, 32)

TRAINING_PHASE = "training"
IDLE_PHASE = "aggregation_idle"


@dataclass(frozen=True)
class CostEntry:
    resolution: int
    batch: int
    train_time_s: float  # per reference 10-round run at full data
    peak_mem_mib: float
    power_w_range: tuple[float, float]
    util_pct_range: tuple[float, float]
    infer_ms: float | None = None
    estimated: bool = False  # True when any field is derived, not measured

    def __post_init__(self):
        if self.train_time_s <= 0 or self.peak_mem_mib <= 0:
            raise ConfigError("time and memory must be strictly positive")
        for low, high in (self.power_w_range, self.util_pct_range):
            if low > high:
                raise ConfigError("range low must not exceed high")


@dataclass(frozen=True)
class CostProfile:
    architecture: str
    entries: dict[tuple[int, int], CostEntry]
    power_w_range: tuple[float, float]
    util_pct_range: tuple[float, float]


@dataclass(frozen=True)
class DeviceSpec:
    mem_capacity_mib: float = 49140.0
    speed_factor: float = 1.0

    def __post_init__(self):
        if self.mem_capacity_mib <= 0:
            raise ConfigError("memory capacity must be positive")
        if self.speed_factor <= 0:
            raise ConfigError("speed factor must be positive")


@dataclass(frozen=True)
class Calibration:
    profiles: dict[str, CostProfile]
    fedprox_time_factor: float
    idle_power_w: float
    idle_util_pct_range: tuple[float, float]
    inference_ms: dict[str, dict[int, dict[str, float]]]
    default_mem_capacity_mib: float
    raw: dict

    def profile(self, architecture: str) -> CostProfile:
        try:
            return self.profiles[architecture]
        except KeyError:
            raise ConfigError(
                f"unknown architecture {architecture!r}; "
                f"expected one of {', '.join(ARCHITECTURES)}"
            ) from None


_CACHED: Calibration | None = None


def load_calibration(path: str | None = None) -> Calibration:
    """Load the shipped calibration tables, or an override file."""
    global _CACHED
    if path is None and _CACHED is not None:
        return _CACHED
    if path is None:
        text = (
            resources.files("fedsim.data").joinpath("cost_calibration.json").read_text()
        )
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    cal = _build_calibration(doc)
    if path is None:
        _CACHED = cal
    return cal


def _build_calibration(doc: dict) -> Calibration:
    profiles = {}
    archs = doc["architectures"]
    v8_times = {
        key: spec["train_time_s"]
        for key, spec in archs["v8"]["entries"].items()
        if "train_time_s" in spec
    }
    for arch, arch_doc in archs.items():
        power = tuple(arch_doc["power_w_range"])
        util = tuple(arch_doc["util_pct_range"])
        entries = {}
        # Architectures without a full time series get v8's shape scaled by
        # the measured 640x32 ratio; those times are flagged estimated.
        own_ref = arch_doc["entries"]["640x32"].get("train_time_s")
        v8_ref = v8_times["640x32"]
        for key, spec in arch_doc["entries"].items():
            res_s, batch_s = key.split("x")
            res, batch = int(res_s), int(batch_s)
            time = spec.get("train_time_s")
            estimated = False
            if time is None:
                time = v8_times[key] * (own_ref / v8_ref)
                estimated = True
            entries[(res, batch)] = CostEntry(
                resolution=res,
                batch=batch,
                train_time_s=float(time),
                peak_mem_mib=float(spec["peak_mem_mib"]),
                power_w_range=power,
                util_pct_range=util,
                estimated=estimated,
            )
        profiles[arch] = CostProfile(arch, entries, power, util)
    inference = {
        dataset: {int(res): dict(by_arch) for res, by_arch in table.items()}
        for dataset, table in doc["inference_ms"].items()
    }
    return Calibration(
        profiles=profiles,
        fedprox_time_factor=float(doc["fedprox_time_factor"]),
        idle_power_w=float(doc["idle_power_w"]),
        idle_util_pct_range=tuple(doc["idle_util_pct_range"]),
        inference_ms=inference,
        default_mem_capacity_mib=float(doc["default_device_mem_capacity_mib"]),
        raw=doc,
    )


def lookup(
    profile: CostProfile,
    resolution: int,
    batch: int,
    allow_extrapolation: bool = False,
) -> CostEntry:
    """Exact entry for calibrated keys; log-linear batch interpolation
    otherwise.

    Keys outside the calibrated hull at the requested resolution raise
    unless extrapolation is explicitly allowed, in which case the batch
    shape measured at 960 is applied multiplicatively and flagged
    estimated.
    """
    key = (resolution, batch)
    if key in profile.entries:
        return profile.entries[key]
    at_res = sorted(b for (r, b) in profile.entries if r == resolution)
    if not at_res:
        raise ConfigError(
            f"resolution {resolution} is not calibrated for {profile.architecture}"
        )
    below = [b for b in at_res if b < batch]
    above = [b for b in at_res if b > batch]
    if below and above:
        b0, b1 = below[-1], above[0]
        e0, e1 = profile.entries[(resolution, b0)], profile.entries[(resolution, b1)]
        t = (math.log(batch) - math.log(b0)) / (math.log(b1) - math.log(b0))

        def mix(a: float, b: float) -> float:
            return math.exp((1 - t) * math.log(a) + t * math.log(b))

        return CostEntry(
            resolution=resolution,
            batch=batch,
            train_time_s=mix(e0.train_time_s, e1.train_time_s),
            peak_mem_mib=mix(e0.peak_mem_mib, e1.peak_mem_mib),
            power_w_range=e0.power_w_range,
            util_pct_range=e0.util_pct_range,
            estimated=True,
        )
    if not allow_extrapolation:
        raise ConfigError(
            f"({resolution}, {batch}) lies outside the calibrated hull for "
            f"{profile.architecture}; pass allow_extrapolation to estimate it"
        )
    # Apply the batch-size shape measured at 960 to this resolution's
    # batch-32 anchor.
    anchor = profile.entries[(resolution, 32)]
    shape_src = profile.entries.get((960, batch))
    shape_ref = profile.entries.get((960, 32))
    if shape_src is None or shape_ref is None:
        raise ConfigError(f"no batch shape available for batch {batch}")
    return replace(
        anchor,
        batch=batch,
        train_time_s=anchor.train_time_s * shape_src.train_time_s / shape_ref.train_time_s,
        peak_mem_mib=anchor.peak_mem_mib * shape_src.peak_mem_mib / shape_ref.peak_mem_mib,
        estimated=True,
    )


def client_round_time(
    entry: CostEntry,
    data_fraction: float,
    device: DeviceSpec,
    strategy: str,
    fedprox_factor: float = 1.15,
) -> float:
    """Modeled wall time for one client's local training window.

    Scales linearly with data volume, inversely with device speed, with a
    uniform multiplicative overhead for proximal training.
    """
    if data_fraction <= 0:
        raise ConfigError("data_fraction must be positive")
    overhead = fedprox_factor if strategy == "fedprox" else 1.0
    return entry.train_time_s * data_fraction / device.speed_factor * overhead


def check_memory(entry: CostEntry, device: DeviceSpec) -> bool:
    """True when the configuration fits the device (<= capacity passes)."""
    return entry.peak_mem_mib <= device.mem_capacity_mib


def sample_power_and_util(
    entry: CostEntry,
    phase: str,
    seed,
    calibration: Calibration | None = None,
) -> tuple[float, float]:
    """Seeded draw of (watts, utilization %) for a simulation window.

    Training draws uniformly within the entry's measured ranges; the idle
    aggregation phase uses the fixed idle power floor and the observed
    0-10% utilization band.
    """
    cal = calibration or load_calibration()
    rng = np.random.default_rng(seed)
    if phase == TRAINING_PHASE:
        power = float(rng.uniform(*entry.power_w_range))
        util = float(rng.uniform(*entry.util_pct_range))
        return power, util
    if phase == IDLE_PHASE:
        util = float(rng.uniform(*cal.idle_util_pct_range))
        return cal.idle_power_w, util
    raise ConfigError(f"unknown phase {phase!r}")


def validate_calibration(cal: Calibration) -> list[str]:
    """Check the measured monotonicity properties; return violations."""
    problems = []
    for arch, profile in cal.profiles.items():
        mem32 = [profile.entries[(r, 32)].peak_mem_mib for r in RESOLUTIONS]
        if not (mem32[0] < mem32[1] < mem32[2]):
            problems.append(f"{arch}: memory not increasing with resolution at batch 32")
        t32 = [profile.entries[(r, 32)].train_time_s for r in RESOLUTIONS]
        if not (t32[0] < t32[1] < t32[2]):
            problems.append(f"{arch}: time not increasing with resolution at batch 32")
        mem960 = [profile.entries[(960, b)].peak_mem_mib for b in BATCHES]
        if not all(a < b for a, b in zip(mem960, mem960[1:])):
            problems.append(f"{arch}: memory not increasing with batch at 960")
        t960 = [profile.entries[(960, b)].train_time_s for b in BATCHES]
        if not all(a > b for a, b in zip(t960, t960[1:])):
            problems.append(f"{arch}: time not decreasing with batch at 960")
    return problems
