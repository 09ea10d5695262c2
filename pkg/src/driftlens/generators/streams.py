"""Small hand-built drifting streams: cluster swap and sensor faults."""
from __future__ import annotations

import numpy as np

from ..core import Dataset
from ..errors import IndexOutOfRange
from .perturb import LabeledStream


def two_cluster_swap(n: int = 1000, seed: int = 0, change_point: float = 0.5,
                     separation: float = 10.0, shift: float = 3.0, scale: float = 0.5,
                     static_fraction: float = 0.5) -> LabeledStream:
    """One static cluster and one that jumps along ``x1`` at the change point.

    Cluster A sits at (-separation/2, 0) for the whole stream. Cluster B sits
    at (separation/2, +shift) before the change point and at
    (separation/2, -shift) afterwards, so ``x1`` is the only feature whose
    relation to time changes. ``extra_truth["regions"]`` holds the expected
    before/after/not_drifting label of every sample.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1A5]))
    t = np.linspace(0.0, 1.0, n)
    static = rng.random(n) < static_fraction
    after = t >= change_point
    centers = np.empty((n, 2))
    centers[:, 0] = np.where(static, -separation / 2, separation / 2)
    centers[:, 1] = np.where(static, 0.0, np.where(after, -shift, shift))
    X = centers + rng.standard_normal((n, 2)) * scale
    regions = np.where(static, "not_drifting", np.where(after, "after", "before")).astype(object)
    ds = Dataset(X, t, ("x0", "x1"), meta={"generator": "two_cluster_swap", "seed": seed})
    prov = {"base": "two_cluster_swap", "seed": seed, "separation": separation,
            "shift": shift, "scale": scale}
    return LabeledStream(ds, np.array([False, True]), change_point, prov,
                         {"regions": [str(r) for r in regions], "static": static})


def gen_sensor_fault(n_sensors: int = 8, n: int = 3000, fault_times=(), fault_sensors=(),
                     seed: int = 0, period: int = 96, noise: float = 0.1,
                     ramp: float = 3.0) -> LabeledStream:
    """Correlated periodic sensor readings with stuck-and-drifting faults.

    Every sensor reads ``offset + gain * demand + noise`` where ``demand`` is
    a shared two-harmonic cycle of ``period`` samples. From a fault onwards
    the sensor reports its mean level plus a ramp reaching ``ramp`` units
    (in multiples of the sensor's std) one full stream length later.
    """
    fault_times = list(fault_times)
    fault_sensors = list(fault_sensors)
    if len(fault_times) != len(fault_sensors):
        raise ValueError("fault_times and fault_sensors must have the same length")
    for s in fault_sensors:
        if not 0 <= s < n_sensors:
            raise IndexOutOfRange(f"sensor {s} out of range for {n_sensors} sensors")
    for ft in fault_times:
        if not 0 < ft < 1:
            raise ValueError(f"fault time {ft} not in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E75]))
    i = np.arange(n)
    t = np.linspace(0.0, 1.0, n)
    phase = rng.uniform(0, 2 * np.pi, 2)
    demand = (np.sin(2 * np.pi * i / period + phase[0])
              + 0.4 * np.sin(4 * np.pi * i / period + phase[1]))
    offset = rng.uniform(-1, 1, n_sensors)
    gain = rng.uniform(0.5, 1.5, n_sensors)
    X = offset + demand[:, None] * gain + noise * rng.standard_normal((n, n_sensors))
    truth = np.zeros(n_sensors, dtype=bool)
    for ft, s in zip(fault_times, fault_sensors):
        on = t >= ft
        level = offset[s]
        sd = float(np.sqrt(gain[s] ** 2 * demand.var() + noise ** 2))
        X[on, s] = level + ramp * sd * (t[on] - ft)
        truth[s] = True
    names = tuple(f"sensor{j}" for j in range(n_sensors))
    ds = Dataset(X, t, names, meta={"generator": "sensor_fault", "seed": seed})
    prov = {"base": "sensor_fault", "seed": seed, "n_sensors": n_sensors,
            "fault_times": fault_times, "fault_sensors": fault_sensors,
            "period": period, "noise": noise, "ramp": ramp}
    return LabeledStream(ds, truth, min(fault_times) if fault_times else None, prov)
