"""Deterministic demo datasets.

The anomaly time series is built so that a 3-sigma rule over the final
data flags exactly ``n_anomalies`` points; construction re-checks that
with an independent brute-force count and refuses to hand out a dataset
that drifted.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd


def three_sigma_count(values: list[float]) -> int:
    """Brute-force 3-sigma outlier count (sample standard deviation)."""
    n = len(values)
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / (n - 1)
    std = math.sqrt(variance)
    return sum(1 for v in values if v < mean - 3 * std or v > mean + 3 * std)


def make_anomaly_series(
    n_points: int = 300, n_anomalies: int = 11, seed: int = 7
) -> pd.DataFrame:
    """A ts/val time series with exactly ``n_anomalies`` 3-sigma outliers."""
    rng = np.random.default_rng(seed)
    values = rng.normal(loc=50.0, scale=1.0, size=n_points)
    anomaly_positions = rng.choice(n_points, size=n_anomalies, replace=False)
    # Spikes far beyond 3 sigma even after they inflate the std themselves.
    values[anomaly_positions] += rng.choice([-1.0, 1.0], size=n_anomalies) * 18.0

    count = three_sigma_count(list(values))
    if count != n_anomalies:
        raise AssertionError(
            f"dataset construction produced {count} outliers, wanted {n_anomalies}"
        )
    timestamps = pd.date_range("2024-01-01", periods=n_points, freq="h")
    return pd.DataFrame({"ts": timestamps, "val": np.round(values, 4)})


def write_anomaly_csv(path: str | Path, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    make_anomaly_series(**kwargs).to_csv(path, index=False)
    return path
