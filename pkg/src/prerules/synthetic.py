"""Synthetic data sets with a known generating model."""

from __future__ import annotations

import numpy as np

from .dataset import DataSet

CELL_MEANS = (2.0, 5.0, 9.0)


def three_region_signal(x1, x2) -> np.ndarray:
    """``5 - 3*I(x1 <= 8 & x2 <= 10) + 4*I(x1 > 8)``: cells with means 2, 5 and 9."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return 5.0 - 3.0 * ((x1 <= 8) & (x2 <= 10)) + 4.0 * (x1 > 8)


def three_region(n: int = 1000, noise_sd: float = 0.5, n_noise: int = 8, rng=None) -> DataSet:
    """Integer ``x1`` in 1..16 and ``x2`` in 1..20, plus standard-normal noise predictors."""
    rng = np.random.default_rng(rng)
    x1 = rng.integers(1, 17, size=n).astype(float)
    x2 = rng.integers(1, 21, size=n).astype(float)
    y = three_region_signal(x1, x2)
    if noise_sd > 0:
        y = y + rng.normal(0.0, noise_sd, size=n)
    cols = {"x1": x1, "x2": x2}
    for j in range(n_noise):
        cols[f"z{j + 1}"] = rng.normal(size=n)
    cols["y"] = y
    return DataSet.from_columns(cols, response="y")


def depression_mimic(n: int = 682, rng=None) -> DataSet:
    """Binary outcome driven by two predictors (``IDS``, ``LCImax``) among several distractors.

    The outcome probability rises with symptom severity and duration; ``AO``,
    ``GAD`` and three further columns carry no signal.
    """
    rng = np.random.default_rng(rng)
    ids = np.round(rng.gamma(4.0, 5.0, size=n))
    lci = np.round(rng.beta(1.2, 1.5, size=n), 3)
    ao = np.round(rng.uniform(8, 60, size=n))
    gad = rng.choice(["Negative", "Positive"], size=n)
    eta = -2.2 + 1.6 * (ids > 14) + 1.4 * (lci > 0.35) + 0.04 * (ids - 20)
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    cols = {"IDS": ids, "LCImax": lci, "AO": ao, "GAD": gad}
    for j in range(3):
        cols[f"noise{j + 1}"] = rng.normal(size=n)
    cols["chronic"] = y
    return DataSet.from_columns(cols, response="chronic", levels={"GAD": ["Negative", "Positive"]})
