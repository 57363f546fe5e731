"""Hand-built example models and rows shipped with the package.

``depression`` is a binomial model of six rules over ``IDS``, ``LCImax``,
``AO`` and ``GAD``; ``substance`` is a Poisson model with a confirmatory
treatment rule and a winsorized linear term for ``week1``. Their coefficients
carry one more digit than the usual three-decimal printout so that sums of
contributions round consistently.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .dataset import DataSet, load_csv
from .ensemble import FittedEnsemble, load_model

NAMES = ("depression", "substance")


def path(filename: str) -> Path:
    return Path(str(resources.files("prerules") / "data" / filename))


def model(name: str) -> FittedEnsemble:
    if name not in NAMES:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(NAMES)}")
    return load_model(path(f"{name}_model.json"))


def rows(name: str) -> DataSet:
    """The example rows for fixture ``name``; the ``id`` column holds the row labels."""
    ens = model(name)
    return load_csv(path(f"{name}_rows.csv"), ens.schema, require_all=False)
