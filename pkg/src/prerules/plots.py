"""Static SVG plots of importances and partial dependence (matplotlib, no display needed)."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed metadata keeps repeated runs byte-identical
    matplotlib.rcParams["svg.hashsalt"] = "prerules"
    return plt


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})


def importance_svg(variables: Sequence[tuple[str, float]], path, standardized: bool = False) -> None:
    plt = _pyplot()
    names = [v for v, _ in variables][::-1]
    values = [imp for _, imp in variables][::-1]
    fig, ax = plt.subplots(figsize=(6, 0.4 * max(len(names), 2) + 1))
    ax.barh(names, values, color="0.4")
    ax.set_xlabel("standardized importance" if standardized else "importance")
    _save(fig, path)
    plt.close(fig)


def pd_svg(pd, path, ylabel: str = "prediction") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(pd.variables) == 1:
        xs = [p[0] for p in pd.grid]
        if all(isinstance(x, float) for x in xs):
            ax.plot(xs, pd.values[:, 0], marker="o", color="0.2")
        else:
            ax.bar([str(x) for x in xs], pd.values[:, 0], color="0.4")
        ax.set_xlabel(pd.variables[0])
        ax.set_ylabel(ylabel)
    else:
        first = list(dict.fromkeys(p[0] for p in pd.grid))
        second = list(dict.fromkeys(p[1] for p in pd.grid))
        z = np.asarray(pd.values[:, 0]).reshape(len(first), len(second))
        im = ax.imshow(z.T, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(first)), [str(v) for v in first], rotation=90)
        ax.set_yticks(range(len(second)), [str(v) for v in second])
        ax.set_xlabel(pd.variables[0])
        ax.set_ylabel(pd.variables[1])
        fig.colorbar(im, ax=ax, label=ylabel)
    _save(fig, path)
    plt.close(fig)
