"""Analysis outputs: delimited tables, plot payloads, and rendered figures.

Everything derives from the results store (and optionally the annotation
corpus): per-role verdict prevalence by location pair, the threshold sweep,
score histograms, compliance and category tables, and label transitions.
Each payload is written as CSV or JSON; the figures are renderings of the
same payloads, written as PNG files next to them.
"""

from __future__ import annotations

import json
import os
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .corpus import BannerAnnotation, CATEGORIES
from .errors import InputError
from .scoring import VERDICT_ROLES
from .stats import category_frequencies, compliance_table, transitions

DEFAULT_SWEEP = [round(t * 0.005, 3) for t in range(0, 21)]


def _pair_of(record: dict[str, Any]) -> tuple[str, str]:
    return ("EU" if record["website_eu"] else "non-EU", record["locale"])


def prevalence_grid(records: Sequence[dict[str, Any]]) -> pd.DataFrame:
    """Per-role winner prevalence (percent) among the compliant subset.

    Rows cover website location x visitor locale including the marginal
    totals (``all``), nine rows in full; columns are the verdict roles plus
    ``none`` and the cell count, so each role reads as a 3x3 grid with
    totals.
    """
    subset = [r for r in records if r.get("compliant_subset")]
    if not subset:
        raise InputError("no compliant-subset records in store")
    rows = []
    for website in ("EU", "non-EU", "all"):
        for visitor in ("EU", "US", "all"):
            members = [
                r
                for r in subset
                if (website == "all" or _pair_of(r)[0] == website)
                and (visitor == "all" or _pair_of(r)[1] == visitor)
            ]
            row: dict[str, Any] = {
                "website": website,
                "visitor": visitor,
                "n": len(members),
            }
            for role in (*VERDICT_ROLES, "none"):
                hits = sum(
                    1
                    for r in members
                    if (r["winner"] is None if role == "none" else r["winner"] == role)
                )
                row[role] = 100.0 * hits / len(members) if members else float("nan")
            rows.append(row)
    return pd.DataFrame(rows)


def sweep_rows(
    records: Sequence[dict[str, Any]], thresholds: Sequence[float] | None = None
) -> list[dict[str, float]]:
    """Winner prevalence per role across thresholds, compliant subset."""
    from .scoring import ButtonSalience, threshold_sweep

    subset = [r for r in records if r.get("compliant_subset")]
    if not subset:
        raise InputError("no compliant-subset records in store")
    corpus_scores = []
    for rec in subset:
        corpus_scores.append(
            {
                role: ButtonSalience(
                    role=role,
                    avg=s["avg"],
                    max=s["max"],
                    combined=s["combined"],
                )
                for role, s in rec["scores"].items()
                if role in VERDICT_ROLES
            }
        )
    grid = list(thresholds) if thresholds is not None else list(DEFAULT_SWEEP)
    return threshold_sweep(corpus_scores, grid)


def histogram_payload(
    records: Sequence[dict[str, Any]], bins: int = 32
) -> dict[str, Any]:
    """Binned avg and max score distributions per role, compliant subset."""
    subset = [r for r in records if r.get("compliant_subset")]
    if not subset:
        raise InputError("no compliant-subset records in store")
    edges = np.linspace(0.0, 255.0, bins + 1)
    payload: dict[str, Any] = {"bin_edges": edges.tolist(), "roles": {}}
    for role in VERDICT_ROLES:
        avgs = [r["scores"][role]["avg"] for r in subset if role in r["scores"]]
        maxes = [r["scores"][role]["max"] for r in subset if role in r["scores"]]
        payload["roles"][role] = {
            "avg_counts": np.histogram(avgs, bins=edges)[0].tolist(),
            "max_counts": np.histogram(maxes, bins=edges)[0].tolist(),
            "n": len(avgs),
        }
    return payload


def _render_sweep(rows: list[dict[str, float]], path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ts = [row["threshold"] for row in rows]
    for role in (*VERDICT_ROLES, "none"):
        ax.plot(ts, [100.0 * row[role] for row in rows], marker="o", label=role)
    ax.set_xlabel("detection threshold")
    ax.set_ylabel("share of banners (%)")
    ax.set_title("Verdict prevalence across thresholds")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_histograms(payload: dict[str, Any], path: str) -> None:
    edges = np.asarray(payload["bin_edges"])
    centers = (edges[:-1] + edges[1:]) / 2.0
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.2), sharey=True)
    for ax, kind in zip(axes, ("avg", "max")):
        for role in VERDICT_ROLES:
            role_payload = payload["roles"].get(role)
            if not role_payload or role_payload["n"] == 0:
                continue
            ax.plot(centers, role_payload[f"{kind}_counts"], label=role)
        ax.set_xlabel(f"{kind} salience")
        ax.set_title(f"Button {kind} salience")
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("banners")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_frequencies(freq_frame: pd.DataFrame, path: str) -> None:
    label_cols = [c for c in freq_frame.columns if c in CATEGORIES]
    fig, ax = plt.subplots(figsize=(11, 4.5))
    x = np.arange(len(label_cols))
    width = 0.8 / max(len(freq_frame), 1)
    for i, (_, row) in enumerate(freq_frame.iterrows()):
        shares = [max(row[c], 1e-3) for c in label_cols]
        ax.bar(
            x + i * width,
            shares,
            width=width,
            label=f"{row['website']}/{row['visitor']}",
        )
    ax.set_yscale("log")
    ax.set_xticks(x + 0.4)
    ax.set_xticklabels(label_cols, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("share of reachable visits (%)")
    ax.set_title("Banner category frequencies")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_transitions(links: list[dict[str, Any]], path: str) -> None:
    # Two-column flow: EU-visit labels left, US-visit labels right, line
    # width proportional to the number of websites making that move.
    sources = sorted({l["source"] for l in links})
    targets = sorted({l["target"] for l in links})
    sy = {label: i for i, label in enumerate(sources)}
    ty = {label: i for i, label in enumerate(targets)}
    total = sum(l["value"] for l in links)
    fig, ax = plt.subplots(figsize=(8, 0.45 * max(len(sources), len(targets)) + 2))
    for link in links:
        y0, y1 = sy[link["source"]], ty[link["target"]]
        lw = 0.5 + 6.0 * link["value"] / max(total, 1)
        color = "tab:red" if link["source"] != link["target"] else "tab:gray"
        ax.plot([0, 1], [y0, y1], lw=lw, color=color, alpha=0.6)
    for label, y in sy.items():
        ax.text(-0.02, y, label, ha="right", va="center", fontsize=8)
    for label, y in ty.items():
        ax.text(1.02, y, label, ha="left", va="center", fontsize=8)
    ax.set_xlim(-0.5, 1.5)
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["EU visit", "US visit"])
    ax.set_yticks([])
    ax.set_title("Label transitions of EU websites")
    for side in ("top", "right", "left"):
        ax.spines[side].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(
    records: Sequence[dict[str, Any]],
    out_dir: str,
    annotations: Sequence[BannerAnnotation] | None = None,
    thresholds: Sequence[float] | None = None,
    figures: bool = True,
) -> dict[str, str]:
    """Write every report artifact; returns name -> path of what was written."""
    os.makedirs(out_dir, exist_ok=True)
    written: dict[str, str] = {}

    def out(name: str) -> str:
        return os.path.join(out_dir, name)

    grid = prevalence_grid(records)
    grid.to_csv(out("prevalence.csv"), index=False)
    written["prevalence"] = out("prevalence.csv")

    rows = sweep_rows(records, thresholds)
    pd.DataFrame(rows).to_csv(out("sweep.csv"), index=False)
    written["sweep"] = out("sweep.csv")
    with open(out("sweep.json"), "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
    written["sweep_json"] = out("sweep.json")

    hist = histogram_payload(records)
    with open(out("histograms.json"), "w", encoding="utf-8") as fh:
        json.dump(hist, fh, indent=2)
    written["histograms_json"] = out("histograms.json")

    if figures:
        _render_sweep(rows, out("sweep.png"))
        written["sweep_png"] = out("sweep.png")
        _render_histograms(hist, out("histograms.png"))
        written["histograms_png"] = out("histograms.png")

    if annotations:
        comp = compliance_table(annotations)
        comp.to_frame().to_csv(out("compliance.csv"), index=False)
        written["compliance"] = out("compliance.csv")

        freq = category_frequencies(annotations)
        freq_frame = freq.to_frame()
        freq_frame.to_csv(out("frequencies.csv"), index=False)
        written["frequencies"] = out("frequencies.csv")

        trans = transitions(annotations)
        links = trans.to_records()
        flow = {
            "links": links,
            "n_paired": trans.n_paired,
            "n_changed": trans.n_changed,
            "changed_fraction": trans.changed_fraction,
            "n_unpaired": trans.n_unpaired,
        }
        with open(out("transitions.json"), "w", encoding="utf-8") as fh:
            json.dump(flow, fh, indent=2)
        written["transitions_json"] = out("transitions.json")

        if figures:
            _render_frequencies(freq_frame, out("frequencies.png"))
            written["frequencies_png"] = out("frequencies.png")
            _render_transitions(links, out("transitions.png"))
            written["transitions_png"] = out("transitions.png")
    return written
