"""Button-level salience scores, manipulation verdicts, and baselines.

A button's salience is summarized from the pixels of its box in the salience
map: the mean, the max, and their combination ``avg/255 + max/255`` (both
terms normalized by the map's fixed 255 range, so combined lies in [0, 2]).

A banner is flagged as visually steering the user toward a role when that
role's combined score exceeds every other scored role by at least a relative
threshold: role ``r`` wins at threshold ``t`` iff
``combined(r) >= (1 + t) * combined(s)`` for every other ``s`` (boundary
inclusive, division-free). The default threshold 0.07 is a just-noticeable
relative difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .features import BoundingBox, Screenshot
from .imageops import luma
from .saliency import SalienceMap

#: Roles compared by the verdict, in canonical order.
VERDICT_ROLES = ("accept", "reject", "manage")


@dataclass
class ButtonSalience:
    """Salience summary of one button: mean, max, and combined score."""

    role: str
    avg: float
    max: float
    combined: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.avg <= self.max <= 255.0:
            raise InputError(
                f"scores must satisfy 0 <= avg <= max <= 255, got "
                f"avg={self.avg} max={self.max}"
            )
        expected = self.avg / 255.0 + self.max / 255.0
        if abs(self.combined - expected) > 1e-9:
            raise InputError(
                f"combined={self.combined} inconsistent with avg/255 + max/255"
            )


def score_button(smap: SalienceMap, box: BoundingBox, role: str) -> ButtonSalience:
    """Score one button's box against a salience map."""
    if box.x + box.width > smap.width or box.y + box.height > smap.height:
        raise InputError(
            f"box {role} ({box}) exceeds map bounds {smap.width}x{smap.height}"
        )
    region = smap.scores[box.y : box.y + box.height, box.x : box.x + box.width]
    avg = float(np.mean(region))
    mx = float(np.max(region))
    return ButtonSalience(role=role, avg=avg, max=mx, combined=avg / 255.0 + mx / 255.0)


@dataclass
class Verdict:
    """Outcome of the relative-dominance comparison at one threshold.

    ``winner`` is the single role whose combined score exceeds all others by
    the threshold, or None; the ``manipulation_*`` booleans restate it per
    role. ``margins`` holds the pairwise relative leads
    ``(combined(r) - combined(s)) / combined(s)`` keyed ``"r_vs_s"``; a lead
    over a zero score is ``inf`` (or 0 when both are zero).
    """

    threshold: float
    winner: str | None
    manipulation_accept: bool = False
    manipulation_reject: bool = False
    manipulation_manage: bool = False
    margins: dict[str, float] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)


def verdict(scores: dict[str, ButtonSalience], threshold: float = 0.07) -> Verdict:
    """Decide whether one role visually dominates the others.

    ``scores`` must cover at least two of accept/reject/manage. Dominance is
    boundary inclusive (a lead of exactly the threshold counts) and must be
    unique; if no role clears every pairwise bar, there is no winner.
    """
    if threshold < 0:
        raise InputError(f"threshold must be >= 0, got {threshold}")
    considered = {r: s for r, s in scores.items() if r in VERDICT_ROLES}
    if len(considered) < 2:
        raise InputError(
            f"need at least two of {VERDICT_ROLES} to compare, got "
            f"{sorted(considered)}"
        )
    combined = {r: considered[r].combined for r in VERDICT_ROLES if r in considered}
    margins: dict[str, float] = {}
    for r in combined:
        for s in combined:
            if r == s:
                continue
            if combined[s] > 0:
                margins[f"{r}_vs_{s}"] = (combined[r] - combined[s]) / combined[s]
            else:
                margins[f"{r}_vs_{s}"] = math.inf if combined[r] > 0 else 0.0
    winners = [
        r
        for r in combined
        if all(
            combined[r] >= (1.0 + threshold) * combined[s]
            for s in combined
            if s != r
        )
    ]
    winner = winners[0] if len(winners) == 1 else None
    return Verdict(
        threshold=threshold,
        winner=winner,
        manipulation_accept=winner == "accept",
        manipulation_reject=winner == "reject",
        manipulation_manage=winner == "manage",
        margins=margins,
        scores=combined,
    )


def threshold_sweep(
    corpus_scores: list[dict[str, ButtonSalience]],
    thresholds: list[float],
) -> list[dict[str, float]]:
    """Winner prevalence per role across a grid of thresholds.

    Returns one row per threshold with the fraction of banners whose verdict
    winner is each role (and ``none``). Prevalence of any fixed role is
    non-increasing in the threshold, since a winner at ``t`` still clears
    every pairwise bar at any lower threshold.
    """
    if not corpus_scores:
        raise InputError("no banners to sweep")
    if not thresholds:
        raise InputError("no thresholds to sweep")
    rows = []
    n = len(corpus_scores)
    for t in sorted(thresholds):
        counts = {r: 0 for r in VERDICT_ROLES}
        none_count = 0
        for scores in corpus_scores:
            w = verdict(scores, t).winner
            if w is None:
                none_count += 1
            else:
                counts[w] += 1
        row: dict[str, float] = {"threshold": float(t)}
        row.update({r: counts[r] / n for r in VERDICT_ROLES})
        row["none"] = none_count / n
        rows.append(row)
    return rows


@dataclass
class ContrastBaseline:
    """Grayscale-contrast comparison of buttons against the banner fill."""

    contrasts: dict[str, float]
    flagged: bool
    margin: float


def contrast_baseline(
    shot: Screenshot,
    boxes: dict[str, BoundingBox],
    margin: float = 0.10,
) -> ContrastBaseline:
    """Luma-contrast baseline: does the accept button out-contrast the rest?

    Per button role, contrast is ``|mean luma(button) - mean luma(banner)|``.
    The banner is flagged iff the accept contrast is positive and exceeds
    every other button's contrast by the relative margin (inclusive); buttons
    styled identically therefore never flag.
    """
    if "banner" not in boxes or "accept" not in boxes or "reject" not in boxes:
        raise InputError("baseline needs banner, accept and reject boxes")
    gray = luma(shot.pixels.astype(np.float64))
    h, w = gray.shape

    def mean_of(box: BoundingBox) -> float:
        if box.x + box.width > w or box.y + box.height > h:
            raise InputError(f"box {box} exceeds image bounds {w}x{h}")
        return float(np.mean(gray[box.y : box.y + box.height, box.x : box.x + box.width]))

    banner_mean = mean_of(boxes["banner"])
    contrasts = {
        role: abs(mean_of(box) - banner_mean)
        for role, box in boxes.items()
        if role in VERDICT_ROLES
    }
    accept = contrasts["accept"]
    others = [c for role, c in contrasts.items() if role != "accept"]
    flagged = accept > 0 and all(accept >= (1.0 + margin) * c for c in others)
    return ContrastBaseline(contrasts=contrasts, flagged=flagged, margin=margin)


@dataclass
class DesignFeatures:
    """Geometric and photometric design attributes of one button."""

    role: str
    button_size: float
    brightness: float
    contrast: float
    button_distance: float
    bb_distance: float
    corner: bool
    link: bool
    hidden: bool
    choice_menu: bool


def extract_design_features(
    shot: Screenshot,
    boxes: dict[str, BoundingBox],
    flags: dict[str, dict[str, bool]] | None = None,
) -> dict[str, DesignFeatures]:
    """Design attributes of each button, relative to the page and banner.

    ``button_size`` is the box area in pixels; ``brightness`` the mean luma
    inside the box; ``contrast`` the absolute mean-luma difference to the
    banner; ``button_distance`` the distance from the box center to the page
    center (0 for a centered button); ``bb_distance`` the distance from the
    box center to the banner center. Binary attributes come from the
    annotation flags. Requires a banner box.
    """
    if "banner" not in boxes:
        raise InputError("design features need a banner box")
    flags = flags or {}
    gray = luma(shot.pixels.astype(np.float64))
    h, w = gray.shape
    page_cx, page_cy = w / 2.0, h / 2.0

    def mean_of(box: BoundingBox) -> float:
        if box.x + box.width > w or box.y + box.height > h:
            raise InputError(f"box {box} exceeds image bounds {w}x{h}")
        return float(np.mean(gray[box.y : box.y + box.height, box.x : box.x + box.width]))

    banner_mean = mean_of(boxes["banner"])
    banner_cx, banner_cy = boxes["banner"].center()
    button_roles = [r for r in boxes if r != "banner"]

    out: dict[str, DesignFeatures] = {}
    for role in button_roles:
        cx, cy = boxes[role].center()
        role_flags = flags.get(role, {})
        out[role] = DesignFeatures(
            role=role,
            button_size=float(boxes[role].width * boxes[role].height),
            brightness=mean_of(boxes[role]),
            contrast=abs(mean_of(boxes[role]) - banner_mean),
            button_distance=math.hypot(cx - page_cx, cy - page_cy),
            bb_distance=math.hypot(cx - banner_cx, cy - banner_cy),
            corner=bool(role_flags.get("corner", False)),
            link=bool(role_flags.get("link", False)),
            hidden=bool(role_flags.get("hidden", False)),
            choice_menu=bool(role_flags.get("choice_menu", False)),
        )
    return out
