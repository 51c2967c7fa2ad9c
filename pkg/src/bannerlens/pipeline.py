"""End-to-end scoring pipeline and the JSON-lines results store.

``run_pipeline`` walks a labeled corpus, loads each screenshot, scores the
annotated buttons (through the perturbation ensemble unless disabled),
decides the verdict, computes the contrast baseline and design features, and
writes one JSON record per banner. Records are sorted by (website_id,
locale) and serialized canonically, so the same inputs and config produce a
byte-identical store. Each record carries the sha256 fingerprint of the
effective config.

Banners qualify for scoring when at least two of accept/reject/manage are
annotated. Missing screenshots or size mismatches skip the record (reasons
go to a ``.skipped.jsonl`` sidecar); a backend failure aborts the run after
appending a partial-run marker line to the store.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import numpy as np
from PIL import Image

from .corpus import BannerAnnotation, COMPLIANT_SUBSET, classify_compliance
from .errors import ConfigError, InputError, PipelineAborted
from .features import (
    FeatureMapStack,
    FilterBankSpec,
    Screenshot,
    extract_filter_bank,
    load_fmap,
)
from .perturb import PerturbationConfig, ensemble_scores
from .saliency import RarityConfig, SalienceMap, compute_salience
from .scoring import (
    ButtonSalience,
    VERDICT_ROLES,
    contrast_baseline,
    extract_design_features,
    score_button,
    verdict,
)

PARTIAL_MARKER_KEY = "partial"


class _SkipRecord(Exception):
    """Record-level problem that skips the banner instead of aborting."""


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one pipeline run.

    ``backend`` is ``filterbank`` or ``fmap:<path template>`` where the
    template may use ``{website_id}`` and ``{locale}``. ``seed`` feeds the
    perturbation ensemble. The fingerprint hashes the canonical JSON form.
    """

    annotations: str
    screenshots: str
    store: str
    backend: str = "filterbank"
    threshold: float = 0.07
    baseline_margin: float = 0.10
    no_perturb: bool = False
    ensemble_size: int = 32
    seed: int = 0
    bin_count: int = 10
    weight_normalization: bool = True
    upsample_method: str = "bilinear"
    concurrency: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.threshold <= 0.5:
            raise ConfigError("threshold must be in [0, 0.5]")
        if self.baseline_margin < 0:
            raise ConfigError("baseline_margin must be >= 0")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.backend != "filterbank" and not self.backend.startswith("fmap:"):
            raise ConfigError(
                f"backend must be 'filterbank' or 'fmap:<template>', got {self.backend!r}"
            )

    @classmethod
    def from_file(cls, path: str, **overrides: Any) -> "RunConfig":
        """Load a JSON config file, applying keyword overrides on top."""
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def fingerprint(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def rarity_config(self) -> RarityConfig:
        return RarityConfig(
            bin_count=self.bin_count,
            weight_normalization=self.weight_normalization,
            upsample_method=self.upsample_method,
        )

    def perturbation_config(self) -> PerturbationConfig:
        return PerturbationConfig(ensemble_size=self.ensemble_size, master_seed=self.seed)


def record_schema() -> dict[str, Any]:
    """The published JSON Schema of one store record."""
    return json.loads(
        resources.files("bannerlens.data")
        .joinpath("verdict_record.schema.json")
        .read_text()
    )


def screenshot_path(root: str, website_id: str, locale: str) -> str:
    """Store layout convention: ``<root>/<website_id>__<locale>.png``."""
    return os.path.join(root, f"{website_id}__{locale}.png")


def load_screenshot(path: str, source_id: str) -> Screenshot:
    """Read an image file into an RGB screenshot."""
    with Image.open(path) as img:
        pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return Screenshot(source_id=source_id, pixels=pixels)


def make_backend(config: RunConfig):
    """Salience function ``(Screenshot, website_id, locale) -> SalienceMap``.

    ``filterbank`` recomputes features from the pixels it is given, so it
    composes with perturbation. ``fmap:`` serves activations precomputed for
    the original capture; it cannot re-extract from perturbed pixels, so runs
    using it are forced to single-sample scoring.
    """
    rarity = config.rarity_config()
    if config.backend == "filterbank":
        bank = FilterBankSpec()

        def backend(shot: Screenshot, website_id: str, locale: str) -> SalienceMap:
            return compute_salience(
                extract_filter_bank(shot, bank), shot.width, shot.height, rarity
            )

        return backend

    template = config.backend[len("fmap:") :]
    if not template:
        raise ConfigError("fmap backend needs a path template")

    def backend(shot: Screenshot, website_id: str, locale: str) -> SalienceMap:
        path = template.format(website_id=website_id, locale=locale)
        stack = load_fmap(path)
        if (stack.image_width, stack.image_height) != (shot.width, shot.height):
            raise InputError(
                f"feature container {path} is {stack.image_width}x"
                f"{stack.image_height}, screenshot is {shot.width}x{shot.height}"
            )
        return compute_salience(stack, shot.width, shot.height, rarity)

    return backend


def _json_safe(value: float) -> float | None:
    return None if math.isinf(value) or math.isnan(value) else value


@dataclass
class RunSummary:
    """What a pipeline run produced."""

    store: str
    n_scored: int
    n_skipped: int
    skipped: list[dict[str, str]] = field(default_factory=list)
    perturbed: bool = True


def _score_one(
    ann: BannerAnnotation,
    config: RunConfig,
    backend,
    fingerprint: str,
    perturbed: bool,
) -> dict[str, Any]:
    source_id = f"{ann.website_id}__{ann.visitor_locale}"
    path = screenshot_path(config.screenshots, ann.website_id, ann.visitor_locale)
    try:
        shot = load_screenshot(path, source_id)
    except (FileNotFoundError, OSError) as exc:
        raise _SkipRecord(f"screenshot unreadable: {exc}") from exc
    if (shot.width, shot.height) != (ann.image_width, ann.image_height):
        raise _SkipRecord(
            f"screenshot is {shot.width}x{shot.height}, annotation says "
            f"{ann.image_width}x{ann.image_height}"
        )
    score_boxes = {r: b for r, b in ann.boxes.items() if r in VERDICT_ROLES}

    bound = lambda s: backend(s, ann.website_id, ann.visitor_locale)
    if perturbed:
        scores = ensemble_scores(
            shot, score_boxes, config.perturbation_config(), bound, score_button
        )
    else:
        smap = bound(shot)
        scores = {r: score_button(smap, b, r) for r, b in score_boxes.items()}

    vd = verdict(scores, config.threshold)
    baseline = None
    if "reject" in ann.boxes and "accept" in ann.boxes and "banner" in ann.boxes:
        bl = contrast_baseline(shot, ann.boxes, config.baseline_margin)
        baseline = {
            "contrasts": {r: bl.contrasts[r] for r in sorted(bl.contrasts)},
            "flagged": bl.flagged,
            "margin": bl.margin,
        }
    design = None
    if "banner" in ann.boxes:
        feats = extract_design_features(shot, ann.boxes, ann.flags)
        design = {
            role: {
                "button_size": f.button_size,
                "brightness": f.brightness,
                "contrast": f.contrast,
                "button_distance": f.button_distance,
                "bb_distance": f.bb_distance,
                "corner": f.corner,
                "link": f.link,
                "hidden": f.hidden,
                "choice_menu": f.choice_menu,
            }
            for role, f in sorted(feats.items())
        }
    return {
        "website_id": ann.website_id,
        "locale": ann.visitor_locale,
        "website_eu": ann.website_eu,
        "category": ann.category,
        "compliance": classify_compliance(ann.category),
        "compliant_subset": ann.category in COMPLIANT_SUBSET,
        "backend": config.backend,
        "threshold": config.threshold,
        "perturbed": perturbed,
        "ensemble_size": config.ensemble_size if perturbed else 1,
        "seed": config.seed,
        "scores": {
            role: {"avg": s.avg, "max": s.max, "combined": s.combined}
            for role, s in sorted(scores.items())
        },
        "winner": vd.winner,
        "manipulation_accept": vd.manipulation_accept,
        "manipulation_reject": vd.manipulation_reject,
        "manipulation_manage": vd.manipulation_manage,
        "margins": {k: _json_safe(v) for k, v in sorted(vd.margins.items())},
        "baseline": baseline,
        "design": design,
        "config_fingerprint": fingerprint,
    }


def eligible(ann: BannerAnnotation) -> bool:
    """A banner qualifies when two or more verdict roles are annotated."""
    return len(set(ann.boxes) & set(VERDICT_ROLES)) >= 2


def run_pipeline(
    config: RunConfig, annotations: list[BannerAnnotation]
) -> RunSummary:
    """Score every eligible banner and write the results store.

    Returns a summary with skip reasons. Raises :class:`PipelineAborted`
    after writing a partial-store marker if the backend fails mid-run.
    """
    if not os.path.isdir(config.screenshots):
        raise ConfigError(f"screenshot directory {config.screenshots!r} does not exist")
    backend = make_backend(config)
    perturbed = not config.no_perturb and config.backend == "filterbank"
    fingerprint = config.fingerprint()
    todo = sorted(
        (a for a in annotations if eligible(a)),
        key=lambda a: (a.website_id, a.visitor_locale),
    )

    records: list[dict[str, Any]] = []
    skipped: list[dict[str, str]] = []
    abort: Exception | None = None

    def work(ann: BannerAnnotation):
        return _score_one(ann, config, backend, fingerprint, perturbed)

    results: list[tuple[BannerAnnotation, Any]] = []
    if config.concurrency > 1:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = [(ann, pool.submit(work, ann)) for ann in todo]
            for ann, fut in futures:
                try:
                    results.append((ann, fut.result()))
                except Exception as exc:
                    results.append((ann, exc))
    else:
        for ann in todo:
            try:
                results.append((ann, work(ann)))
            except Exception as exc:
                results.append((ann, exc))

    for ann, outcome in results:
        if isinstance(outcome, dict):
            records.append(outcome)
        elif isinstance(outcome, _SkipRecord):
            skipped.append(
                {
                    "website_id": ann.website_id,
                    "locale": ann.visitor_locale,
                    "reason": str(outcome),
                }
            )
        else:
            abort = outcome
            break

    store_dir = os.path.dirname(os.path.abspath(config.store))
    os.makedirs(store_dir, exist_ok=True)
    with open(config.store, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, allow_nan=False) + "\n")
        if abort is not None:
            fh.write(
                json.dumps({PARTIAL_MARKER_KEY: True, "reason": str(abort)}) + "\n"
            )
    if skipped:
        with open(config.store + ".skipped.jsonl", "w", encoding="utf-8") as fh:
            for entry in skipped:
                fh.write(json.dumps(entry) + "\n")
    if abort is not None:
        raise PipelineAborted(f"backend failure: {abort}") from abort
    return RunSummary(
        store=config.store,
        n_scored=len(records),
        n_skipped=len(skipped),
        skipped=skipped,
        perturbed=perturbed,
    )


def load_store(path: str) -> tuple[list[dict[str, Any]], bool]:
    """Read a results store; returns (records, is_partial)."""
    records: list[dict[str, Any]] = []
    partial = False
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get(PARTIAL_MARKER_KEY):
                partial = True
                continue
            records.append(obj)
    return records, partial
