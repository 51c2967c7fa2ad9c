"""Shared fixtures, corpus builders, and the acceptance-criteria summary.

Every test in ``test_acceptance.py`` maps to one acceptance criterion; their
outcomes are echoed as one PASS/FAIL line each at the end of the run so the
criterion status is readable without digging through pytest output.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from bannerlens.features import BoundingBox, Screenshot

_ACCEPTANCE: dict[str, object] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[report.nodeid] = report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE):
        report = _ACCEPTANCE[nodeid]
        if report.outcome == "passed":
            status = "PASS"
        elif getattr(report, "skipped", False):
            status = "SKIP"
        else:
            status = "FAIL"
        label = nodeid.split("::")[-1].removeprefix("test_").replace("_", " ")
        terminalreporter.write_line(f"{status} {label}")


# --- synthetic page rendering -------------------------------------------

PAGE_W, PAGE_H = 240, 160
BANNER_H = 48
BUTTON_W, BUTTON_H = 36, 14

#: Accept centered in the upper banner, reject and manage buried flush in the
#: bottom corners; all fills identical so grayscale contrast is equal.
MANIPULATED_LAYOUT = {"accept": (102, 10), "reject": (0, 34), "manage": (204, 34)}

#: Even mid-banner spacing; no button placed to dominate.
CLEAN_LAYOUT = {"accept": (30, 17), "reject": (102, 17), "manage": (174, 17)}


def render_banner_page(
    source_id: str,
    layout: dict[str, tuple[int, int]],
    bar_widths: list[int],
    button_fill: tuple[int, int, int] = (70, 70, 70),
) -> tuple[Screenshot, dict[str, BoundingBox]]:
    """A synthetic consent page: light body, text bars, bottom banner, buttons.

    ``layout`` maps button roles to (x, y-within-banner); ``bar_widths`` give
    the six content-bar widths, the only ingredient varied between pages.
    """
    px = np.full((PAGE_H, PAGE_W, 3), 248, dtype=np.uint8)
    for i, width in enumerate(bar_widths[:6]):
        y = 8 + i * 16
        px[y : y + 6, 10 : 10 + width] = 150
    banner_y = PAGE_H - BANNER_H
    px[banner_y:, :] = 235
    boxes = {"banner": BoundingBox(0, banner_y, PAGE_W, BANNER_H)}
    for role, (x, rely) in layout.items():
        y = banner_y + rely
        px[y : y + BUTTON_H, x : x + BUTTON_W] = button_fill
        boxes[role] = BoundingBox(x, y, BUTTON_W, BUTTON_H)
    return Screenshot(source_id=source_id, pixels=px), boxes


def random_screenshot(rng: np.random.Generator, height: int, width: int, source_id: str = "rand") -> Screenshot:
    pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    return Screenshot(source_id=source_id, pixels=pixels)


# --- corpus-on-disk builder for pipeline and CLI tests -------------------


def percent_box(box: BoundingBox, img_w: int, img_h: int, **flags) -> dict:
    rec = {
        "x": box.x / img_w * 100.0,
        "y": box.y / img_h * 100.0,
        "width": box.width / img_w * 100.0,
        "height": box.height / img_h * 100.0,
    }
    rec.update(flags)
    return rec


def write_corpus(tmp_path, banners):
    """Write screenshots plus a JSONL annotation file for ``banners``.

    ``banners`` yields (website_id, locale, category, Screenshot, boxes dict,
    extra-record fields). Returns (annotations path, screenshots dir).
    """
    from PIL import Image

    shots_dir = tmp_path / "shots"
    shots_dir.mkdir(exist_ok=True)
    records = []
    for website_id, locale, category, shot, boxes, extra in banners:
        Image.fromarray(shot.pixels, mode="RGB").save(
            shots_dir / f"{website_id}__{locale}.png"
        )
        rec = {
            "website_id": website_id,
            "visitor_locale": locale,
            "category": category,
            "image_width": shot.width,
            "image_height": shot.height,
            "boxes": [
                {"role": role, **percent_box(box, shot.width, shot.height)}
                for role, box in boxes.items()
            ],
        }
        rec.update(extra)
        records.append(rec)
    ann_path = tmp_path / "annotations.jsonl"
    with open(ann_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return str(ann_path), str(shots_dir)


@pytest.fixture
def small_corpus(tmp_path):
    """Three banners at 120x96 with all three roles, Full category."""
    rng = np.random.default_rng(99)
    banners = []
    for i, (wid, locale) in enumerate(
        [("site-a.de", "EU"), ("site-a.de", "US"), ("site-b.com", "EU")]
    ):
        shot, boxes = small_banner_page(f"{wid}__{locale}", rng)
        banners.append((wid, locale, "Full", shot, boxes, {"website_eu": wid.endswith(".de")}))
    return write_corpus(tmp_path, banners)


def small_banner_page(source_id: str, rng: np.random.Generator):
    """A 120x96 page with banner and three buttons, mild random content."""
    w, h, bh = 120, 96, 28
    px = np.full((h, w, 3), 246, dtype=np.uint8)
    for i in range(3):
        y = 6 + i * 14
        px[y : y + 5, 6 : 6 + int(rng.integers(80, 108))] = 150
    px[h - bh :, :] = 232
    boxes = {"banner": BoundingBox(0, h - bh, w, bh)}
    for role, x in (("accept", 8), ("reject", 48), ("manage", 88)):
        y = h - bh + 8
        px[y : y + 10, x : x + 24] = 70
        boxes[role] = BoundingBox(x, y, 24, 10)
    return Screenshot(source_id=source_id, pixels=px), boxes
