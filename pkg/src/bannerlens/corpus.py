"""Corpus construction: target lists, reachability, capture, and labels.

Targets come from a Tranco-style ranked CSV and form four groups (global top,
global random, EU top, EU random) deduplicated by a fixed priority. A website
counts as EU-based when its effective TLD is the eu TLD, the uk TLD, or a
member-state ccTLD (packaged in ``data/eu_cctlds.json``).

Capture follows a fixed retry ladder: HTTPS then HTTP at a 30 second budget,
the same pair again at 60 seconds, then the site is queued for manual
capture. Every attempt is logged.

Banner annotations use a fixed label set: twelve banner designs, five
``... X`` variants (same design plus a closing cross), ``none`` and
``unreachable``. Each banner label maps to one of four compliance classes.
"""

from __future__ import annotations

import json
import math
import random
import socket
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Iterable

from .errors import InputError
from .features import BoundingBox

#: Banner design labels (the twelve base designs).
BASE_CATEGORIES = (
    "Notice",
    "Paywall",
    "Full",
    "Full choices",
    "Choices",
    "Corner Reject",
    "Manage",
    "Preselected",
    "Full-Manage",
    "Settings Only",
    "Ambiguous",
    "Two Banners",
)

#: Designs that also occur with a closing cross ("X") variant.
X_VARIANTS = (
    "Notice X",
    "Full X",
    "Choices X",
    "Manage X",
    "Settings Only X",
)

#: All labels a visit can receive.
CATEGORIES = BASE_CATEGORIES + X_VARIANTS + ("none", "unreachable")

#: Compliance classes, most to least compliant.
COMPLIANCE_CLASSES = ("Compliant", "Likely compliant", "Likely not compliant", "Not compliant")

_COMPLIANCE_MAP: dict[str, str] = {
    "Notice": "Not compliant",
    "Paywall": "Likely compliant",
    "Full": "Compliant",
    "Full choices": "Compliant",
    "Choices": "Likely compliant",
    "Corner Reject": "Likely compliant",
    "Manage": "Not compliant",
    "Preselected": "Not compliant",
    "Full-Manage": "Likely not compliant",
    "Settings Only": "Likely not compliant",
    "Ambiguous": "Likely not compliant",
    "Two Banners": "Likely not compliant",
}
_COMPLIANCE_MAP.update({v: "Likely not compliant" for v in X_VARIANTS})

#: Banner labels classified as compliant designs; the subset the salience
#: analysis focuses on.
COMPLIANT_SUBSET = ("Full", "Full choices", "Corner Reject")

#: Minimal button roles a category's annotation must contain.
REQUIRED_ROLES: dict[str, frozenset[str]] = {
    "Notice": frozenset({"accept"}),
    "Paywall": frozenset({"accept"}),
    "Full": frozenset({"accept", "reject", "manage"}),
    "Full choices": frozenset({"accept", "reject"}),
    "Choices": frozenset(),
    "Corner Reject": frozenset({"accept", "reject"}),
    "Manage": frozenset({"accept", "manage"}),
    "Preselected": frozenset(),
    "Full-Manage": frozenset({"accept", "reject"}),
    "Settings Only": frozenset({"manage"}),
    "Ambiguous": frozenset(),
    "Two Banners": frozenset(),
}
REQUIRED_ROLES.update({v: REQUIRED_ROLES[v[:-2]] for v in X_VARIANTS})

#: Roles a box may carry.
BOX_ROLES = ("banner", "accept", "reject", "manage", "other")

#: Binary attributes a box annotation may carry.
BOX_FLAGS = ("corner", "link", "hidden", "choice_menu")

#: Locales visits are made from.
LOCALES = ("EU", "US")

_ACQUIRE_LADDER = (("https", 30.0), ("http", 30.0), ("https", 60.0), ("http", 60.0))


def load_eu_cctlds() -> frozenset[str]:
    """The packaged set of ccTLDs treated as EU-based."""
    data = json.loads(
        resources.files("bannerlens.data").joinpath("eu_cctlds.json").read_text()
    )
    return frozenset(data["cctlds"])


def eu_cctld_filter(domain: str, cctlds: frozenset[str] | None = None) -> bool:
    """True iff the domain's last label is an EU-based ccTLD."""
    if not domain or not domain.strip():
        raise InputError("empty domain")
    if "." not in domain:
        return False
    tld = domain.rstrip(".").rsplit(".", 1)[-1].lower()
    return tld in (cctlds if cctlds is not None else load_eu_cctlds())


@dataclass(frozen=True)
class TargetEntry:
    domain: str
    rank: int
    group: str


@dataclass(frozen=True)
class TargetListConfig:
    """Group sizes and sampling seed for target selection."""

    global_top: int = 1000
    global_random: int = 1000
    eu_top: int = 500
    eu_random: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("global_top", "global_random", "eu_top", "eu_random"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")


@dataclass
class TargetList:
    """Selected targets, per-group shortfalls, and rejected CSV rows."""

    entries: list[TargetEntry]
    shortfalls: dict[str, int] = field(default_factory=dict)
    row_errors: list[tuple[int, str]] = field(default_factory=list)

    def domains(self, group: str | None = None) -> list[str]:
        return [e.domain for e in self.entries if group is None or e.group == group]


def parse_tranco_csv(lines: Iterable[str]) -> tuple[list[tuple[int, str]], list[tuple[int, str]]]:
    """Parse ``rank,domain`` lines; returns (rows, row errors)."""
    rows: list[tuple[int, str]] = []
    errors: list[tuple[int, str]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            errors.append((lineno, f"expected 'rank,domain', got {line!r}"))
            continue
        rank_s, domain = parts[0].strip(), parts[1].strip().lower()
        if not rank_s.isdigit() or int(rank_s) < 1:
            errors.append((lineno, f"bad rank {rank_s!r}"))
            continue
        if not domain or "." not in domain:
            errors.append((lineno, f"bad domain {domain!r}"))
            continue
        rows.append((int(rank_s), domain))
    return rows, errors


def build_targets(
    lines: Iterable[str], config: TargetListConfig = TargetListConfig()
) -> TargetList:
    """Select the four target groups from a ranked CSV.

    Groups are filled in priority order (global top, EU top, global random,
    EU random); a domain already selected by a higher-priority group is
    skipped and the group backfills from the remaining pool, so sizes are
    exact whenever the source list suffices. Random groups sample without
    replacement, seeded. Shortfalls are reported per group, never padded.
    """
    rows, row_errors = parse_tranco_csv(lines)
    seen: dict[str, int] = {}
    ranked: list[tuple[int, str]] = []
    for rank, domain in sorted(rows):
        if domain not in seen:
            seen[domain] = rank
            ranked.append((rank, domain))

    cctlds = load_eu_cctlds()
    eu_ranked = [(r, d) for r, d in ranked if eu_cctld_filter(d, cctlds)]
    taken: set[str] = set()
    entries: list[TargetEntry] = []
    shortfalls: dict[str, int] = {}
    rng = random.Random(config.seed)

    def fill_top(pool: list[tuple[int, str]], want: int, group: str) -> None:
        got = 0
        for rank, domain in pool:
            if got == want:
                break
            if domain in taken:
                continue
            taken.add(domain)
            entries.append(TargetEntry(domain=domain, rank=rank, group=group))
            got += 1
        if got < want:
            shortfalls[group] = want - got

    def fill_random(pool: list[tuple[int, str]], want: int, group: str) -> None:
        avail = [(r, d) for r, d in pool if d not in taken]
        k = min(want, len(avail))
        for rank, domain in sorted(rng.sample(avail, k)):
            taken.add(domain)
            entries.append(TargetEntry(domain=domain, rank=rank, group=group))
        if k < want:
            shortfalls[group] = want - k

    fill_top(ranked, config.global_top, "global-top")
    fill_top(eu_ranked, config.eu_top, "eu-top")
    fill_random(ranked, config.global_random, "global-random")
    fill_random(eu_ranked, config.eu_random, "eu-random")
    return TargetList(entries=entries, shortfalls=shortfalls, row_errors=row_errors)


@dataclass
class ProbeResult:
    """Transport reachability of a domain on the web ports."""

    domain: str
    reachable: bool
    outcomes: dict[int, str]
    elapsed: dict[int, float]


def probe(
    domain: str,
    timeout: float = 5.0,
    ports: tuple[int, ...] = (443, 80),
    connector: Callable[..., Any] = socket.create_connection,
    clock: Callable[[], float] = time.monotonic,
) -> ProbeResult:
    """Check whether a TCP connection opens on port 443 or 80.

    Outcomes per port: ``open``, ``refused``, ``timeout``, ``dns-error`` or
    ``error``; DNS failures are distinguished from connection failures. Stops
    at the first open port. A black-holed host costs roughly ``timeout``
    seconds per port attempted.
    """
    if timeout <= 0:
        raise InputError("timeout must be positive")
    outcomes: dict[int, str] = {}
    elapsed: dict[int, float] = {}
    reachable = False
    for port in ports:
        start = clock()
        try:
            conn = connector((domain, port), timeout=timeout)
        except socket.gaierror:
            outcomes[port] = "dns-error"
        except ConnectionRefusedError:
            outcomes[port] = "refused"
        except (socket.timeout, TimeoutError):
            outcomes[port] = "timeout"
        except OSError:
            outcomes[port] = "error"
        else:
            try:
                conn.close()
            except OSError:
                pass
            outcomes[port] = "open"
            reachable = True
        elapsed[port] = clock() - start
        if reachable:
            break
    return ProbeResult(domain=domain, reachable=reachable, outcomes=outcomes, elapsed=elapsed)


@dataclass(frozen=True)
class FetchAttempt:
    """One rung of the acquire ladder."""

    protocol: str
    timeout: float
    outcome: str
    detail: str = ""


@dataclass
class AcquireResult:
    """Terminal state of the capture ladder for one domain."""

    domain: str
    status: str  # "ok" or "manual-needed"
    attempts: list[FetchAttempt]
    url: str | None = None


def acquire(
    domain: str,
    fetcher: Callable[[str, float], Any],
    attempt_log: list[dict[str, Any]] | None = None,
) -> AcquireResult:
    """Run the fixed capture ladder for one domain.

    Tries ``https`` then ``http`` at 30 seconds, then both again at 60
    seconds; the first successful fetch wins, otherwise the result is
    ``manual-needed``. ``fetcher(url, timeout)`` performs the capture and
    raises on failure. Every attempt is appended to ``attempt_log`` when
    given.
    """
    attempts: list[FetchAttempt] = []
    result_url: str | None = None
    status = "manual-needed"
    for protocol, timeout in _ACQUIRE_LADDER:
        url = f"{protocol}://{domain}/"
        try:
            fetcher(url, timeout)
        except Exception as exc:
            attempt = FetchAttempt(
                protocol=protocol, timeout=timeout, outcome="error", detail=str(exc)
            )
        else:
            attempt = FetchAttempt(protocol=protocol, timeout=timeout, outcome="ok")
        attempts.append(attempt)
        if attempt_log is not None:
            attempt_log.append(
                {
                    "domain": domain,
                    "protocol": protocol,
                    "timeout": timeout,
                    "outcome": attempt.outcome,
                    "detail": attempt.detail,
                }
            )
        if attempt.outcome == "ok":
            status = "ok"
            result_url = url
            break
    return AcquireResult(domain=domain, status=status, attempts=attempts, url=result_url)


def classify_compliance(category: str) -> str:
    """Compliance class of a banner design label.

    Total over the seventeen banner labels; ``none`` and ``unreachable``
    describe the visit, not a banner, and are rejected.
    """
    if category not in _COMPLIANCE_MAP:
        raise InputError(f"no compliance class for category {category!r}")
    return _COMPLIANCE_MAP[category]


@dataclass
class BannerAnnotation:
    """One labeled visit: category, pixel boxes per role, and box flags."""

    website_id: str
    visitor_locale: str
    category: str
    image_width: int
    image_height: int
    website_eu: bool
    boxes: dict[str, BoundingBox] = field(default_factory=dict)
    flags: dict[str, dict[str, bool]] = field(default_factory=dict)


@dataclass(frozen=True)
class RecordError:
    index: int
    website_id: str
    message: str


def _percent_to_pixels(value: float, extent: int) -> int:
    """Percent coordinate to pixels, rounding halves up."""
    return int(math.floor(value / 100.0 * extent + 0.5))


def _pixels_to_percent(value: int, extent: int) -> float:
    return value / extent * 100.0


def ingest_annotations(
    records: Iterable[dict[str, Any]] | str,
) -> tuple[list[BannerAnnotation], list[RecordError]]:
    """Load annotation records with percent-coordinate boxes.

    Accepts a path to a JSON array (or JSON-lines) file, or an iterable of
    already-parsed records. Percent coordinates are converted to pixels with
    round-half-up; zero-area boxes after conversion, unknown categories or
    roles, duplicate roles, boxes on bannerless categories, and missing
    required roles are reported per record and the record is skipped.
    """
    if isinstance(records, str):
        with open(records, "r", encoding="utf-8") as fh:
            text = fh.read()
        stripped = text.lstrip()
        if stripped.startswith("["):
            parsed = json.loads(text)
        else:
            parsed = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        parsed = list(records)

    annotations: list[BannerAnnotation] = []
    errors: list[RecordError] = []
    for index, rec in enumerate(parsed):
        wid = str(rec.get("website_id", ""))

        def fail(message: str) -> None:
            errors.append(RecordError(index=index, website_id=wid, message=message))

        if not wid:
            fail("missing website_id")
            continue
        locale = rec.get("visitor_locale")
        if locale not in LOCALES:
            fail(f"visitor_locale must be one of {LOCALES}, got {locale!r}")
            continue
        category = rec.get("category")
        if category not in CATEGORIES:
            fail(f"unknown category {category!r}")
            continue
        try:
            img_w = int(rec["image_width"])
            img_h = int(rec["image_height"])
        except (KeyError, TypeError, ValueError):
            fail("missing or non-integer image dimensions")
            continue
        if img_w < 1 or img_h < 1:
            fail("image dimensions must be positive")
            continue
        website_eu = rec.get("website_eu")
        if website_eu is None:
            website_eu = eu_cctld_filter(wid)

        raw_boxes = rec.get("boxes", [])
        if category in ("none", "unreachable"):
            if raw_boxes:
                fail(f"category {category!r} must not carry boxes")
                continue
            annotations.append(
                BannerAnnotation(
                    website_id=wid,
                    visitor_locale=locale,
                    category=category,
                    image_width=img_w,
                    image_height=img_h,
                    website_eu=bool(website_eu),
                )
            )
            continue

        boxes: dict[str, BoundingBox] = {}
        flags: dict[str, dict[str, bool]] = {}
        bad = False
        for raw in raw_boxes:
            role = raw.get("role")
            if role not in BOX_ROLES:
                fail(f"unknown box role {role!r}")
                bad = True
                break
            if role in boxes:
                fail(f"duplicate box role {role!r}")
                bad = True
                break
            try:
                x = _percent_to_pixels(float(raw["x"]), img_w)
                y = _percent_to_pixels(float(raw["y"]), img_h)
                bw = _percent_to_pixels(float(raw["width"]), img_w)
                bh = _percent_to_pixels(float(raw["height"]), img_h)
            except (KeyError, TypeError, ValueError):
                fail(f"box {role!r} has missing or non-numeric coordinates")
                bad = True
                break
            if bw < 1 or bh < 1:
                fail(f"box {role!r} collapses to zero size in pixels")
                bad = True
                break
            if x < 0 or y < 0 or x + bw > img_w or y + bh > img_h:
                fail(f"box {role!r} falls outside the image")
                bad = True
                break
            boxes[role] = BoundingBox(x=x, y=y, width=bw, height=bh)
            flags[role] = {f: bool(raw.get(f, False)) for f in BOX_FLAGS}
        if bad:
            continue
        if "banner" not in boxes:
            fail("banner categories require a banner box")
            continue
        missing = REQUIRED_ROLES[category] - set(boxes)
        if missing:
            fail(f"category {category!r} requires roles {sorted(missing)}")
            continue
        annotations.append(
            BannerAnnotation(
                website_id=wid,
                visitor_locale=locale,
                category=category,
                image_width=img_w,
                image_height=img_h,
                website_eu=bool(website_eu),
                boxes=boxes,
                flags=flags,
            )
        )
    return annotations, errors


def emit_annotations(annotations: list[BannerAnnotation]) -> list[dict[str, Any]]:
    """Annotations back to percent-coordinate records (ingest's inverse)."""
    out = []
    for ann in annotations:
        rec: dict[str, Any] = {
            "website_id": ann.website_id,
            "visitor_locale": ann.visitor_locale,
            "category": ann.category,
            "image_width": ann.image_width,
            "image_height": ann.image_height,
            "website_eu": ann.website_eu,
            "boxes": [],
        }
        for role, box in ann.boxes.items():
            entry: dict[str, Any] = {
                "role": role,
                "x": _pixels_to_percent(box.x, ann.image_width),
                "y": _pixels_to_percent(box.y, ann.image_height),
                "width": _pixels_to_percent(box.width, ann.image_width),
                "height": _pixels_to_percent(box.height, ann.image_height),
            }
            entry.update(ann.flags.get(role, {f: False for f in BOX_FLAGS}))
            rec["boxes"].append(entry)
        out.append(rec)
    return out
