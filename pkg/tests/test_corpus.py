"""Target selection, reachability probing, capture ladder, and annotation IO."""

import json
import socket

import pytest

from bannerlens.corpus import (
    BASE_CATEGORIES,
    CATEGORIES,
    COMPLIANCE_CLASSES,
    X_VARIANTS,
    TargetListConfig,
    acquire,
    build_targets,
    classify_compliance,
    emit_annotations,
    eu_cctld_filter,
    ingest_annotations,
    load_eu_cctlds,
    parse_tranco_csv,
    probe,
)
from bannerlens.errors import InputError


class TestEuCctldFilter:
    def test_member_state_tlds(self):
        for domain in ("shop.de", "presse.fr", "news.it", "gov.uk", "site.eu"):
            assert eu_cctld_filter(domain)

    def test_non_eu(self):
        for domain in ("example.com", "site.org", "portal.jp", "x.io"):
            assert not eu_cctld_filter(domain)

    def test_case_insensitive(self):
        assert eu_cctld_filter("SHOP.DE")

    def test_trailing_dot(self):
        assert eu_cctld_filter("shop.de.")

    def test_subdomains_use_last_label(self):
        assert eu_cctld_filter("a.b.c.fr")
        assert not eu_cctld_filter("de.example.com")

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            eu_cctld_filter("")
        with pytest.raises(InputError):
            eu_cctld_filter("   ")

    def test_bare_label_is_not_eu(self):
        assert not eu_cctld_filter("localhost")

    def test_packaged_set(self):
        cctlds = load_eu_cctlds()
        assert len(cctlds) == 29
        assert {"de", "fr", "uk", "eu", "ie"} <= cctlds


class TestParseTrancoCsv:
    def test_good_lines(self):
        rows, errors = parse_tranco_csv(["1,example.com", "2,Shop.DE"])
        assert rows == [(1, "example.com"), (2, "shop.de")]
        assert errors == []

    def test_blank_lines_skipped(self):
        rows, errors = parse_tranco_csv(["", "1,a.com", "   "])
        assert rows == [(1, "a.com")] and errors == []

    def test_error_rows_reported_with_line_numbers(self):
        rows, errors = parse_tranco_csv(
            ["1,a.com", "2,b.com,extra", "zero,c.com", "0,d.com", "5,nodot"]
        )
        assert rows == [(1, "a.com")]
        assert [lineno for lineno, _ in errors] == [2, 3, 4, 5]


def csv_lines(domains):
    return [f"{i},{d}" for i, d in enumerate(domains, start=1)]


class TestBuildTargets:
    def test_groups_filled_by_priority(self):
        # Five EU domains: even if global-random (filled first) eats two of
        # the three EU leftovers, eu-random can still find one.
        lines = csv_lines(
            ["g1.com", "g2.com", "e1.de", "g3.com", "e2.fr", "e3.it", "g4.com",
             "e4.es", "e5.nl"]
        )
        config = TargetListConfig(global_top=2, global_random=2, eu_top=2, eu_random=1, seed=0)
        tl = build_targets(lines, config)
        assert tl.domains("global-top") == ["g1.com", "g2.com"]
        assert tl.domains("eu-top") == ["e1.de", "e2.fr"]
        assert len(tl.domains("global-random")) == 2
        assert len(tl.domains("eu-random")) == 1
        assert tl.domains("eu-random")[0] in ("e3.it", "e4.es", "e5.nl")
        # no domain appears in two groups
        assert len(set(tl.domains())) == len(tl.domains())
        assert tl.shortfalls == {}

    def test_eu_groups_only_contain_eu_domains(self):
        lines = csv_lines([f"g{i}.com" for i in range(20)] + [f"e{i}.de" for i in range(10)])
        tl = build_targets(lines, TargetListConfig(5, 5, 5, 5, seed=1))
        assert all(d.endswith(".de") for d in tl.domains("eu-top"))
        assert all(d.endswith(".de") for d in tl.domains("eu-random"))

    def test_shortfalls_reported_not_padded(self):
        lines = csv_lines(["a.com", "b.de"])
        tl = build_targets(lines, TargetListConfig(global_top=1, global_random=5,
                                                   eu_top=3, eu_random=2, seed=0))
        assert tl.shortfalls["eu-top"] == 2  # only one EU domain exists
        assert "global-random" in tl.shortfalls
        assert tl.shortfalls["eu-random"] == 2

    def test_duplicate_domains_keep_best_rank(self):
        rows = ["3,a.com", "1,a.com", "2,b.com"]
        tl = build_targets(rows, TargetListConfig(2, 0, 0, 0))
        assert [(e.domain, e.rank) for e in tl.entries] == [("a.com", 1), ("b.com", 2)]

    def test_deterministic_sampling(self):
        lines = csv_lines([f"s{i}.com" for i in range(50)])
        config = TargetListConfig(global_top=5, global_random=10, eu_top=0, eu_random=0, seed=42)
        a = build_targets(lines, config)
        b = build_targets(lines, config)
        assert a.domains() == b.domains()
        other = build_targets(
            lines, TargetListConfig(global_top=5, global_random=10, eu_top=0, eu_random=0, seed=43)
        )
        assert other.domains("global-random") != a.domains("global-random")

    def test_row_errors_carried_through(self):
        tl = build_targets(["1,a.com", "junk line"], TargetListConfig(1, 0, 0, 0))
        assert len(tl.row_errors) == 1

    def test_negative_sizes_rejected(self):
        with pytest.raises(InputError):
            TargetListConfig(global_top=-1)


class TestProbe:
    def test_open_port_on_loopback(self):
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.bind(("127.0.0.1", 0))
        server.listen(1)
        port = server.getsockname()[1]
        try:
            result = probe("127.0.0.1", timeout=2.0, ports=(port,))
        finally:
            server.close()
        assert result.reachable
        assert result.outcomes == {port: "open"}

    def test_closed_port_refused(self):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        sock.close()  # nothing listens here anymore
        result = probe("127.0.0.1", timeout=2.0, ports=(port,))
        assert not result.reachable
        assert result.outcomes[port] == "refused"

    def test_black_holed_host_times_out_per_port(self):
        ticks = iter([0.0, 5.0, 5.0, 10.0])

        def connector(address, timeout):
            raise socket.timeout("simulated")

        result = probe(
            "blackhole.example", timeout=5.0, connector=connector, clock=lambda: next(ticks)
        )
        assert not result.reachable
        assert result.outcomes == {443: "timeout", 80: "timeout"}
        assert result.elapsed == {443: 5.0, 80: 5.0}

    def test_dns_failure_distinguished(self):
        def connector(address, timeout):
            raise socket.gaierror("no such host")

        result = probe("nonexistent.invalid", connector=connector)
        assert result.outcomes == {443: "dns-error", 80: "dns-error"}

    def test_stops_at_first_open_port(self):
        calls = []

        class DummyConn:
            def close(self):
                pass

        def connector(address, timeout):
            calls.append(address[1])
            return DummyConn()

        result = probe("site.example", connector=connector)
        assert calls == [443]
        assert result.outcomes == {443: "open"}

    def test_mixed_outcomes(self):
        class DummyConn:
            def close(self):
                pass

        def connector(address, timeout):
            if address[1] == 443:
                raise ConnectionRefusedError()
            return DummyConn()

        result = probe("site.example", connector=connector)
        assert result.outcomes == {443: "refused", 80: "open"}
        assert result.reachable

    def test_timeout_validated(self):
        with pytest.raises(InputError):
            probe("site.example", timeout=0.0)


class TestAcquire:
    def test_ladder_order_and_logging(self):
        urls = []
        log = []

        def fetcher(url, timeout):
            urls.append((url, timeout))
            raise OSError("unreachable")

        result = acquire("site.de", fetcher, attempt_log=log)
        assert result.status == "manual-needed"
        assert result.url is None
        assert urls == [
            ("https://site.de/", 30.0),
            ("http://site.de/", 30.0),
            ("https://site.de/", 60.0),
            ("http://site.de/", 60.0),
        ]
        assert len(log) == 4
        assert all(entry["outcome"] == "error" for entry in log)
        assert log[0]["domain"] == "site.de" and log[0]["detail"] == "unreachable"

    def test_first_success_wins(self):
        attempts = {"n": 0}

        def fetcher(url, timeout):
            attempts["n"] += 1
            if attempts["n"] < 3:
                raise TimeoutError("slow")

        result = acquire("site.com", fetcher)
        assert result.status == "ok"
        assert result.url == "https://site.com/"  # third rung is https at 60s
        assert len(result.attempts) == 3
        assert [a.outcome for a in result.attempts] == ["error", "error", "ok"]
        assert result.attempts[2].timeout == 60.0

    def test_immediate_success(self):
        result = acquire("fast.com", lambda url, timeout: None)
        assert result.status == "ok" and result.url == "https://fast.com/"
        assert len(result.attempts) == 1


class TestClassifyCompliance:
    def test_total_over_banner_labels(self):
        expected = {
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
        for variant in X_VARIANTS:
            expected[variant] = "Likely not compliant"
        assert len(expected) == 17
        for label, cls in expected.items():
            assert classify_compliance(label) == cls
            assert cls in COMPLIANCE_CLASSES

    def test_visit_labels_rejected(self):
        for label in ("none", "unreachable", "Banner"):
            with pytest.raises(InputError):
                classify_compliance(label)

    def test_label_inventory(self):
        assert len(BASE_CATEGORIES) == 12
        assert len(X_VARIANTS) == 5
        assert len(CATEGORIES) == 19


def full_record(**overrides):
    rec = {
        "website_id": "shop.de",
        "visitor_locale": "EU",
        "category": "Full",
        "image_width": 200,
        "image_height": 100,
        "boxes": [
            {"role": "banner", "x": 0.0, "y": 70.0, "width": 100.0, "height": 30.0},
            {"role": "accept", "x": 5.0, "y": 75.0, "width": 15.0, "height": 10.0},
            {"role": "reject", "x": 30.0, "y": 75.0, "width": 15.0, "height": 10.0},
            {"role": "manage", "x": 55.0, "y": 75.0, "width": 15.0, "height": 10.0},
        ],
    }
    rec.update(overrides)
    return rec


class TestIngestAnnotations:
    def test_percent_to_pixel_law(self):
        anns, errors = ingest_annotations([full_record()])
        assert errors == []
        box = anns[0].boxes["accept"]
        # round-half-up: 5% of 200 = 10, 75% of 100 = 75, 15% of 200 = 30
        assert (box.x, box.y, box.width, box.height) == (10, 75, 30, 10)

    def test_half_pixel_rounds_up(self):
        rec = full_record(boxes=[
            {"role": "banner", "x": 0.0, "y": 0.0, "width": 100.0, "height": 100.0},
            {"role": "accept", "x": 10.25, "y": 0.0, "width": 10.0, "height": 10.0},
            {"role": "reject", "x": 40.0, "y": 0.0, "width": 10.0, "height": 10.0},
            {"role": "manage", "x": 60.0, "y": 0.0, "width": 10.0, "height": 10.0},
        ])
        anns, errors = ingest_annotations([rec])
        assert errors == []
        # 10.25% of 200 = 20.5 -> 21
        assert anns[0].boxes["accept"].x == 21

    def test_website_eu_defaults_from_tld(self):
        anns, _ = ingest_annotations([full_record(), full_record(website_id="shop.com")])
        assert anns[0].website_eu is True
        assert anns[1].website_eu is False

    def test_explicit_website_eu_respected(self):
        anns, _ = ingest_annotations([full_record(website_eu=False)])
        assert anns[0].website_eu is False

    def test_none_category_carries_no_boxes(self):
        anns, errors = ingest_annotations(
            [full_record(category="none", boxes=[]),
             full_record(category="unreachable", boxes=[])]
        )
        assert errors == []
        assert anns[0].boxes == {} and anns[1].boxes == {}

    def test_none_category_with_boxes_rejected(self):
        _, errors = ingest_annotations([full_record(category="none")])
        assert len(errors) == 1 and "boxes" in errors[0].message

    @pytest.mark.parametrize(
        "mutate,needle",
        [
            (lambda r: r.update(website_id=""), "website_id"),
            (lambda r: r.update(visitor_locale="JP"), "visitor_locale"),
            (lambda r: r.update(category="Banner"), "category"),
            (lambda r: r.pop("image_width"), "dimensions"),
            (lambda r: r.update(image_width=0), "positive"),
            (lambda r: r["boxes"].append({"role": "weird", "x": 0, "y": 0, "width": 1, "height": 1}), "role"),
            (lambda r: r["boxes"].append(dict(r["boxes"][1])), "duplicate"),
            (lambda r: r["boxes"][1].pop("x"), "coordinates"),
            (lambda r: r["boxes"][1].update(width=0.1), "zero size"),
            (lambda r: r["boxes"][1].update(x=95.0), "outside"),
        ],
    )
    def test_bad_records_skipped_with_reason(self, mutate, needle):
        rec = full_record()
        mutate(rec)
        anns, errors = ingest_annotations([rec, full_record(website_id="ok.de")])
        assert len(anns) == 1 and anns[0].website_id == "ok.de"
        assert len(errors) == 1
        assert errors[0].index == 0
        assert needle in errors[0].message

    def test_missing_banner_box_rejected(self):
        rec = full_record()
        rec["boxes"] = rec["boxes"][1:]
        _, errors = ingest_annotations([rec])
        assert len(errors) == 1 and "banner" in errors[0].message

    def test_missing_required_roles_rejected(self):
        rec = full_record()
        rec["boxes"] = rec["boxes"][:3]  # drop manage, required for "Full"
        _, errors = ingest_annotations([rec])
        assert len(errors) == 1 and "manage" in errors[0].message

    def test_flags_parsed(self):
        rec = full_record()
        rec["boxes"][1]["corner"] = True
        rec["boxes"][1]["hidden"] = True
        anns, _ = ingest_annotations([rec])
        assert anns[0].flags["accept"] == {
            "corner": True, "link": False, "hidden": True, "choice_menu": False,
        }

    def test_json_array_and_jsonl_files(self, tmp_path):
        records = [full_record(), full_record(website_id="two.fr")]
        array_path = tmp_path / "a.json"
        array_path.write_text(json.dumps(records))
        jsonl_path = tmp_path / "a.jsonl"
        jsonl_path.write_text("\n".join(json.dumps(r) for r in records))
        from_array, _ = ingest_annotations(str(array_path))
        from_lines, _ = ingest_annotations(str(jsonl_path))
        assert from_array == from_lines
        assert [a.website_id for a in from_array] == ["shop.de", "two.fr"]

    def test_emit_round_trip_exact(self):
        rec = full_record()
        rec["boxes"][2]["link"] = True
        anns, errors = ingest_annotations([rec, full_record(website_id="x.it", category="none", boxes=[])])
        assert errors == []
        back, errors2 = ingest_annotations(emit_annotations(anns))
        assert errors2 == []
        assert back == anns
