"""Command-line interface.

Subcommands cover the full workflow: target-list construction, reachability
probing, capture, annotation ingest, single-image salience and verdicts,
corpus scoring into a results store, threshold sweeps, the contrast baseline,
statistics, and report rendering. Exit codes: 0 success, 1 invalid input or
configuration, 2 partial failure (skipped records or an aborted run).
"""

from __future__ import annotations

import dataclasses
import json
import sys
from typing import Any

import click
import numpy as np

from . import corpus as corpus_mod
from . import stats as stats_mod
from .errors import BannerLensError, PipelineAborted
from .features import BoundingBox, FilterBankSpec, Screenshot, extract_filter_bank
from .perturb import PerturbationConfig, ensemble_scores
from .pipeline import (
    RunConfig,
    load_screenshot,
    load_store,
    make_backend,
    run_pipeline,
)
from .report import DEFAULT_SWEEP, sweep_rows, write_report
from .saliency import RarityConfig, compute_salience
from .scoring import VERDICT_ROLES, contrast_baseline, score_button, verdict

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARTIAL = 2


def _fail(message: str, code: int = EXIT_INVALID) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_boxes(path: str) -> dict[str, BoundingBox]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {
        role: BoundingBox(
            x=int(b["x"]), y=int(b["y"]), width=int(b["width"]), height=int(b["height"])
        )
        for role, b in raw.items()
    }


def _echo_json(payload: Any) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


@click.group()
def main() -> None:
    """Measure which consent-banner button a page design pushes you toward."""


@main.command()
@click.argument("tranco_csv", type=click.Path(dir_okay=False))
@click.option("--global-top", default=1000, show_default=True)
@click.option("--global-random", default=1000, show_default=True)
@click.option("--eu-top", default=500, show_default=True)
@click.option("--eu-random", default=500, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
def targets(tranco_csv, global_top, global_random, eu_top, eu_random, seed, out):
    """Build the four target groups from a ranked domain CSV."""
    try:
        config = corpus_mod.TargetListConfig(
            global_top=global_top,
            global_random=global_random,
            eu_top=eu_top,
            eu_random=eu_random,
            seed=seed,
        )
        with open(tranco_csv, "r", encoding="utf-8") as fh:
            result = corpus_mod.build_targets(fh, config)
    except (BannerLensError, OSError) as exc:
        _fail(str(exc))
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("domain,rank,group\n")
        for entry in result.entries:
            fh.write(f"{entry.domain},{entry.rank},{entry.group}\n")
    for lineno, reason in result.row_errors:
        click.echo(f"row {lineno}: {reason}", err=True)
    for group, missing in sorted(result.shortfalls.items()):
        click.echo(f"shortfall: {group} is missing {missing} domains", err=True)
    click.echo(f"wrote {len(result.entries)} targets to {out}")
    if result.shortfalls:
        sys.exit(EXIT_PARTIAL)


@main.command()
@click.argument("domains", nargs=-1)
@click.option("--from-file", type=click.Path(dir_okay=False))
@click.option("--timeout", default=5.0, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False))
def probe(domains, from_file, timeout, out):
    """Check TCP reachability of domains on ports 443 and 80."""
    names = list(domains)
    if from_file:
        try:
            with open(from_file, "r", encoding="utf-8") as fh:
                names.extend(line.strip() for line in fh if line.strip())
        except OSError as exc:
            _fail(str(exc))
    if not names:
        _fail("no domains given")
    lines = []
    n_reachable = 0
    for domain in names:
        try:
            result = corpus_mod.probe(domain, timeout=timeout)
        except BannerLensError as exc:
            _fail(str(exc))
        n_reachable += int(result.reachable)
        lines.append(
            json.dumps(
                {
                    "domain": result.domain,
                    "reachable": result.reachable,
                    "outcomes": {str(k): v for k, v in result.outcomes.items()},
                }
            )
        )
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    click.echo(f"{n_reachable}/{len(names)} reachable", err=True)


@main.command()
@click.argument("domains", nargs=-1)
@click.option("--from-file", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--log", type=click.Path(dir_okay=False))
def acquire(domains, from_file, out_dir, log):
    """Fetch front pages through the fixed retry ladder."""
    import os
    import urllib.request

    names = list(domains)
    if from_file:
        try:
            with open(from_file, "r", encoding="utf-8") as fh:
                names.extend(line.strip() for line in fh if line.strip())
        except OSError as exc:
            _fail(str(exc))
    if not names:
        _fail("no domains given")
    os.makedirs(out_dir, exist_ok=True)

    def fetcher(url: str, timeout: float) -> bytes:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()

    attempt_log: list[dict[str, Any]] = []
    n_manual = 0
    for domain in names:
        saved_body: dict[str, bytes] = {}

        def saving_fetcher(url: str, timeout: float) -> bytes:
            body = fetcher(url, timeout)
            saved_body["body"] = body
            return body

        result = corpus_mod.acquire(domain, saving_fetcher, attempt_log=attempt_log)
        if result.status == "ok":
            path = os.path.join(out_dir, f"{domain}.html")
            with open(path, "wb") as fh:
                fh.write(saved_body["body"])
            click.echo(f"{domain}: ok ({result.url})")
        else:
            n_manual += 1
            click.echo(f"{domain}: manual-needed after {len(result.attempts)} attempts")
    if log:
        with open(log, "w", encoding="utf-8") as fh:
            for entry in attempt_log:
                fh.write(json.dumps(entry) + "\n")
    if n_manual:
        sys.exit(EXIT_PARTIAL)


@main.command()
@click.argument("annotations", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False))
@click.option("--strict", is_flag=True, help="Exit non-zero on any record error.")
def ingest(annotations, out, strict):
    """Validate percent-coordinate annotations and normalize them."""
    try:
        parsed, errors = corpus_mod.ingest_annotations(annotations)
    except (BannerLensError, json.JSONDecodeError, OSError) as exc:
        _fail(str(exc))
    for err in errors:
        click.echo(f"record {err.index} ({err.website_id}): {err.message}", err=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            for rec in corpus_mod.emit_annotations(parsed):
                fh.write(json.dumps(rec) + "\n")
    click.echo(f"{len(parsed)} valid records, {len(errors)} rejected")
    if errors and strict:
        sys.exit(EXIT_PARTIAL)


def _rarity_from_options(bin_count, no_weight_normalization, upsample) -> RarityConfig:
    return RarityConfig(
        bin_count=bin_count,
        weight_normalization=not no_weight_normalization,
        upsample_method=upsample,
    )


@main.command()
@click.argument("image", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
@click.option("--npy", type=click.Path(dir_okay=False))
@click.option("--bin-count", default=10, show_default=True)
@click.option("--no-weight-normalization", is_flag=True)
@click.option("--upsample", default="bilinear", show_default=True)
def saliency(image, out, npy, bin_count, no_weight_normalization, upsample):
    """Render the salience map of one image as a grayscale PNG."""
    from PIL import Image as PILImage

    try:
        shot = load_screenshot(image, source_id=image)
        config = _rarity_from_options(bin_count, no_weight_normalization, upsample)
        smap = compute_salience(
            extract_filter_bank(shot, FilterBankSpec()), shot.width, shot.height, config
        )
    except (BannerLensError, OSError) as exc:
        _fail(str(exc))
    gray = np.clip(np.rint(smap.scores), 0, 255).astype(np.uint8)
    PILImage.fromarray(gray, mode="L").save(out)
    if npy:
        np.save(npy, smap.scores)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--config", type=click.Path(dir_okay=False))
@click.option("--annotations", type=click.Path(dir_okay=False))
@click.option("--screenshots", type=click.Path(file_okay=False))
@click.option("--store", type=click.Path(dir_okay=False))
@click.option("--backend", default=None, help="filterbank or fmap:<template>")
@click.option("--threshold", type=float, default=None)
@click.option("--ensemble-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--no-perturb", is_flag=True, default=None)
@click.option("--concurrency", type=int, default=None)
def score(config, annotations, screenshots, store, backend, threshold, ensemble_size, seed, no_perturb, concurrency):
    """Score a labeled corpus into the JSON-lines results store."""
    overrides = {
        "annotations": annotations,
        "screenshots": screenshots,
        "store": store,
        "backend": backend,
        "threshold": threshold,
        "ensemble_size": ensemble_size,
        "seed": seed,
        "no_perturb": no_perturb,
        "concurrency": concurrency,
    }
    try:
        if config:
            run_config = RunConfig.from_file(config, **overrides)
        else:
            required = {k: v for k, v in overrides.items() if v is not None}
            missing = {"annotations", "screenshots", "store"} - set(required)
            if missing:
                _fail(f"missing required options: {sorted(missing)}")
            run_config = RunConfig(**required)
        parsed, errors = corpus_mod.ingest_annotations(run_config.annotations)
        for err in errors:
            click.echo(f"record {err.index} ({err.website_id}): {err.message}", err=True)
        summary = run_pipeline(run_config, parsed)
    except PipelineAborted as exc:
        _fail(str(exc), code=EXIT_PARTIAL)
    except (BannerLensError, json.JSONDecodeError, OSError) as exc:
        _fail(str(exc))
    mode = "perturbed" if summary.perturbed else "single-sample"
    click.echo(
        f"scored {summary.n_scored} banners ({mode}), skipped {summary.n_skipped}, "
        f"store at {summary.store}"
    )
    if summary.n_skipped:
        for entry in summary.skipped:
            click.echo(
                f"skipped {entry['website_id']}/{entry['locale']}: {entry['reason']}",
                err=True,
            )
        sys.exit(EXIT_PARTIAL)


@main.command("verdict")
@click.argument("image", type=click.Path(dir_okay=False))
@click.argument("boxes_json", type=click.Path(dir_okay=False))
@click.option("--threshold", default=0.07, show_default=True)
@click.option("--ensemble-size", default=0, show_default=True, help="0 disables the ensemble.")
@click.option("--seed", default=0, show_default=True)
def verdict_cmd(image, boxes_json, threshold, ensemble_size, seed):
    """Verdict for one screenshot and its button boxes."""
    try:
        shot = load_screenshot(image, source_id=image)
        boxes = _load_boxes(boxes_json)
        score_boxes = {r: b for r, b in boxes.items() if r in VERDICT_ROLES}
        bank = FilterBankSpec()
        rarity = RarityConfig()

        def backend(s: Screenshot):
            return compute_salience(extract_filter_bank(s, bank), s.width, s.height, rarity)

        if ensemble_size > 0:
            pcfg = PerturbationConfig(ensemble_size=ensemble_size, master_seed=seed)
            scores = ensemble_scores(shot, score_boxes, pcfg, backend, score_button)
        else:
            smap = backend(shot)
            scores = {r: score_button(smap, b, r) for r, b in score_boxes.items()}
        result = verdict(scores, threshold)
    except (BannerLensError, json.JSONDecodeError, OSError) as exc:
        _fail(str(exc))
    _echo_json(
        {
            "threshold": result.threshold,
            "winner": result.winner,
            "manipulation_accept": result.manipulation_accept,
            "manipulation_reject": result.manipulation_reject,
            "manipulation_manage": result.manipulation_manage,
            "scores": result.scores,
            "margins": {
                k: (None if not np.isfinite(v) else v) for k, v in result.margins.items()
            },
        }
    )


@main.command()
@click.argument("store", type=click.Path(dir_okay=False))
@click.option("--min", "t_min", default=0.0, show_default=True)
@click.option("--max", "t_max", default=0.10, show_default=True)
@click.option("--step", default=0.005, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False))
def sweep(store, t_min, t_max, step, out):
    """Winner prevalence across a threshold grid, from a results store."""
    if step <= 0 or t_max < t_min or t_min < 0:
        _fail("need 0 <= min <= max and step > 0")
    thresholds = []
    t = t_min
    while t <= t_max + 1e-12:
        thresholds.append(round(t, 10))
        t += step
    try:
        records, partial = load_store(store)
        rows = sweep_rows(records, thresholds)
    except (BannerLensError, json.JSONDecodeError, OSError) as exc:
        _fail(str(exc))
    if partial:
        click.echo("warning: store carries a partial-run marker", err=True)
    payload = json.dumps(rows, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(payload)


@main.command()
@click.argument("image", type=click.Path(dir_okay=False))
@click.argument("boxes_json", type=click.Path(dir_okay=False))
@click.option("--margin", default=0.10, show_default=True)
def baseline(image, boxes_json, margin):
    """Grayscale-contrast baseline for one screenshot."""
    try:
        shot = load_screenshot(image, source_id=image)
        boxes = _load_boxes(boxes_json)
        result = contrast_baseline(shot, boxes, margin)
    except (BannerLensError, json.JSONDecodeError, OSError) as exc:
        _fail(str(exc))
    _echo_json(
        {
            "contrasts": result.contrasts,
            "flagged": result.flagged,
            "margin": result.margin,
        }
    )


def _result_payload(res: stats_mod.TestResult) -> dict[str, Any]:
    return {
        "method": res.method,
        "statistic": res.statistic,
        "p_value": res.p_value,
        "df": list(res.df) if isinstance(res.df, tuple) else res.df,
        "effect_size": res.effect_size,
        "details": res.details,
    }


def salience_stats(records: list[dict[str, Any]]) -> dict[str, Any]:
    """Inferential analyses over a results store.

    Repeated-measures ANOVA across the three roles' combined scores,
    Bonferroni-corrected Wilcoxon post-hocs, and McNemar against the
    contrast baseline, all on the compliant subset.
    """
    import pandas as pd

    subset = [r for r in records if r.get("compliant_subset")]
    if not subset:
        raise stats_mod.InputError("no compliant-subset records in store")
    out: dict[str, Any] = {"n_banners": len(subset)}

    tri = [
        r
        for r in subset
        if all(role in r["scores"] for role in VERDICT_ROLES)
    ]
    if len(tri) >= 2:
        matrix = np.array(
            [[r["scores"][role]["combined"] for role in VERDICT_ROLES] for r in tri]
        )
        out["rm_anova"] = _result_payload(stats_mod.rm_anova(matrix))
        accept = matrix[:, 0]
        reject = matrix[:, 1]
        manage = matrix[:, 2]
        out["wilcoxon_accept_vs_reject"] = _result_payload(
            stats_mod.wilcoxon_signed_rank(accept, reject, bonferroni=2)
        )
        out["wilcoxon_accept_vs_manage"] = _result_payload(
            stats_mod.wilcoxon_signed_rank(accept, manage, bonferroni=2)
        )
    flags = [
        (r["winner"] == "accept", bool(r["baseline"]["flagged"]))
        for r in subset
        if r.get("baseline") is not None
    ]
    if flags:
        try:
            out["mcnemar_vs_baseline"] = _result_payload(stats_mod.mcnemar(flags))
        except stats_mod.UndefinedStatisticError as exc:
            out["mcnemar_vs_baseline"] = {"error": str(exc)}
        out["verdict_rate"] = float(np.mean([a for a, _ in flags]))
        out["baseline_rate"] = float(np.mean([b for _, b in flags]))

    if any(r.get("perturbed") for r in subset) and any(
        r.get("design") is not None for r in subset
    ):
        out["note"] = (
            "design regression uses perturbed scores; rerun with --no-perturb "
            "for design-level estimates"
        )

    rows = []
    for r in subset:
        if r.get("design") is None:
            continue
        for role in VERDICT_ROLES:
            if role not in r["scores"] or role not in r["design"]:
                continue
            feat = r["design"][role]
            rows.append(
                {
                    "banner": f"{r['website_id']}__{r['locale']}",
                    "combined": r["scores"][role]["combined"],
                    "is_accept": 1.0 if role == "accept" else 0.0,
                    "is_reject": 1.0 if role == "reject" else 0.0,
                    "website_eu": 1.0 if r["website_eu"] else 0.0,
                    "button_size": feat["button_size"],
                    "brightness": feat["brightness"],
                    "contrast": feat["contrast"],
                    "button_distance": feat["button_distance"],
                    "bb_distance": feat["bb_distance"],
                    "corner": 1.0 if feat["corner"] else 0.0,
                    "link": 1.0 if feat["link"] else 0.0,
                    "hidden": 1.0 if feat["hidden"] else 0.0,
                    "choice_menu": 1.0 if feat["choice_menu"] else 0.0,
                }
            )
    if rows:
        frame = pd.DataFrame(rows)
        out["regressions"] = {}
        role_spec = _prescreened_regression(
            frame,
            stats_mod.RegressionSpec(
                response="combined",
                predictors=("is_accept", "is_reject", "website_eu"),
                group="banner",
                response_divisor=2.0,
            ),
        )
        out["regressions"]["salience_by_role"] = role_spec
        design_spec = _prescreened_regression(
            frame,
            stats_mod.RegressionSpec(
                response="combined",
                predictors=(
                    "button_size",
                    "brightness",
                    "contrast",
                    "button_distance",
                    "bb_distance",
                    "corner",
                    "link",
                    "hidden",
                    "choice_menu",
                ),
                group="banner",
                response_divisor=2.0,
            ),
        )
        out["regressions"]["salience_by_design"] = design_spec
    return out


def _prescreened_regression(frame, spec: stats_mod.RegressionSpec) -> dict[str, Any]:
    """Fit a fixed-effects regression, dropping within-group-constant predictors.

    A predictor with no within-group variation is absorbed by the group
    effects and cannot be estimated; it is removed with a note instead of
    failing the whole analysis.
    """
    absorbed = []
    keep = []
    grouped = frame.groupby(spec.group)
    for name in spec.predictors:
        if (grouped[name].nunique() <= 1).all():
            absorbed.append(name)
        else:
            keep.append(name)
    note = None
    if absorbed:
        note = f"absorbed by group effects: {', '.join(absorbed)}"
        spec = dataclasses.replace(spec, predictors=tuple(keep))
    if not spec.predictors:
        return {"error": "no estimable predictors", "absorbed": absorbed}
    try:
        fit = stats_mod.fixed_effects_ols(spec, frame)
    except stats_mod.CollinearityError as exc:
        return {"error": str(exc), "absorbed": absorbed}
    payload = {
        "params": fit.params.to_dict(),
        "se": fit.se.to_dict(),
        "p_values": fit.pvalues.to_dict(),
        "r2": fit.r2,
        "r2_within": fit.r2_within,
        "r2_fe_only": fit.r2_fe_only,
        "n_obs": fit.n_obs,
        "n_groups": fit.n_groups,
        "standardized": fit.standardized,
    }
    if note:
        payload["note"] = note
    return payload


@main.command("stats")
@click.argument("store", type=click.Path(dir_okay=False))
@click.option("--annotations", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False))
def stats_cmd(store, annotations, out):
    """Hypothesis tests and descriptive tables from a results store."""
    try:
        records, partial = load_store(store)
        payload = salience_stats(records)
        if annotations:
            parsed, errors = corpus_mod.ingest_annotations(annotations)
            for err in errors:
                click.echo(
                    f"record {err.index} ({err.website_id}): {err.message}", err=True
                )
            comp = stats_mod.compliance_table(parsed)
            payload["compliance"] = {
                f"{site}/{visitor}": shares
                for (site, visitor), shares in comp.shares.items()
            }
            freq = stats_mod.category_frequencies(parsed)
            payload["frequencies"] = {
                f"{site}/{visitor}": shares
                for (site, visitor), shares in freq.shares.items()
            }
            try:
                trans = stats_mod.transitions(parsed)
                payload["transitions"] = {
                    "n_paired": trans.n_paired,
                    "changed_fraction": trans.changed_fraction,
                    "links": trans.to_records(),
                }
            except stats_mod.UndefinedStatisticError as exc:
                payload["transitions"] = {"error": str(exc)}
    except (BannerLensError, json.JSONDecodeError, OSError) as exc:
        _fail(str(exc))
    if partial:
        click.echo("warning: store carries a partial-run marker", err=True)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


@main.command()
@click.argument("store", type=click.Path(dir_okay=False))
@click.option("--annotations", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--no-figures", is_flag=True)
def report(store, annotations, out_dir, no_figures):
    """Write report tables, plot payloads, and figures."""
    try:
        records, partial = load_store(store)
        parsed = None
        if annotations:
            parsed, errors = corpus_mod.ingest_annotations(annotations)
            for err in errors:
                click.echo(
                    f"record {err.index} ({err.website_id}): {err.message}", err=True
                )
        written = write_report(
            records,
            out_dir,
            annotations=parsed,
            thresholds=DEFAULT_SWEEP,
            figures=not no_figures,
        )
    except (BannerLensError, json.JSONDecodeError, OSError) as exc:
        _fail(str(exc))
    if partial:
        click.echo("warning: store carries a partial-run marker", err=True)
    for name, path in sorted(written.items()):
        click.echo(f"{name}: {path}")


if __name__ == "__main__":
    main()
