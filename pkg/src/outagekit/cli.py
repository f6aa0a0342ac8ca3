"""Command-line entry point.

Typical run::

    outagekit synth --scenario mixed --seed 7 --out work
    outagekit ingest work/outages.csv --out work
    outagekit analyze work/events.json --out work
    outagekit scaling work/events.json work/labels.csv --out work
    outagekit tipping work/labels.csv --out work
    outagekit evolve work/events.json work/labels.csv --out work
    outagekit impact work/events.json work/labels.csv --out work
    outagekit report work

Exit codes: 0 success, 1 analysis error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from . import dependence as dep
from . import events as evmod
from . import impact as imp
from . import pipeline as pl
from . import scaling as sc
from . import synth
from . import triage as tr
from .dependence import CategoryLabel
from .errors import OutageError, ParseError
from .events import SeverityClass
from .ingest import DEFAULT_QUIET_GAP, parse_outage_csv, write_outage_csv

log = logging.getLogger("outagekit")

EXIT_OK, EXIT_ANALYSIS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class Bundle:
    """Collects outputs in memory so nothing is written until inputs have validated."""

    def __init__(self, out_dir: Path, command: str, inputs: Sequence[Path], config: dict, seeds=()):
        self.out_dir = out_dir
        self.command = command
        self.inputs = list(inputs)
        self.config = config
        self.seeds = list(seeds)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def _rel(self, p: Path) -> str:
        return Path(os.path.relpath(Path(p).resolve(), self.out_dir.resolve())).as_posix()

    def commit(self) -> list[Path]:
        written = [pl.write_text(self.out_dir / name, text) for name, text in sorted(self.files.items())]
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "inputs": [self._rel(p) for p in self.inputs],
            "output_dir": ".",
            "config": self.config,
            "seeds": self.seeds,
            "outputs": [
                {"path": p.relative_to(self.out_dir).as_posix(), "sha256": pl.sha256_file(p)}
                for p in written
            ],
        }
        pl.write_text(self.out_dir / f"manifest_{self.command}.json", pl.dumps_json(manifest))
        return written


def _require(path: str | Path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.scenario == "mixed":
        configs = synth.mixed_scenario(args.seed, args.repeat, args.alpha)
    else:
        configs = [
            synth.SynthConfig(
                seed=args.seed + k,
                n_failures=args.n_failures,
                arrival_rate=args.rate,
                alpha=args.alpha,
                crews=args.crews,
                policy=args.policy,
                storm_flag=args.storm,
                crew_start=args.crew_start,
                id_prefix=f"e{k}-",
            )
            for k in range(args.repeat)
        ]
    traces = synth.generate_sequence(configs)
    buf = io.StringIO()
    write_outage_csv([r for t in traces for r in t.records], buf)
    b = Bundle(Path(args.out), "synth", [], {k: v for k, v in vars(args).items() if k not in ("func", "out")},
               seeds=[c.seed for c in configs])
    b.add("outages.csv", buf.getvalue())
    b.add("truth.json", pl.dumps_json({"events": [t.sidecar() for t in traces]}))
    b.commit()
    return EXIT_OK


def cmd_ingest(args) -> int:
    src = _require(args.csv)
    with open(src, "rb") as fh:
        records, report = parse_outage_csv(fh)
    params = pl.EventParams(args.quiet_gap, args.step, args.moderate_floor, args.extreme_floor)
    events = pl.build_events(records, params)
    b = Bundle(Path(args.out), "ingest", [src], vars(params))
    b.add("events.json", pl.dumps_json(pl.events_document(events, params)))
    b.add("validation.json", pl.dumps_json(report.to_dict()))
    b.commit()
    if report.rejected:
        log.warning("%d of %d rows rejected (see validation.json)", report.rejected, report.total)
    return EXIT_OK


def _analysis_params(args) -> pl.AnalysisParams:
    return pl.AnalysisParams(
        x_bins=args.x_bins,
        y_bins=args.y_bins,
        threshold_frac=args.threshold_frac,
        folds=args.folds,
        large_threshold=args.large_threshold,
        fast_quantile=args.fast_quantile,
        prolonged_quantile=args.prolonged_quantile,
        confidence=args.confidence,
        seed=args.seed,
    )


def _heatmap(grid: dep.JointGrid) -> str:
    nx, ny = grid.shape
    rows = [(i, j, float(grid.f_values[i, j]), float(grid.err[i, j])) for i in range(nx) for j in range(ny)]
    return pl.csv_text(("x_bin", "y_bin", "f", "err"), rows)


def cmd_analyze(args) -> int:
    src = _require(args.events)
    events, _ = pl.load_events(src)
    p = _analysis_params(args)
    usable = pl.analysable(events)
    if not usable:
        log.warning("no analysable events in %s; writing empty outputs", src)
    analyses = [pl.analyze_event(ev, p) for ev in usable]

    grids_doc = {"params": vars(p), "severities": {}}
    clusters_doc = {"params": vars(p), "severities": {}, "events": {}}
    b = Bundle(Path(args.out), "analyze", [src], vars(p), seeds=[p.seed])
    for a in analyses:
        entry = {"severity": a.event.severity.value, "n_stage1": len(a.samples)}
        if a.error:
            entry["error"] = a.error
        else:
            entry["clusters"] = [c.to_dict() for c in a.clusters]
        clusters_doc["events"][a.event.event_id] = entry
    for sev, group in pl.by_severity(analyses).items():
        grids = [a.grid for a in group]
        avg = dep.average_dependence(grids)
        clusters = dep.clusters_from_average(grids, p.threshold_frac, p.confidence, **p.category_kwargs())
        grids_doc["severities"][sev.value] = {"n_events": len(group), "grid": avg.to_dict()}
        clusters_doc["severities"][sev.value] = {
            "n_events": len(group),
            "clusters": [c.to_dict() for c in clusters],
        }
        b.add(f"heatmap_{sev.value.lower()}.csv", _heatmap(avg))
    b.add("grids.json", pl.dumps_json(grids_doc))
    b.add("clusters.json", pl.dumps_json(clusters_doc))
    b.add("labels.csv", pl.csv_text(pl.LABEL_COLUMNS, pl.labels_rows(analyses)))
    b.commit()
    return EXIT_OK


def _labels_by_event(rows: Sequence[pl.LabelRow]) -> dict[str, list[pl.LabelRow]]:
    out: dict[str, list[pl.LabelRow]] = {}
    for r in rows:
        out.setdefault(r.event_id, []).append(r)
    return out


def cmd_scaling(args) -> int:
    ev_path, lab_path = _require(args.events), _require(args.labels)
    events, _ = pl.load_events(ev_path)
    rows = pl.load_labels(lab_path)
    b = Bundle(Path(args.out), "scaling", [ev_path, lab_path], {})
    rules = {}
    by_sev = pl.by_severity(pl.analysable(events), key=lambda e: e.severity)
    label_sev = pl.by_severity(rows, key=lambda r: r.severity)
    for sev, group in label_sev.items():
        samples = [r.sample() for r in group]
        labels = {r.record_id: r.category for r in group}
        curve = sc.recovery_scaling(samples, labels)
        b.add(f"recovery_scaling_{sev.value.lower()}.csv", pl.csv_text(("d", "p_c", "p_r", "category"), curve.rows()))
        summary = sc.rule_summary(samples, labels)
        large = summary.combined(CategoryLabel.PRIORITIZED_LARGE, CategoryLabel.NON_PRIORITIZED_LARGE)
        rules[sev.value] = {
            "categories": summary.to_dict(),
            "large_failures": vars(large),
        }
    for sev, group in by_sev.items():
        fcurve = sc.failure_scaling(group)
        b.add(
            f"failure_scaling_{sev.value.lower()}.csv",
            pl.csv_text(("x", "p_exceed", "p_c", "p_exceed_std", "p_c_std"), fcurve.rows()),
        )
        shares = [sc.top_share([r.customers for r in ev.stage1_records], 0.25) for ev in group]
        rules.setdefault(sev.value, {})["top25_customer_share_mean"] = sum(shares) / len(shares)
    b.add("rules.json", pl.dumps_json(rules))
    b.commit()
    return EXIT_OK


def cmd_tipping(args) -> int:
    lab_path = _require(args.labels)
    rows = pl.load_labels(lab_path)
    b = Bundle(Path(args.out), "tipping", [lab_path], {"epsilon": args.epsilon, "large_threshold": args.large_threshold})
    per_event = {}
    values: dict[SeverityClass, list[float]] = {}
    for event_id, group in sorted(_labels_by_event(rows).items()):
        sev = group[0].severity
        try:
            curve = tr.baseline_curve([r.sample() for r in group], args.large_threshold)
        except OutageError as exc:
            per_event[event_id] = {"severity": sev.value, "error": exc.code}
            continue
        tp = tr.tipping_point(curve, args.epsilon)
        per_event[event_id] = {
            "severity": sev.value,
            "value": tp.value,
            "deviation_index": tp.deviation_index,
            "n_large": curve.n_large,
        }
        values.setdefault(sev, []).append(tp.value)
        b.add(f"baseline/{event_id}.csv", pl.csv_text(("k", "a", "b"), curve.rows()))
    agg = tr.aggregate_tipping({s: values[s] for s in pl.SEVERITY_ORDER if s in values})
    b.add(
        "tipping.json",
        pl.dumps_json(
            {
                "epsilon": args.epsilon,
                "events": per_event,
                "summary": {s.value: {"mean": m, "std": sd, "n_events": len(values[s])} for s, (m, sd) in agg.items()},
            }
        ),
    )
    b.commit()
    return EXIT_OK


def _event_labels(events, rows):
    by_event = _labels_by_event(rows)
    for ev in pl.analysable(events):
        group = by_event.get(ev.event_id, [])
        yield ev, {r.record_id: r.category for r in group}


def cmd_evolve(args) -> int:
    ev_path, lab_path = _require(args.events), _require(args.labels)
    events, _ = pl.load_events(ev_path)
    rows = pl.load_labels(lab_path)
    b = Bundle(Path(args.out), "evolve", [ev_path, lab_path], {"step": args.step})
    stages = {}
    for ev, labels in _event_labels(events, rows):
        total = evmod.pending_series(ev, args.step)
        b.add(f"evolution/{ev.event_id}_pending.csv", pl.csv_text(("t_minutes", "count"), zip(total.time_grid.tolist(), total.counts.tolist())))
        stage1 = ev.stage1_records
        per_cat = evmod.category_pending_series(stage1, labels, args.step)
        long_rows = []
        for cat, series in per_cat.items():
            long_rows += [(int(t), cat.value, int(c)) for t, c in zip(series.time_grid, series.counts)]
        b.add(f"evolution/{ev.event_id}_categories.csv", pl.csv_text(("t_minutes", "category", "count"), long_rows))
        stages[ev.event_id] = {
            "severity": ev.severity.value,
            "split_time": ev.partition.split_time,
            "peak_value": ev.pending.peak_value,
            "stage1_ids": sorted(ev.partition.stage1_ids),
            "stage2_ids": sorted(ev.partition.stage2_ids),
            "category_peaks": {c.value: {"time": s.peak_time, "value": s.peak_value} for c, s in per_cat.items()},
        }
    b.add("stages.json", pl.dumps_json(stages))
    b.commit()
    return EXIT_OK


def cmd_impact(args) -> int:
    ev_path, lab_path = _require(args.events), _require(args.labels)
    events, _ = pl.load_events(ev_path)
    rows = pl.load_labels(lab_path)
    b = Bundle(Path(args.out), "impact", [ev_path, lab_path], {"step": args.step})
    per_event = {}
    pooled: dict[str, dict[str, dict[str, float]]] = {}
    for ev, labels in _event_labels(events, rows):
        stage1 = [r for r in ev.stage1_records if r.record_id in labels]
        rep = imp.impact_report(stage1, labels, args.step)
        growth = imp.cumulative_downtime_growth(stage1, labels, args.step)
        entry = rep.to_dict()
        entry["severity"] = ev.severity.value
        entry["growth_ratio_prolonged_small_vs_non_prioritized_large"] = growth.ratio(
            CategoryLabel.PROLONGED_SMALL, CategoryLabel.NON_PRIORITIZED_LARGE
        )
        per_event[ev.event_id] = entry
        curve_rows = []
        for cat, curve in growth.curves.items():
            curve_rows += [(int(t), cat.value, int(v)) for t, v in zip(growth.grid, curve)]
        b.add(f"downtime/{ev.event_id}.csv", pl.csv_text(("t", "category", "customer_minutes"), curve_rows))
        sev = pooled.setdefault(ev.severity.value, {})
        for cat, ci in rep.categories.items():
            acc = sev.setdefault(cat.value, {"cmi": 0, "n_failures": 0, "n_events": 0})
            acc["cmi"] += ci.cmi
            acc["n_failures"] += ci.n_failures
            acc["n_events"] += 1
    summary = {}
    for sev, cats in pooled.items():
        summary[sev] = {
            cat: {
                "mean_cmi_per_failure": acc["cmi"] / acc["n_failures"] if acc["n_failures"] else 0.0,
                "mean_cmi_per_event": acc["cmi"] / acc["n_events"],
            }
            for cat, acc in cats.items()
        }
    ratios = {}
    if "Extreme" in summary and "Moderate" in summary:
        npl = CategoryLabel.NON_PRIORITIZED_LARGE.value
        hi, lo = summary["Extreme"][npl], summary["Moderate"][npl]
        ratios["non_prioritized_large_extreme_vs_moderate"] = {
            k: (hi[k] / lo[k] if lo[k] else None) for k in ("mean_cmi_per_failure", "mean_cmi_per_event")
        }
    b.add("impact.json", pl.dumps_json({"events": per_event, "severities": summary, "ratios": ratios}))
    b.commit()
    return EXIT_OK


def _fmt_pct(x: float) -> str:
    return f"{100 * x:6.2f}%"


def _ratio(v) -> str:
    return "n/a" if v is None else f"{v:.2f}x"


def _impact_lines(d: dict) -> list[str]:
    out = [f"{len(d.get('events', {}))} event(s) summarized"]
    for sev, cats in d.get("severities", {}).items():
        cells = ", ".join(f"{cat} {v['mean_cmi_per_failure']:.0f}" for cat, v in cats.items())
        out.append(f"{sev} mean CMI per failure: {cells}")
    for name, v in d.get("ratios", {}).items():
        out.append(
            f"{name}: per failure {_ratio(v['mean_cmi_per_failure'])}, per event {_ratio(v['mean_cmi_per_event'])}"
        )
    return out


def cmd_report(args) -> int:
    work = Path(args.work)
    if not work.is_dir():
        raise UsageError(f"work directory not found: {work}")
    for required in ("events.json", "labels.csv"):
        if not (work / required).is_file():
            raise UsageError(f"missing upstream artifact: {work / required}")
    events, _ = pl.load_events(work / "events.json")
    rows = pl.load_labels(work / "labels.csv")
    out = Path(args.out) if args.out else work

    lines = [f"outagekit {__version__} report", ""]
    counts = {s: 0 for s in SeverityClass}
    for ev in events:
        counts[ev.severity] += 1
    lines.append("Events: " + ", ".join(f"{s.value}={counts[s]}" for s in SeverityClass))
    lines.append(f"Labelled Stage-1 failures: {len(rows)}")
    lines.append("")
    lines.append("Category shares (customers / downtime / failures):")
    if rows:
        summary = sc.rule_summary([r.sample() for r in rows], {r.record_id: r.category for r in rows})
        for cat, sh in summary.shares.items():
            lines.append(
                f"  {cat.value:<20} {_fmt_pct(sh.customer_share)} {_fmt_pct(sh.downtime_share)} {_fmt_pct(sh.failure_share)}"
            )
        tot = summary.combined(*CategoryLabel)
        lines.append(f"  {'total':<20} {_fmt_pct(tot.customer_share)} {_fmt_pct(tot.downtime_share)} {_fmt_pct(tot.failure_share)}")
    else:
        lines.append("  (no labelled failures)")
    lines.append("")

    def section(title: str, name: str, render) -> None:
        lines.append(title + ":")
        path = work / name
        if path.is_file():
            lines.extend("  " + s for s in render(json.loads(path.read_text(encoding="utf-8"))))
        else:
            lines.append("  absent")
        lines.append("")

    section(
        "Clusters (event-averaged)",
        "clusters.json",
        lambda d: [
            f"{sev}: " + (", ".join(f"{c['label_hint']} x{c['x_range']} y{c['y_range']}" for c in v["clusters"]) or "none")
            for sev, v in d["severities"].items()
        ],
    )
    section(
        "Recovery scaling (large failures)",
        "rules.json",
        lambda d: [
            f"{sev}: customers {_fmt_pct(v['large_failures']['customer_share'])}, downtime {_fmt_pct(v['large_failures']['downtime_share'])}"
            for sev, v in d.items()
            if "large_failures" in v
        ],
    )
    section(
        "Tipping points",
        "tipping.json",
        lambda d: [f"{sev}: mean {v['mean']:.3f} std {v['std']:.3f} over {v['n_events']} event(s)" for sev, v in d["summary"].items()],
    )
    section(
        "Evolution",
        "stages.json",
        lambda d: [f"{eid}: split at t={v['split_time']} (peak {v['peak_value']} pending)" for eid, v in d.items()],
    )
    section("Impact", "impact.json", _impact_lines)

    b = Bundle(out, "report", [work / "events.json", work / "labels.csv"], {})
    b.add("summary.txt", "\n".join(lines).rstrip() + "\n")
    b.commit()

    listing = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            listing.append({"path": p.relative_to(out).as_posix(), "sha256": pl.sha256_file(p)})
    manifest = {
        "tool_version": __version__,
        "output_dir": ".",
        "files": listing,
    }
    pl.write_text(out / "manifest.json", pl.dumps_json(manifest))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="outagekit", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic outage records")
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", choices=("mixed", "single"), default="mixed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--n-failures", type=int, default=1000)
    p.add_argument("--rate", type=float, default=60.0, help="arrivals per hour")
    p.add_argument("--alpha", type=float, default=1.1)
    p.add_argument("--crews", type=int, default=1)
    p.add_argument("--policy", choices=[x.value for x in synth.Policy], default="SizePriority")
    p.add_argument("--storm", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--crew-start", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a CSV and group it into events")
    p.add_argument("csv")
    p.add_argument("--out", required=True)
    p.add_argument("--quiet-gap", type=int, default=DEFAULT_QUIET_GAP)
    p.add_argument("--step", type=int, default=evmod.DEFAULT_STEP)
    p.add_argument("--moderate-floor", type=int, default=evmod.MODERATE_FLOOR)
    p.add_argument("--extreme-floor", type=int, default=evmod.EXTREME_FLOOR)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="dependence grids, clusters and category labels")
    p.add_argument("events")
    p.add_argument("--out", required=True)
    p.add_argument("--x-bins", type=int, default=dep.DEFAULT_X_BINS)
    p.add_argument("--y-bins", type=int, default=dep.DEFAULT_Y_BINS)
    p.add_argument("--threshold-frac", type=float, default=dep.THRESHOLD_FRAC)
    p.add_argument("--folds", type=int, default=dep.FOLDS)
    p.add_argument("--confidence", type=float, default=dep.CONFIDENCE)
    p.add_argument("--large-threshold", type=int, default=dep.LARGE_THRESHOLD)
    p.add_argument("--fast-quantile", type=float, default=dep.FAST_QUANTILE)
    p.add_argument("--prolonged-quantile", type=float, default=dep.PROLONGED_QUANTILE)
    p.add_argument("--seed", type=int, default=0, help="fold shuffle seed")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scaling", help="recovery/failure scaling curves and share rules")
    p.add_argument("events")
    p.add_argument("labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("tipping", help="baseline curves and tipping points")
    p.add_argument("labels")
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=tr.DEFAULT_EPSILON)
    p.add_argument("--large-threshold", type=int, default=dep.LARGE_THRESHOLD)
    p.set_defaults(func=cmd_tipping)

    p = sub.add_parser("evolve", help="pending-repair series per event and category")
    p.add_argument("events")
    p.add_argument("labels")
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=int, default=evmod.DEFAULT_STEP)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("impact", help="CMI, downtime growth and device mix")
    p.add_argument("events")
    p.add_argument("labels")
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=int, default=evmod.DEFAULT_STEP)
    p.set_defaults(func=cmd_impact)

    p = sub.add_parser("report", help="text summary and manifest of a work directory")
    p.add_argument("work")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OutageError, ValueError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
