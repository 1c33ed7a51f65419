"""Command-line front end: composable file-based stages.

Subcommands mirror the collection -> processing -> analysis flow: `synth`
emits traces, `aggregate` integrates them into matrices, `cocluster` fits the
model, `assoc`/`locations`/`stability` derive the analysis artifacts, and
`report` renders plot-ready summaries. Every stage reads and writes only the
documented file formats, so stages can be rerun or swapped independently.

Exit codes: 0 success, 1 usage error, 2 data error (bad file content or a
missing/contradictory input).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import locations as loc
from . import pipeline as pipe
from . import stability as stab
from . import synth
from . import traces
from .cocluster import (CoclusterConfig, association_matrix, cocluster, load_model,
                        save_model)
from .matrix import load_matrix, scale_matrix, write_matrix
from .provenance import load_json_artifact, write_json_artifact, write_text_artifact


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_out_dir(parser: _Parser) -> None:
    env = os.environ.get("TRACECLUST_OUT_DIR")
    parser.add_argument("--out-dir", type=Path, default=env, required=env is None,
                        help="output directory (env TRACECLUST_OUT_DIR)")


def _parse_local_prefixes(value: str) -> set[str]:
    path = Path(value)
    if path.exists():
        return {line.strip() for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip() and not line.strip().startswith("#")}
    return {p.strip() for p in value.split(",") if p.strip()}


def _iso_to_epoch(value: str) -> float:
    return traces.parse_iso_timestamp(value)


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {key: str(value) if isinstance(value, Path) else value
            for key, value in sorted(vars(args).items()) if key not in skip}


def cmd_aggregate(args) -> int:
    period = pipe.Period(args.period, _iso_to_epoch(args.start), _iso_to_epoch(args.end),
                         args.year or int(args.start[:4]))
    config = pipe.PipelineConfig(
        period=period,
        local_prefixes=_parse_local_prefixes(args.local_prefixes),
        prefix_threshold=args.prefix_threshold,
        top_domains=args.top_domains,
        eps_seconds=args.eps_seconds,
        sum_durations=args.sum_durations)
    errors: list[traces.ParseError] | None = [] if args.skip_bad_records else None

    def flow_stream():
        for path in args.flows:
            yield from traces.read_flow_file(path, period.year, errors)

    result = pipe.run_pipeline(
        flow_stream(),
        traces.read_dhcp_file(args.dhcp, errors),
        traces.read_session_file(args.sessions, errors),
        traces.load_prefix_domain_map(args.prefix_domains),
        traces.load_port_building_map(args.port_buildings),
        config)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    conf = _config_dict(args)
    inputs = [*args.flows, args.dhcp, args.sessions, args.prefix_domains,
              args.port_buildings]
    write_matrix(result.global_matrix, out / "global.matrix", conf, inputs)
    buildings_dir = out / "buildings"
    buildings_dir.mkdir(exist_ok=True)
    for building, matrix in result.by_building.items():
        write_matrix(matrix, buildings_dir / f"{building}.matrix", conf, inputs)
    counters = dict(result.counters)
    counters["skipped_bad_records"] = len(errors) if errors is not None else 0
    write_json_artifact(out / "aggregate_summary.json", {
        "period": period.label,
        "users": len(result.global_matrix.row_ids),
        "domains": len(result.global_matrix.col_ids),
        "buildings": sorted(result.by_building),
        "top_domains": result.top_domains,
        "kept_prefixes": sorted(result.kept_prefixes),
        "counters": counters,
    }, conf, inputs)
    return 0


def cmd_cocluster(args) -> int:
    matrix = load_matrix(args.matrix)
    pruned, dropped_rows, dropped_cols = matrix.pruned()
    joint = scale_matrix(pruned)
    model = cocluster(joint, args.k, args.l, CoclusterConfig(
        tau_max=args.tau_max, tol=args.tol, restarts=args.restarts, seed=args.seed))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out, _config_dict(args), [args.matrix])
    if dropped_rows or dropped_cols:
        print(f"pruned {dropped_rows} empty rows, {dropped_cols} empty columns",
              file=sys.stderr)
    return 0


def _grid_lines(table: np.ndarray, row_label: str, row_names: list[str],
                col_names: list[str]) -> list[str]:
    lines = [row_label + "," + ",".join(col_names)]
    for name, row in zip(row_names, table):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    return lines


def _cluster_names(prefix: str, count: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(count)]


def cmd_assoc(args) -> int:
    matrix = load_matrix(args.matrix)
    model = load_model(args.model)
    joint = scale_matrix(matrix.pruned()[0])
    table = association_matrix(joint, model)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_text_artifact(args.out, _grid_lines(table, "cluster",
                                              _cluster_names("uc", model.k),
                                              _cluster_names("dc", model.l)),
                        _config_dict(args), [args.matrix, args.model])
    return 0


def _load_building_matrices(buildings_dir: Path) -> dict[str, "pipe.ContingencyMatrix"]:
    out = {}
    for path in sorted(buildings_dir.glob("*.matrix")):
        out[path.stem] = load_matrix(path)
    if not out:
        raise ValueError(f"no .matrix files under {buildings_dir}")
    return out


def _load_annotations(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    annotations = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        building, _, category = line.partition(",")
        annotations[building.strip()] = category.strip()
    return annotations


def cmd_locations(args) -> int:
    model = load_model(args.model)
    by_building = _load_building_matrices(args.buildings_dir)
    annotations = _load_annotations(args.annotations)
    descriptors, inactive = loc.build_descriptors(by_building, model)
    if len(descriptors) < 2:
        raise ValueError("fewer than 2 active buildings: nothing to compare")
    dis = loc.dissimilarity_matrix(descriptors)
    n_clusters = min(args.clusters, len(dis.buildings))
    clusters, merges = loc.hierarchical_clusters(dis, n_clusters, args.linkage)
    averages = loc.average_dissimilarity(dis)
    graph = loc.threshold_graph(dis, args.theta)
    cliques = loc.maximal_cliques(graph, args.min_clique_size)
    histogram = loc.dissimilarity_histogram(dis)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    conf = _config_dict(args)
    inputs = [args.model]

    desc_dir = out / "descriptors"
    desc_dir.mkdir(exist_ok=True)
    for d in descriptors:
        write_text_artifact(desc_dir / f"{d.building}.txt",
                            _grid_lines(d.table, "cluster",
                                        _cluster_names("uc", model.k),
                                        _cluster_names("dc", model.l)), conf, inputs)

    write_text_artifact(out / "dissimilarity.txt",
                        _grid_lines(dis.values, "building", dis.buildings,
                                    dis.buildings), conf, inputs)

    size = len(dis.buildings)
    names = list(dis.buildings) + [f"n{size + i}" for i in range(len(merges))]
    write_text_artifact(out / "dendrogram.txt",
                        [f"{names[m.left]},{names[m.right]},{m.height!r}"
                         for m in merges], conf, inputs)

    def label(building: str) -> str:
        category = annotations.get(building)
        return f"{building}:{category}" if category else building

    write_text_artifact(out / "location_clusters.txt",
                        [";".join(label(b) for b in cluster) for cluster in clusters],
                        conf, inputs)
    write_text_artifact(out / "cliques.txt",
                        [";".join(label(b) for b in clique) for clique in cliques],
                        conf, inputs)
    write_text_artifact(out / "isolated_nodes.txt",
                        [label(b) for b in graph.isolated_nodes()], conf, inputs)
    write_text_artifact(out / "histogram.txt",
                        [f"{lo},{count}" for lo, count in histogram], conf, inputs)
    write_text_artifact(out / "average_dissimilarity.txt",
                        [f"{b},{v!r}" for b, v in averages.items()], conf, inputs)
    write_json_artifact(out / "locations_summary.json", {
        "buildings_active": dis.buildings,
        "buildings_inactive": inactive,
        "theta": graph.theta,
        "edge_count": len(graph.edges),
        "edge_density": graph.edge_density,
        "clique_count": len(cliques),
        "linkage": args.linkage,
        "clusters": clusters,
    }, conf, inputs)
    return 0


def cmd_stability(args) -> int:
    model = load_model(args.model)
    periods: dict[str, stab.PeriodMatrices] = {}
    for spec in args.period:
        label, _, directory = spec.partition("=")
        if not directory:
            raise UsageError(f"--period expects label=dir, got {spec!r}")
        directory = Path(directory)
        periods[label] = stab.PeriodMatrices(
            load_matrix(directory / "global.matrix"),
            _load_building_matrices(directory / "buildings"))
    report = stab.stability_report(args.reference, periods, model)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    conf = _config_dict(args)
    write_json_artifact(out / "stability.json", report.to_json(), conf, [args.model])
    write_text_artifact(out / "stability_global.txt",
                        [f"{a}:{b},{v:.2f}" for (a, b), v
                         in sorted(report.global_scores.items())], conf, [args.model])
    write_text_artifact(out / "stability_location.txt",
                        [f"{a}:{b},{v:.2f}" for (a, b), v
                         in sorted(report.location_scores.items())], conf, [args.model])
    write_text_artifact(out / "coverage.txt",
                        [f"{label},{c.users_present}/{c.users_total} users,"
                         f"{c.domains_present}/{c.domains_total} domains,"
                         f"dropped_mass={c.dropped_mass:.6f}"
                         for label, c in sorted(report.coverage.items())],
                        conf, [args.model])
    return 0


def cmd_synth(args) -> int:
    spec = synth.PlantedSpec.from_json(load_json_artifact(args.spec))
    drift = spec.drift if args.drift is None else args.drift
    plans = synth.monthly_periods(args.periods, _iso_to_epoch(args.start),
                                  days=args.days, drift_last=drift,
                                  year=int(args.start[:4]))
    synth.gen_synthetic_traces(spec, args.out_dir, plans,
                               flows_per_period=args.flows_per_period,
                               s_target=args.s_target)
    return 0


def _find_artifact(run: Path, name: str) -> Path | None:
    if (run / name).exists():
        return run / name
    matches = sorted(run.rglob(name))
    return matches[0] if matches else None


def cmd_report(args) -> int:
    run = args.run_dir
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    conf = _config_dict(args)
    summary: list[str] = []

    model_path = _find_artifact(run, "model.json")
    if model_path is not None:
        model = load_model(model_path)
        ln2 = math.log(2)
        write_text_artifact(out / "loss_history.txt",
                            [f"{i},{v!r},{v / ln2!r}"
                             for i, v in enumerate(model.loss_history)],
                            conf, [model_path])
        row_sizes = np.bincount(list(model.row_assign.values()), minlength=model.k)
        col_sizes = np.bincount(list(model.col_assign.values()), minlength=model.l)
        write_text_artifact(out / "cluster_sizes.txt",
                            [f"uc{i},{int(n)}" for i, n in enumerate(row_sizes)]
                            + [f"dc{j},{int(n)}" for j, n in enumerate(col_sizes)],
                            conf, [model_path])
        summary += [
            f"model: k={model.k} l={model.l} tau={model.tau} seed={model.seed}",
            f"final loss: {model.final_loss!r} nats"
            f" ({model.final_loss / ln2!r} bits)",
        ]

    loc_summary = _find_artifact(run, "locations_summary.json")
    if loc_summary is not None:
        obj = load_json_artifact(loc_summary)
        summary += [
            f"active buildings: {len(obj['buildings_active'])}"
            f" (+{len(obj['buildings_inactive'])} inactive)",
            f"threshold graph: theta={obj['theta']} edges={obj['edge_count']}"
            f" density={obj['edge_density']:.4f}",
            f"cliques (reported): {obj['clique_count']}",
        ]

    stability_path = _find_artifact(run, "stability.json")
    if stability_path is not None:
        obj = load_json_artifact(stability_path)
        for entry in obj["global_scores"]:
            summary.append(f"global stability {entry['a']}:{entry['b']}"
                           f" = {entry['percent']:.2f}%")
        for entry in obj["location_scores"]:
            summary.append(f"location stability {entry['a']}:{entry['b']}"
                           f" = {entry['percent']:.2f}%")

    if not summary:
        raise ValueError(f"no known artifacts found under {run}")
    write_text_artifact(out / "summary.txt", summary, conf)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="traceclust", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="integrate traces into matrices")
    p.add_argument("--flows", type=Path, action="append", required=True)
    p.add_argument("--dhcp", type=Path, required=True)
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--prefix-domains", type=Path, required=True)
    p.add_argument("--port-buildings", type=Path, required=True)
    p.add_argument("--local-prefixes", required=True,
                   help="file of /24 prefixes, or a comma-separated list")
    p.add_argument("--period", required=True, help="period label")
    p.add_argument("--start", required=True, help="period start (ISO)")
    p.add_argument("--end", required=True, help="period end (ISO, exclusive)")
    p.add_argument("--year", type=int, default=None,
                   help="flow timestamp year (default: from --start)")
    p.add_argument("--prefix-threshold", type=int, default=100_000)
    p.add_argument("--top-domains", type=int, default=100)
    p.add_argument("--eps-seconds", type=float, default=1.0)
    p.add_argument("--sum-durations", action="store_true")
    p.add_argument("--skip-bad-records", action="store_true")
    _add_out_dir(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("cocluster", help="fit the co-clustering model")
    p.add_argument("--matrix", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--l", type=int, default=10)
    p.add_argument("--tau-max", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_cocluster)

    p = sub.add_parser("assoc", help="association-level matrix for a period")
    p.add_argument("--matrix", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_assoc)

    p = sub.add_parser("locations", help="location context clustering")
    p.add_argument("--buildings-dir", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--linkage", choices=loc.LINKAGES, default="average")
    p.add_argument("--theta", type=float, default=0.06)
    p.add_argument("--min-clique-size", type=int, default=3)
    p.add_argument("--annotations", type=Path, default=None,
                   help="optional building,category labels for reports")
    _add_out_dir(p)
    p.set_defaults(func=cmd_locations)

    p = sub.add_parser("stability", help="cross-period stability scores")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--period", action="append", required=True,
                   help="label=aggregate-out-dir, repeatable")
    _add_out_dir(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("synth", help="generate planted synthetic traces")
    p.add_argument("--spec", type=Path, required=True, help="PlantedSpec JSON file")
    p.add_argument("--periods", type=int, default=3)
    p.add_argument("--flows-per-period", type=int, default=10_000)
    p.add_argument("--start", default="2008-02-01")
    p.add_argument("--days", type=float, default=28.0)
    p.add_argument("--drift", type=float, default=None,
                   help="drift of the final period (default: from the spec)")
    p.add_argument("--s-target", type=float, default=3.0)
    _add_out_dir(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="render plot-ready summaries of a run")
    p.add_argument("--run-dir", type=Path, required=True)
    _add_out_dir(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        print("run with --help for usage", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as err:
        print(err, file=sys.stderr)
        return 1
    except (traces.ParseError, ValueError, KeyError, OSError,
            stab.EmptyOverlapError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
