"""CLI plumbing tests: exit codes, determinism, and stage composition."""

import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from traceclust.cli import main
from traceclust.cocluster import CoclusterConfig, association_matrix, cocluster
from traceclust.matrix import load_matrix, scale_matrix
from traceclust.pipeline import Period, PipelineConfig, run_pipeline
from traceclust.provenance import load_json_artifact
from traceclust.traces import (load_port_building_map, load_prefix_domain_map,
                               parse_iso_timestamp, read_dhcp_file, read_flow_file,
                               read_session_file)

SPEC = {"k": 2, "l": 2, "row_sizes": [3, 3], "col_sizes": [2, 2],
        "block_mass": [[0.4, 0.1], [0.1, 0.4]], "noise": 0.1,
        "n_buildings": 3, "n_building_groups": 2, "seed": 7}

PERIODS = [("m01", "2008-02-01T00:00:00", "2008-02-29T00:00:00"),
           ("m02", "2008-02-29T00:00:00", "2008-03-28T00:00:00")]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    spec_path = tmp / "spec.json"
    spec_path.write_text(json.dumps(SPEC))
    traces_dir = tmp / "traces"
    assert main(["synth", "--spec", str(spec_path), "--periods", "2",
                 "--flows-per-period", "400", "--out-dir", str(traces_dir)]) == 0
    agg = {}
    for label, start, end in PERIODS:
        out = tmp / f"agg_{label}"
        assert main(["aggregate", "--flows", str(traces_dir / f"flows_{label}.txt"),
                     "--dhcp", str(traces_dir / f"dhcp_{label}.txt"),
                     "--sessions", str(traces_dir / f"sessions_{label}.txt"),
                     "--prefix-domains", str(traces_dir / "prefix_domains.txt"),
                     "--port-buildings", str(traces_dir / "port_buildings.txt"),
                     "--local-prefixes", str(traces_dir / "local_prefixes.txt"),
                     "--period", label, "--start", start, "--end", end,
                     "--prefix-threshold", "1", "--top-domains", "4",
                     "--out-dir", str(out)]) == 0
        agg[label] = out
    model = tmp / "model.json"
    assert main(["cocluster", "--matrix", str(agg["m01"] / "global.matrix"),
                 "--k", "2", "--l", "2", "--seed", "3", "--out", str(model)]) == 0
    return {"tmp": tmp, "traces": traces_dir, "agg": agg, "model": model}


def test_exit_codes(tmp_path, workspace):
    assert main(["cocluster", "--nope"]) == 1           # unknown flag: usage error
    assert main(["definitely-not-a-command"]) == 1
    missing = tmp_path / "missing.matrix"
    assert main(["cocluster", "--matrix", str(missing), "--k", "2", "--l", "2",
                 "--out", str(tmp_path / "m.json")]) == 2  # data error
    bad = tmp_path / "bad.matrix"
    bad.write_text("u1,a\n")
    (tmp_path / "bad.header.json").write_text('{"period": "x", "rows": ["u1"], "cols": ["a"]}')
    assert main(["cocluster", "--matrix", str(bad), "--k", "1", "--l", "1",
                 "--out", str(tmp_path / "m.json")]) == 2


def test_cocluster_determinism(tmp_path, workspace):
    matrix = workspace["agg"]["m01"] / "global.matrix"
    out = tmp_path / "model.json"
    argv = ["cocluster", "--matrix", str(matrix), "--k", "2", "--l", "2",
            "--seed", "7", "--out", str(out)]
    assert main(argv) == 0
    first = out.read_bytes()
    out.unlink()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_provenance_headers(workspace):
    for path in [workspace["agg"]["m01"] / "global.matrix",
                 workspace["agg"]["m01"] / "aggregate_summary.json",
                 workspace["model"]]:
        first = path.read_text().splitlines()[0]
        assert first.startswith("# traceclust ")
        assert "# config sha256=" in path.read_text()


def test_composed_stages_equal_in_process(workspace, tmp_path):
    """The CLI chain must produce exactly what direct library calls produce."""
    traces_dir = workspace["traces"]
    label, start, end = PERIODS[0]
    period = Period(label, parse_iso_timestamp(start), parse_iso_timestamp(end), 2008)
    local = {line.strip() for line in
             (traces_dir / "local_prefixes.txt").read_text().splitlines()
             if line.strip() and not line.startswith("#")}
    result = run_pipeline(
        read_flow_file(traces_dir / f"flows_{label}.txt", 2008),
        read_dhcp_file(traces_dir / f"dhcp_{label}.txt"),
        read_session_file(traces_dir / f"sessions_{label}.txt"),
        load_prefix_domain_map(traces_dir / "prefix_domains.txt"),
        load_port_building_map(traces_dir / "port_buildings.txt"),
        PipelineConfig(period=period, local_prefixes=local, prefix_threshold=1,
                       top_domains=4))

    via_cli = load_matrix(workspace["agg"][label] / "global.matrix")
    assert via_cli.row_ids == result.global_matrix.row_ids
    assert via_cli.col_ids == result.global_matrix.col_ids
    assert np.array_equal(via_cli.toarray(), result.global_matrix.toarray())

    model_direct = cocluster(scale_matrix(result.global_matrix.pruned()[0]), 2, 2,
                             CoclusterConfig(seed=3))
    model_file = load_json_artifact(workspace["model"])
    assert model_file["row_assign"] == {u: c for u, c
                                        in model_direct.row_assign.items()}
    assert model_file["loss_history"] == pytest.approx(model_direct.loss_history)

    assoc_out = tmp_path / "association.txt"
    assert main(["assoc", "--matrix", str(workspace["agg"][label] / "global.matrix"),
                 "--model", str(workspace["model"]), "--out", str(assoc_out)]) == 0
    rows = [line.split(",") for line in assoc_out.read_text().splitlines()
            if line and not line.startswith("#")][1:]
    table = np.array([[float(v) for v in row[1:]] for row in rows])
    direct = association_matrix(scale_matrix(result.global_matrix.pruned()[0]),
                                model_direct)
    assert np.array_equal(table, direct)


def test_locations_and_stability_artifacts(workspace, tmp_path):
    loc_dir = tmp_path / "loc"
    assert main(["locations", "--buildings-dir",
                 str(workspace["agg"]["m01"] / "buildings"),
                 "--model", str(workspace["model"]), "--clusters", "2",
                 "--theta", "0.5", "--out-dir", str(loc_dir)]) == 0
    for name in ["dissimilarity.txt", "dendrogram.txt", "location_clusters.txt",
                 "cliques.txt", "isolated_nodes.txt", "histogram.txt",
                 "average_dissimilarity.txt", "locations_summary.json"]:
        assert (loc_dir / name).exists(), name
    hist = [line for line in (loc_dir / "histogram.txt").read_text().splitlines()
            if line and not line.startswith("#")]
    assert len(hist) == 50

    stab_dir = tmp_path / "stab"
    args = ["stability", "--model", str(workspace["model"]), "--reference", "m01",
            "--out-dir", str(stab_dir)]
    for label, out in workspace["agg"].items():
        args += ["--period", f"{label}={out}"]
    assert main(args) == 0
    scores = dict(line.split(",") for line in
                  (stab_dir / "stability_global.txt").read_text().splitlines()
                  if line and not line.startswith("#"))
    assert float(scores["m01:m02"]) >= 99.0

    import shutil
    shutil.copy(workspace["model"], tmp_path / "model.json")
    rpt = tmp_path / "rpt"
    assert main(["report", "--run-dir", str(tmp_path), "--out-dir", str(rpt)]) == 0
    summary = (rpt / "summary.txt").read_text()
    assert "global stability" in summary and "theta" in summary
    loss_lines = [line for line in (rpt / "loss_history.txt").read_text().splitlines()
                  if line and not line.startswith("#")]
    step, nats, bits = loss_lines[-1].split(",")
    assert float(nats) == pytest.approx(float(bits) * math.log(2), abs=1e-12)


def test_synth_determinism_via_cli(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(SPEC))

    def digest(directory: Path) -> dict:
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(directory.iterdir())}

    assert main(["synth", "--spec", str(spec_path), "--periods", "2",
                 "--flows-per-period", "200", "--out-dir", str(tmp_path / "t1")]) == 0
    assert main(["synth", "--spec", str(spec_path), "--periods", "2",
                 "--flows-per-period", "200", "--out-dir", str(tmp_path / "t2")]) == 0
    assert digest(tmp_path / "t1") == digest(tmp_path / "t2")


def test_out_dir_from_environment(tmp_path, monkeypatch):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(SPEC))
    monkeypatch.setenv("TRACECLUST_OUT_DIR", str(tmp_path / "env_out"))
    assert main(["synth", "--spec", str(spec_path), "--periods", "1",
                 "--flows-per-period", "50"]) == 0
    assert (tmp_path / "env_out" / "flows_m01.txt").exists()
