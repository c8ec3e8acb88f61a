import json
import shutil
from itertools import combinations

import numpy as np
import pandas as pd
import pytest

from assignment import pipeline
from assignment.exceptions import PipelineError
from data_model.exceptions import DataModelError
from data_model.periodic import SYMBOLS
from landscapes.exceptions import LandscapeError
from run_manager.config import RunConfig, config_hash, parse_config
from run_manager.run_manager import RunManager, RunManagerError, file_sha256

SMALL_RUN = """
[data]
cutoff = 6

[layout]
kind = square
coarse_side = 2

[chain]
iterations = 12
burn_in = 6
stride = 2
log_every = 0
checkpoint_every = 4

[fine_tune]
iterations = 1

[run]
restarts = 2
seed = 3

[evaluation]
folds = 3
repeats = 1
n_trees = 10
min_leaf = 2
"""


def _compounds_csv(path):
    rng = np.random.default_rng(0)
    rows = [
        (f"{a}{m}{b}{n}", float(rng.normal()))
        for a, b in combinations(SYMBOLS[:6], 2)
        for m in (1, 2)
        for n in (1, 3)
    ]
    frame = pd.DataFrame(rows, columns=["formula", "target"])
    path.write_text("# unit: eV/atom\n" + frame.to_csv(index=False), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("runs") / "small"
    manager = RunManager(run_dir, parse_config(SMALL_RUN))
    results = manager.generate()
    return run_dir, results


@pytest.fixture
def run_copy(finished_run, tmp_path):
    run_dir, _ = finished_run
    copy = tmp_path / "copy"
    shutil.copytree(run_dir, copy)
    return copy


def test_generate_writes_run_directory(finished_run):
    run_dir, results = finished_run
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "complete"
    assert manifest["config_hash"] == config_hash(parse_config(SMALL_RUN))
    assert [entry["restart"] for entry in manifest["restarts"]] == [r.restart for r in results]
    likelihoods = [entry["log_likelihood"] for entry in manifest["restarts"]]
    assert likelihoods == sorted(likelihoods, reverse=True)
    assert "numpy" in manifest["versions"]
    for r in (0, 1):
        for name in (f"tables/table_{r:02d}.csv", f"tables/table_{r:02d}.json", f"tables/table_{r:02d}.svg",
                     f"traces/trace_{r:02d}.csv", f"checkpoints/restart_{r:02d}.json"):
            assert manifest["files"][name] == file_sha256(run_dir / name)
    entry = manifest["restarts"][0]
    assert set(entry["timings"]) == {"coarse_chain", "interpolation", "fine_tune"}
    assert set(entry["jitter"]) == {"C_g", "C_r", "C_h"}


def test_generate_is_reproducible(finished_run, tmp_path):
    run_dir, _ = finished_run
    RunManager(tmp_path / "again", parse_config(SMALL_RUN)).generate(workers=2)
    for name in ("table_00.csv", "table_01.csv", "table_00.svg", "table_01.svg"):
        assert file_sha256(tmp_path / "again" / "tables" / name) == file_sha256(run_dir / "tables" / name)


def test_missing_data_leaves_no_directory(tmp_path):
    config = parse_config(SMALL_RUN.replace("cutoff = 6", f"cutoff = 6\nelements = {tmp_path / 'nope.csv'}"))
    with pytest.raises(DataModelError):
        RunManager(tmp_path / "out", config).generate()
    assert not (tmp_path / "out").exists()


def test_generate_refuses_existing_run(run_copy):
    with pytest.raises(RunManagerError):
        RunManager(run_copy, parse_config(SMALL_RUN)).generate()


def test_bundled_elements_include_atomic_number_by_default(tmp_path):
    elements = RunManager(tmp_path / "x", RunConfig()).standardized_elements()
    assert (elements.n_elements, elements.n_features) == (54, 39)
    assert elements.feature_names[0] == "atomic_number"
    config = parse_config("[data]\natomic_number_feature = false\n")
    assert RunManager(tmp_path / "x", config).standardized_elements().n_features == 38
    assert not (tmp_path / "x").exists()


def test_corrupt_table_is_an_input_error(run_copy):
    (run_copy / "tables" / "table_00.json").write_text("{ no es json", encoding="utf-8")
    with pytest.raises(RunManagerError, match="table_00"):
        RunManager.open(run_copy).tables()


def test_missing_table_is_an_input_error(run_copy):
    (run_copy / "tables" / "table_01.json").unlink()
    with pytest.raises(RunManagerError):
        RunManager.open(run_copy).landscape("all", restart=1)


def test_resume_rebuilds_missing_table(run_copy, finished_run):
    run_dir, _ = finished_run
    for suffix in ("csv", "json", "svg"):
        (run_copy / "tables" / f"table_01.{suffix}").unlink()
    results = RunManager.open(run_copy).resume()
    assert [result.restart for result in results] == [1]
    assert file_sha256(run_copy / "tables" / "table_01.csv") == file_sha256(run_dir / "tables" / "table_01.csv")
    assert RunManager.open(run_copy).resume() == []


def test_partial_outputs_survive_failure(tmp_path, monkeypatch):
    original = pipeline._run_restart

    def flaky(job):
        if job.restart == 1:
            raise PipelineError("fallo simulado", stage="fine_tune", seed=job.seed)
        return original(job)

    monkeypatch.setattr(pipeline, "_run_restart", flaky)
    run_dir = tmp_path / "partial"
    with pytest.raises(PipelineError):
        RunManager(run_dir, parse_config(SMALL_RUN)).generate()
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "failed"
    assert manifest["failures"][0]["stage"] == "fine_tune"
    assert (run_dir / "tables" / "table_00.csv").exists()
    assert not (run_dir / "tables" / "table_01.csv").exists()


def test_open_rejects_plain_directory(tmp_path):
    with pytest.raises(RunManagerError):
        RunManager.open(tmp_path)


def test_evaluate_ranks_and_selects(run_copy, tmp_path):
    compounds = _compounds_csv(tmp_path / "compounds.csv")
    manager = RunManager.open(run_copy)
    report = manager.evaluate(compounds)
    names = [row["descriptor"] for row in report["ranking"]]
    assert sorted(names) == ["standard", "table_00", "table_01"]
    maes = [row["mae"] for row in report["ranking"]]
    assert maes == sorted(maes)
    assert report["selected"] in ("table_00", "table_01")
    assert report["unit"] == "eV/atom"
    for name in names:
        assert (run_copy / "evaluation" / f"errors_{name}.csv").exists()
    selected = report["selected"]
    header = (run_copy / "evaluation" / f"enrichment_{selected}_vs_standard.csv").read_text(encoding="utf-8")
    assert header.splitlines()[0] == "symbol,observed,expected,ratio"
    manifest = json.loads((run_copy / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["selected"]["table"] == selected
    assert "evaluation/report.json" in manifest["files"]


def test_evaluate_needs_compounds(run_copy):
    with pytest.raises(RunManagerError):
        RunManager.open(run_copy).evaluate()


def test_landscape_all_features(run_copy):
    manager = RunManager.open(run_copy)
    written = manager.landscape("all")
    table = manager.tables()[0]
    assert len(written) == 2 * len(table.feature_names)
    frame = pd.read_csv(written[0])
    assert list(frame.columns) == ["node_index", "u1", "u2", "value"]
    assert len(frame) == 9


def test_landscape_single_feature_and_unknown(run_copy):
    manager = RunManager.open(run_copy)
    name = manager.tables()[0].feature_names[0]
    written = manager.landscape(name, restart=1)
    assert [path.suffix for path in written] == [".csv", ".svg"]
    assert written[0].parent.name == "table_01"
    with pytest.raises(LandscapeError, match="Válidas"):
        manager.landscape("unknown_feature")
