import json
import math

import numpy as np
import pytest

from nswkit import SPEC_VERSION
from nswkit.cli import main
from nswkit.core import Additive, Agent, Instance, random_instance, save_instance
from nswkit.gapgen import gen_square_instance


@pytest.fixture
def square5(tmp_path):
    path = tmp_path / "square.json"
    save_instance(gen_square_instance(5.0), path)
    return str(path)


def _run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None), out


def test_solve_single_agent_ratio_one(tmp_path):
    path = tmp_path / "one.json"
    save_instance(Instance(3, (Agent(1.0, Additive((1, 2, 3))),)), path)
    code, rep, _ = _run(["solve", "--instance", str(path), "--trials", "50"], tmp_path)
    assert code == 0
    assert rep["ratio"] == 1.0
    assert rep["spec_version"] == SPEC_VERSION


def test_solve_square_within_guarantee(square5, tmp_path):
    code, rep, _ = _run(["solve", "--instance", square5, "--trials", "10000", "--seed", "3"], tmp_path)
    assert code == 0
    assert rep["ratio"] <= 3.56 + 5 * rep["ratio_stderr"]
    assert len(rep["agents"]) == 4 and rep["trials"] == 10000


def test_solve_marginals(tmp_path):
    path = tmp_path / "r.json"
    save_instance(random_instance(3, 8, np.random.default_rng(4)), path)
    code, rep, _ = _run(["solve", "--instance", str(path), "--trials", "20000"], tmp_path)
    assert code == 0 and rep["max_marginal_z"] <= 4


def test_solve_column_generation_path(square5, tmp_path):
    code, rep, _ = _run(["solve", "--instance", square5, "--trials", "200", "--m-max", "2"], tmp_path)
    assert code == 0 and rep["method"] == "column_generation"


def test_reports_are_byte_identical(square5, tmp_path):
    _, _, a = _run(["solve", "--instance", square5, "--trials", "3000", "--seed", "9"], tmp_path, "a.json")
    _, _, b = _run(["solve", "--instance", square5, "--trials", "3000", "--seed", "9", "--threads", "3"], tmp_path,
                   "b.json")
    assert a.read_bytes() == b.read_bytes()
    _, _, c = _run(["solve", "--instance", square5, "--trials", "3000", "--seed", "10"], tmp_path, "c.json")
    assert a.read_bytes() != c.read_bytes()


def test_exact(square5, tmp_path):
    code, rep, _ = _run(["exact", "--instance", square5], tmp_path)
    assert code == 0
    assert rep["log_nsw"] == pytest.approx(math.log(60) / 4, abs=1e-9)


def test_gap_square(tmp_path):
    code, rep, _ = _run(["gap", "square", "--t", "1e6"], tmp_path)
    assert code == 0
    assert rep["reports"][0]["ratio"] == pytest.approx(1.18920, abs=1e-4)


def test_gap_additive_and_submodular(tmp_path):
    code, rep, _ = _run(["gap", "additive", "--h", "1000", "--k", "632"], tmp_path)
    assert code == 0 and rep["reports"][0]["ratio"] >= 1.4445
    code, rep, _ = _run(["gap", "submodular", "--k", "10"], tmp_path, "s.json")
    assert code == 0 and rep["reports"][0]["params"]["lambda"] == 6


def test_verify_certified_and_not(tmp_path):
    args = ["verify", "mp5", "--mu-lo", "10", "--mu-hi", "20", "--k-lo", "5", "--k-hi", "10"]
    code, rep, _ = _run(args, tmp_path)
    assert code == 0 and rep["certified"]
    code, rep, _ = _run(["verify", "mp3", "--mu-lo", "1.2", "--mu-hi", "1.22", "--k-lo", "4", "--k-hi", "4.2",
                         "--alpha-lo", "0.82", "--alpha-hi", "0.83", "--target", "3.0", "--max-depth", "2"],
                        tmp_path, "bad.json")
    assert code == 1 and not rep["certified"]


def test_check_defaults_pass(tmp_path):
    code, rep, _ = _run(["check", "--seed", "1"], tmp_path)
    assert code == 0 and rep["passed"]
    assert {s["name"] for s in rep["suites"]} == {"proxy_properties", "extension_sandwich", "pipage",
                                                 "negative_correlation", "rounding"}


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["solve"],
    ["solve", "--instance", "/nonexistent/file.json"],
    ["solve", "--trials", "0", "--instance", "x"],
    ["gap", "triangle"],
    ["verify", "mp3", "--mu-lo", "1"],
    ["verify", "mp3", "--mu-lo", "3", "--mu-hi", "1", "--k-lo", "1", "--k-hi", "2"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_invalid_instance_is_usage_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"num_items": 1, "agents": [
        {"weight": 0.5, "valuation": {"type": "additive", "values": [1]}},
        {"weight": 0.6, "valuation": {"type": "additive", "values": [1]}}]}))
    assert main(["solve", "--instance", str(path)]) == 2
    path.write_text("{not json")
    assert main(["exact", "--instance", str(path)]) == 2
