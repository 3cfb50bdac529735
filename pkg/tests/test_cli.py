import json

from tangled_phi4.cli import main


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def test_moments_table(tmp_path):
    code, text = run(tmp_path, "moments", "--max-order", "4")
    assert code == 0
    data = json.loads(text)
    assert data["u"]["0"] == 1.0 and set(data["u"]) == {"0", "2", "4"}
    assert text == run(tmp_path, "moments", "--max-order", "4", name="again")[1]


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"g": 0}')
    assert main(["moments", "--config", str(cfg)]) == 2
    assert "'g'" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["verify", "--suite", "nope", "--seed", "1"]) == 2
    assert main(["verify", "--suite", "inequalities"]) == 2
    assert main(["scan", "--observable", "green"]) == 2


def test_capacity_exit_3(tmp_path):
    cfg = tmp_path / "big.json"
    # four blocks exceed the exact block-sum engine
    edges = [[0, 1, 1], [1, 2, 1], [2, 3, 1]]
    cfg.write_text(json.dumps({"g": 1, "beta": 0.3, "vertices": 4, "edges": edges, "A": [1, 0, 0, 1]}))
    assert main(["verify", "--config", str(cfg), "--suite", "switching", "--seed", "1", "--budget", "tiny",
                 "--out", str(tmp_path / "m.json")]) == 3


def test_verify_inequalities_exit_0(tmp_path):
    code, text = run(tmp_path, "verify", "--suite", "inequalities", "--seed", "5", "--budget", "tiny")
    assert code == 0
    m = json.loads(text)
    assert m["counts"]["fail"] == 0 and m["suite"] == "inequalities"
    assert "runtime" not in text


def test_verify_switching_tiny_counts_inconclusive(tmp_path):
    code, text = run(tmp_path, "verify", "--suite", "switching", "--seed", "5", "--budget", "tiny")
    m = json.loads(text)
    assert code == 0 and m["counts"]["inconclusive"] >= 1


def test_verify_byte_identical(tmp_path):
    a = run(tmp_path, "verify", "--suite", "tangling", "--seed", "11", "--budget", "tiny", name="a")[1]
    b = run(tmp_path, "verify", "--suite", "tangling", "--seed", "11", "--budget", "tiny", name="b")[1]
    assert a == b


def test_timing_flag(tmp_path):
    code, text = run(tmp_path, "verify", "--suite", "inequalities", "--seed", "5", "--budget", "tiny", "--timing")
    assert code == 0 and "wall_clock" in json.loads(text)


def test_scan_green(tmp_path):
    code, text = run(tmp_path, "scan", "--observable", "green", "--d", "3", "--L", "32", "--seed", "0")
    assert code == 0
    lines = text.split("\n")
    assert lines[0] == "d,L,G00" and lines[1].startswith("3,32,") and "\r" not in text


def test_scan_magnetisation_sorted_and_deterministic(tmp_path):
    args = ("scan", "--observable", "magnetisation", "--grid", "0.3,0.1,0.2", "--L", "4", "--sweeps", "1000",
            "--seed", "2")
    code, text = run(tmp_path, *args)
    assert code == 0
    betas = [float(r.split(",")[0]) for r in text.strip().split("\n")[1:]]
    assert betas == sorted(betas)
    assert text == run(tmp_path, *args, name="again")[1]


def test_scan_empty_grid(tmp_path):
    code, text = run(tmp_path, "scan", "--observable", "magnetisation", "--grid", "", "--seed", "1")
    assert code == 0 and text.count("\n") == 1 and text.startswith("beta,")


def test_scan_cesaro(tmp_path):
    code, text = run(tmp_path, "scan", "--observable", "cesaro", "--grid", "0,1,2", "--seed", "1")
    vals = [float(r.split(",")[2]) for r in text.strip().split("\n")[1:]]
    assert code == 0 and vals[0] > vals[1] > vals[2]
    assert main(["scan", "--observable", "cesaro", "--d", "1", "--grid", "0", "--seed", "1"]) == 2
