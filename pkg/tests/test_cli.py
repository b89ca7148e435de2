import pytest

from nesta import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_sizing_pairs(capsys):
    code, out, _ = run(capsys, "sizing", "--reg", "36", "--channels", "32", "--window", "9")
    assert code == 0
    assert out.splitlines()[1:] == ["16,11", "15,12", "14,13", "13,14", "12,15", "11,16"]


def test_sizing_admissible_and_empty(capsys):
    _, out, _ = run(capsys, "sizing", "--reg", "36", "--channels", "1", "--window", "9",
                    "--weight-bits", "16", "--data-bits", "16")
    assert "ok=True" in out
    _, out, _ = run(capsys, "sizing", "--reg", "8", "--channels", "1024", "--window", "121")
    assert out == "w_weight,w_data\n"


def test_run_layer_batches(capsys):
    code, out, _ = run(capsys, "run-layer", "--kernel", "11", "--channels", "10", "--pe", "nesta")
    assert code == 0
    row = out.splitlines()[1].split(",")
    assert row[1:4] == ["nesta", "135", "136"]
    _, out, _ = run(capsys, "run-layer", "--kernel", "1", "--channels", "9", "--pe", "nesta")
    assert out.splitlines()[1].split(",")[2] == "1"


def test_run_layer_crossover(capsys):
    # 3x3x8 is exactly 8 batches, the configured crossover against the fastest MAC9
    _, out, _ = run(capsys, "run-layer", "--kernel", "3", "--channels", "8", "--pe", "nesta,mac9-brx4-hwa-ks")
    t = {r.split(",")[1]: float(r.split(",")[4]) for r in out.splitlines()[1:]}
    assert t["nesta"] < t["mac9-brx4-hwa-ks"]
    _, out, _ = run(capsys, "run-layer", "--kernel", "3", "--channels", "7", "--pe", "nesta,mac9-brx4-hwa-ks")
    t = {r.split(",")[1]: float(r.split(",")[4]) for r in out.splitlines()[1:]}
    assert t["nesta"] > t["mac9-brx4-hwa-ks"]


def test_analyze_net_rows(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze-net", "--net", "alexnet", "--pe", "nesta,mac-brx4-bk")
    assert code == 0 and len(out.splitlines()) == 1 + 8 * 2
    _, out, _ = run(capsys, "analyze-net", "--net", "vgg19", "--pe", "nesta")
    assert len(out.splitlines()) == 1 + 19
    empty = tmp_path / "empty.yaml"
    empty.write_text("name: none\nlayers: []\n")
    _, out, _ = run(capsys, "analyze-net", "--net", str(empty))
    assert out == "layer,pe_type,batches,cycles,time_ns,energy_fj,ifmap_fetches,weight_fetches,psum_writes\n"


def test_bad_inputs_exit_two(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: x\nlayers:\n  - {kind: conv, channels: 3, filterz: 2}\n")
    code, _, err = run(capsys, "analyze-net", "--net", str(bad))
    assert code == 2 and ":3:" in err
    assert run(capsys, "verify", "--trials", "0")[0] == 2
    assert run(capsys, "run-layer", "--kernel", "3", "--channels", "1", "--pe", "nope")[0] == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["verify", "--width", "12"])
    assert e.value.code == 2


def test_verify_pass_and_fault(capsys):
    code, out, _ = run(capsys, "verify", "--trials", "30", "--seed", "5")
    assert code == 0 and "PASS" in out
    code, out, _ = run(capsys, "verify", "--trials", "30", "--seed", "5", "--inject-fault", "4")
    assert code == 1
    assert "counterexample: seed=5 trial=4 after batch 0" in out
    code, out, _ = run(capsys, "verify", "--seed", "5", "--trial", "4", "--inject-fault", "4")
    assert code == 1 and "trial=4" in out


def test_out_file(tmp_path, capsys):
    dest = tmp_path / "x.csv"
    assert cli.main(["crossover", "--out", str(dest)]) == 0
    assert dest.read_text().startswith("kernel,competitor,min_batches,min_channels\n")
