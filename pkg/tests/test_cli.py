import json

import numpy as np
import pytest

from bosonic_clt import cli
from bosonic_clt.analysis import dumps
from bosonic_clt.channels import choi_matrix, random_cptp_channel


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gaussify_identity(capsys):
    code, out, _ = run(["gaussify", "--spec", '{"type":"identity","cutoff":16}'], capsys)
    assert code == 0
    doc = json.loads(out)
    assert np.allclose(doc["X"], np.eye(2), atol=1e-10)
    assert np.allclose(doc["Y"], 0, atol=1e-10)
    assert doc["certificate"]["physical"] is True


def test_gaussify_replacement(capsys):
    code, out, _ = run(["gaussify", "--spec", '{"type":"replacement","state":"fock:1","cutoff":20}'], capsys)
    assert code == 0
    doc = json.loads(out)
    assert np.allclose(doc["X"], 0, atol=1e-8)
    assert np.allclose(doc["Y"], 3 * np.eye(2), atol=1e-8)


def test_gaussify_dephasing(capsys):
    from bosonic_clt.channels import von_mises

    code, out, _ = run(["gaussify", "--spec", '{"type":"dephasing","von_mises":{"kappa":2},"cutoff":20}'], capsys)
    assert code == 0
    doc = json.loads(out)
    phi2 = abs(von_mises(2.0).phase_factor(1)) ** 2
    assert abs(np.linalg.det(doc["X"])) == pytest.approx(phi2, abs=1e-7)
    assert np.allclose(doc["Y"], (1 - phi2) * np.eye(2), atol=1e-7)


def test_spec_file_and_out_dir(tmp_path, capsys):
    spec = tmp_path / "loss.json"
    spec.write_text('{"type":"pure_loss","lambda":0.6,"cutoff":12}')
    out = tmp_path / "reports"
    code, stdout, _ = run(["converge", "--spec", str(spec), "--kmax", "2", "--check-k", "1", "--alpha", "0.5",
                           "--threshold", "1e-5", "--out", str(out), "--format", "both"], capsys)
    assert code == 0
    assert stdout == ""
    doc = json.loads((out / "converge.json").read_text())
    assert all(r["trace_distance"] < 1e-6 for r in doc["reports"][0]["rows"])
    assert (out / "converge.csv").read_text().startswith("k,trace_distance,")


def test_choi_file_spec(tmp_path, capsys, rng):
    ch = random_cptp_channel(4, rank=1, rng=rng)
    J = choi_matrix(ch).matrix
    (tmp_path / "choi.json").write_text(json.dumps({"real": J.real.tolist(), "imag": J.imag.tolist()}))
    (tmp_path / "spec.json").write_text('{"type":"choi_file","path":"choi.json","cutoff":4}')
    code, out, _ = run(["gaussify", "--spec", str(tmp_path / "spec.json")], capsys)
    assert code == 0
    assert json.loads(out)["certificate"]["physical"] is True


def test_converge_pure_loss_exit_zero(capsys):
    code, out, err = run(["converge", "--spec", '{"type":"pure_loss","lambda":0.6,"cutoff":20}', "--kmax", "3",
                          "--threshold", "1e-5"], capsys)
    assert code == 0
    assert all(r["trace_distance"] < 1e-6 for r in json.loads(out)["reports"][0]["rows"])
    assert "final trace distance" in err


def test_converge_threshold_miss_exit_four(capsys):
    code, _, _ = run(["converge", "--spec", '{"type":"dephasing","von_mises":{"kappa":2},"cutoff":12}',
                      "--kmax", "1", "--check-k", "0", "--threshold", "1e-4"], capsys)
    assert code == cli.EXIT_THRESHOLD


def test_converge_uncentered_exit_two(capsys):
    code, _, err = run(["converge", "--spec", '{"type":"additive_noise","points":[0.5],"cutoff":8}',
                        "--kmax", "1"], capsys)
    assert code == cli.EXIT_INVALID
    assert "channel not centered" in err


def test_csv_to_stdout(capsys):
    code, out, _ = run(["converge", "--spec", '{"type":"pure_loss","lambda":0.6,"cutoff":8}', "--kmax", "1",
                        "--check-k", "0", "--format", "csv"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "k,trace_distance,char_sup_dev,mean_dev,cov_dev,kraus_count,completeness_defect"
    assert len(out.splitlines()) == 3


def test_output_is_bitwise_deterministic(capsys):
    argv = ["converge", "--spec", '{"type":"dephasing","von_mises":{"kappa":2},"cutoff":10}', "--kmax", "2",
            "--check-k", "1", "--alpha", "0.5,0.3j", "--threshold", "1"]
    _, first, _ = run(argv, capsys)
    _, second, _ = run(argv, capsys)
    assert first == second
    assert len(json.loads(first)["reports"]) == 2


def test_capacity_commands(capsys):
    code, out, err = run(["capacity", "--spec", '{"type":"dephasing","uniform":true,"cutoff":8}'], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["dephasing_capacity"] == pytest.approx(0.0, abs=1e-9)
    assert doc["pure_loss_capacity"] == 0.0
    code, out, err = run(["capacity", "--spec", '{"type":"dephasing","von_mises":{"kappa":10},"cutoff":8}'], capsys)
    assert json.loads(out)["gap_sign"] == "gaussification_larger"
    assert "gaussification_larger" in err
    code, out, _ = run(["capacity", "--spec", '{"type":"pure_loss","lambda":0.75,"cutoff":8}'], capsys)
    assert json.loads(out)["pure_loss_capacity"] == pytest.approx(1.58496250072, abs=1e-10)


def test_capacity_refuses_dephasing_energy_samples(capsys):
    code, _, err = run(["capacity", "--spec", '{"type":"dephasing","von_mises":{"kappa":2},"cutoff":8}',
                        "--energy", "0.5"], capsys)
    assert code == cli.EXIT_INVALID
    assert "nonlinear channel" in err


def test_capacity_needs_known_spec(capsys):
    code, _, _ = run(["capacity", "--spec", '{"type":"identity","cutoff":6}'], capsys)
    assert code == cli.EXIT_INVALID


@pytest.mark.parametrize(
    "argv",
    [
        ["gaussify", "--spec", '{"type":"warp_drive"}'],
        ["gaussify", "--spec", '{"type":"pure_loss","lambda":0.5,"colour":"red"}'],
        ["gaussify", "--spec", '{"type":"pure_loss"}'],
        ["gaussify", "--spec", "/nonexistent/spec.json"],
        ["gaussify", "--spec", "{not json"],
        ["gaussify", "--spec", '{"type":"identity"}', "--cutoff", "1"],
        ["converge", "--spec", '{"type":"identity"}', "--kmax", "99"],
        ["converge", "--spec", '{"type":"identity"}', "--alpha", "one"],
        ["demo", "warp-drive"],
        ["frobnicate"],
    ],
)
def test_invalid_input_exit_two(argv, capsys):
    assert run(argv, capsys)[0] == cli.EXIT_INVALID


def test_unknown_run_config_keys():
    with pytest.raises(cli.InvalidInput, match="unknown run-config keys"):
        cli.RunConfig.from_dict({"command": "demo", "demo": "classical-clt", "colour": "red"})


def test_certificate_failure_exit_three(monkeypatch, capsys):
    monkeypatch.setattr(cli, "uncertainty_certificate", lambda params, tol: (-3.0, False))
    code, out, err = run(["gaussify", "--spec", '{"type":"identity","cutoff":6}'], capsys)
    assert code == cli.EXIT_CERTIFICATE
    assert json.loads(out)["certificate"]["physical"] is False
    assert "UNPHYSICAL" in err


def test_numerical_failure_exit_one(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise np.linalg.LinAlgError("eigh did not converge")

    monkeypatch.setattr(cli, "extract_xy", boom)
    code, _, err = run(["gaussify", "--spec", '{"type":"identity","cutoff":6}'], capsys)
    assert code == cli.EXIT_NUMERICAL
    assert "numerical failure" in err


def test_thread_env_var(monkeypatch, capsys):
    monkeypatch.setenv("BOSONIC_CLT_THREADS", "1")
    assert run(["gaussify", "--spec", '{"type":"identity","cutoff":6}'], capsys)[0] == 0
    monkeypatch.setenv("BOSONIC_CLT_THREADS", "many")
    assert run(["gaussify", "--spec", '{"type":"identity","cutoff":6}'], capsys)[0] == cli.EXIT_INVALID


def test_demo_classical_clt(capsys):
    code, out, _ = run(["demo", "classical-clt"], capsys)
    assert code == 0
    dev = [r["char_sup_dev"] for r in json.loads(out)["rows"]]
    assert all(b < a for a, b in zip(dev, dev[1:]))


def test_demo_cushen_hudson_short(capsys):
    code, out, _ = run(["demo", "cushen-hudson", "--cutoff", "12", "--kmax", "3"], capsys)
    assert code == 0
    dist = [r["trace_distance"] for r in json.loads(out)["rows"]]
    assert dist[3] < dist[1]


def test_demo_no_signalling(capsys):
    code, out, err = run(["demo", "no-signalling", "--cutoff", "12"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["additive_noise_defect"] < 1e-8
    assert doc["dephasing_defect"] > 1e-3
    assert "no-signalling defect" in err


def test_demo_kac_bernstein(capsys):
    code, out, _ = run(["demo", "kac-bernstein", "--cutoff", "10"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["pure_loss_mutual_information"] < 1e-6
    assert doc["dephasing_mutual_information"] > 1e-3


def test_dumps_matches_cli_precision():
    assert dumps({"x": 0.1}) == '{\n  "x": 0.10000000000000001\n}'


def test_separate_processes_agree():
    import subprocess
    import sys

    argv = [sys.executable, "-m", "bosonic_clt.cli", "gaussify", "--spec",
            '{"type":"dephasing","von_mises":{"kappa":2},"cutoff":10}']
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True).stdout
    assert a == b and a
