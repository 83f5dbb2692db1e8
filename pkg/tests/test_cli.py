"""CLI: exit codes, fixed-format output, manifests, reproducibility."""

import hashlib
import json

import pytest

from procmat.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def test_validate_ocb_ok(capsys):
    code, out, _ = run(capsys, "validate", "--preset", "ocb")
    assert code == 0
    report = json.loads(out)
    assert report["psd"] and report["subspace"] and report["trace"]


def test_validate_z_rejected(capsys):
    code, out, _ = run(capsys, "validate", "--preset", "z")
    assert code == 1
    assert not json.loads(out)["subspace"]


def test_validate_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SystemExit) as exc:
        run(capsys, "validate", "--input", str(bad))
    assert exc.value.code == 2


def test_unknown_preset_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run(capsys, "validate", "--preset", "nope")
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# robustness commands
# ---------------------------------------------------------------------------


def test_rob_s_ocb(capsys):
    code, out, _ = run(capsys, "rob", "s", "--preset", "ocb")
    assert code == 0
    assert out.splitlines()[0] == "1.000000"


def test_rob_s_free_zero(capsys):
    code, out, _ = run(capsys, "rob", "s", "--preset", "free")
    assert code == 0
    assert out.splitlines()[0] == "0.000000"


def test_rob_c_ocb(capsys):
    code, out, _ = run(capsys, "rob", "c", "--preset", "ocb")
    assert code == 0
    assert abs(float(out.splitlines()[0]) - 0.1716) <= 5e-4


def test_rob_witness_out(tmp_path, capsys):
    path = tmp_path / "wit.json"
    code, out, _ = run(
        capsys, "rob", "s", "--preset", "ocb", "--witness-out", str(path)
    )
    assert code == 0
    from procmat.labeled import operator_load

    wit = operator_load(str(path))
    assert wit.dim == 16


def test_rob_proc_on_z(tmp_path, capsys):
    code, out, _ = run(
        capsys, "rob", "proc", "--preset", "z", "--out-dir", str(tmp_path)
    )
    assert code == 0
    assert abs(float(out.splitlines()[0]) - 3.0) <= 1e-4
    assert (tmp_path / "closest-process.json").exists()
    manifest = json.loads((tmp_path / "manifest-rob-proc.json").read_text())
    assert manifest["command"] == "rob-proc"
    assert manifest["tool_version"]


def test_rob_rejects_invalid_process(capsys):
    # Z is not a valid process, so the mixing robustnesses must refuse it
    code, _, err = run(capsys, "rob", "s", "--preset", "z")
    assert code == 1
    assert "invalid" in err


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def test_sample_reproducible_hashes(tmp_path, capsys):
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    for d in (d1, d2):
        code, _, _ = run(
            capsys, "sample", "--seed", "5", "--count", "2",
            "--out-dir", str(d)
        )
        assert code == 0
    for name in ("sample-5.json", "sample-6.json"):
        h1 = hashlib.sha256((d1 / name).read_bytes()).hexdigest()
        h2 = hashlib.sha256((d2 / name).read_bytes()).hexdigest()
        assert h1 == h2


def test_sample_bad_dims(capsys):
    code, _, err = run(capsys, "sample", "--dims", "2,x")
    assert code == 2


# ---------------------------------------------------------------------------
# seesaw & convert
# ---------------------------------------------------------------------------


def test_seesaw_from_ocb(tmp_path, capsys):
    code, out, _ = run(
        capsys, "seesaw", "--start", "ocb", "--rounds", "10",
        "--out-dir", str(tmp_path)
    )
    assert code == 0
    first = out.splitlines()[0]
    assert first.startswith("objective ")
    assert float(first.split()[1]) >= 1.171573 - 1e-4
    assert (tmp_path / "seesaw-process.json").exists()


@pytest.mark.slow
def test_convert_a2b_to_b2a_infeasible(capsys):
    code, out, _ = run(capsys, "convert", "--from", "a2b", "--to", "b2a",
                       "--class", "ns")
    assert code == 3
    assert "INFEASIBLE" in out
