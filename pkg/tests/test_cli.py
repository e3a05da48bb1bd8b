import json
import subprocess
import sys

import pytest

from spandedup.cli import main
from spandedup.pcapio import read_capture, write_capture
from spandedup.sim import read_labels


@pytest.fixture(scope="module")
def trace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    pcap = d / "in.pcap"
    assert main(["synth", "-o", str(pcap), "--seed", "3", "--duration", "0.2s", "--type", "routing"]) == 0
    return pcap


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_synth_writes_labels(trace):
    labels = read_labels(f"{trace}.labels.jsonl")
    assert labels and all(lb.dup_type.value == "routing" for lb in labels)


def test_dedup_remove(trace, tmp_path, capsys):
    out = tmp_path / "out.pcap"
    code, stdout, _ = run(capsys, "dedup", trace, "-o", out)
    assert code == 0
    report = json.loads(stdout)
    n_in = report["input"]["packets"]
    n_labels = len(read_labels(f"{trace}.labels.jsonl"))
    assert report["duplicates"]["total"] == n_labels
    assert report["duplicates"]["by_type"]["routing"]["count"] == n_labels
    assert report["output"]["packets_written"] == n_in - n_labels
    assert len(list(read_capture(out))) == n_in - n_labels
    assert list(report) == ["tool", "version", "generated_at", "input", "config", "duplicates", "output",
                            "distance", "comparisons"]


def test_dedup_keep_none(trace, tmp_path, capsys):
    out = tmp_path / "none.pcap"
    _, stdout, _ = run(capsys, "dedup", trace, "-o", out, "--keep", "none")
    report = json.loads(stdout)
    dups = report["duplicates"]["total"]
    assert report["output"]["packets_written"] == report["input"]["packets"] - 2 * dups


def test_dedup_annotate_and_report(trace, tmp_path, capsys):
    ann = tmp_path / "v.jsonl"
    rep = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "dedup", trace, "--mode", "annotate", "-o", ann, "--report", rep)
    assert code == 0 and stdout == ""
    lines = [json.loads(x) for x in ann.read_text().splitlines()]
    assert lines and set(lines[0]) == {"packet_index", "original_index", "type", "packet_distance",
                                        "time_delta_ns", "low_confidence"}
    assert json.loads(rep.read_text())["duplicates"]["total"] == len(lines)


def test_dedup_restricted_types_finds_nothing(trace, capsys):
    _, stdout, _ = run(capsys, "dedup", trace, "--mode", "report", "--types", "switching")
    assert json.loads(stdout)["duplicates"]["total"] == 0


def test_dedup_window_from_link_flags(trace, capsys):
    _, stdout, _ = run(capsys, "dedup", trace, "--mode", "report", "--queue-len", "40", "--max-frame", "1538",
                       "--min-capacity", "100Mbps")
    assert json.loads(stdout)["config"]["window"] == {"kind": "time", "seconds": 0.0147648}


def test_usage_errors(trace, capsys):
    code, _, err = run(capsys, "dedup", trace)
    assert code == 2 and "--output" in err
    code, _, err = run(capsys, "dedup", trace, "--mode", "report", "--queue-len", "40")
    assert code == 2
    code, _, err = run(capsys, "dedup", trace, "--mode", "report", "--types", "bridge")
    assert code == 2 and "unknown duplicate type" in err
    code, _, _ = run(capsys, "dedup", "/nonexistent.pcap", "--mode", "report")
    assert code == 1
    with pytest.raises(SystemExit):
        main(["dedup", str(trace), "--window-time", "1ms", "--window-packets", "3"])


def test_bad_capture_exit_code(tmp_path, capsys):
    p = tmp_path / "x.pcapng"
    p.write_bytes(bytes.fromhex("0a0d0d0a") + bytes(24))
    code, _, err = run(capsys, "dedup", p, "--mode", "report")
    assert code == 2 and "pcapng" in err


def test_empty_capture_report(tmp_path, capsys):
    p = tmp_path / "empty.pcap"
    write_capture(p, [])
    _, stdout, _ = run(capsys, "dedup", p, "--mode", "report")
    report = json.loads(stdout)
    assert report["duplicates"]["total"] == 0 and report["distance"] is None


def test_stats_tsv_and_json(trace, capsys):
    code, stdout, _ = run(capsys, "stats", trace)
    assert code == 0
    for section in ("# survival", "# packet_distance_histogram", "# time_delta_histogram", "# types",
                    "# distance_summary"):
        assert section in stdout
    _, stdout, _ = run(capsys, "stats", trace, "--json")
    doc = json.loads(stdout)
    assert doc["survival"][0] <= 1.0
    assert doc["types"]["routing"] == doc["distance"]["count"]


def test_dimension(capsys):
    code, stdout, _ = run(capsys, "dimension", "--queue-len", "40", "--max-frame", "1538", "--min-capacity",
                          "100Mbps", "--rho", "0.916", "--interfering-pps", "125000")
    assert code == 0
    assert "14.7648 ms" in stdout and "4.9216 ms" in stdout and "123.04 us" in stdout
    _, stdout, _ = run(capsys, "dimension", "--queue-len", "40", "--max-frame", "1538", "--min-capacity",
                       "100Mbps", "--rho", "0.916", "--interfering-pps", "125000", "--json")
    doc = json.loads(stdout)
    assert doc["mean_queue_len"] == pytest.approx(5.0, abs=0.01)
    assert doc["mean_system_time_s"] == pytest.approx(0.79e-3, abs=5e-6)
    assert doc["mean_packets_between"] == pytest.approx(125000 * doc["mean_system_time_s"])


def test_dimension_rejects_unstable(capsys):
    code, _, err = run(capsys, "dimension", "--queue-len", "40", "--max-frame", "1538", "--min-capacity",
                       "100Mbps", "--rho", "1.0")
    assert code == 2 and "UtilizationOutOfRange" in err


def test_synth_zero_duration(tmp_path, capsys):
    out = tmp_path / "z.pcap"
    code, stdout, _ = run(capsys, "synth", "-o", out, "--seed", "1", "--duration", "0")
    assert code == 0 and json.loads(stdout)["packets"] == 0
    assert list(read_capture(out)) == []


def test_console_script_module_runs():
    res = subprocess.run([sys.executable, "-m", "spandedup.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "dedup" in res.stdout
