from __future__ import annotations

import pytest

from isomt.cli import main
from isomt.corpus import read_lines, write_lines

SRCS = ["the small cat sleeps now", "a big dog runs home fast"]
REFS = ["die kleine Katze schläft", "ein großer Hund rennt heim"]


@pytest.fixture
def files(tmp_path):
    write_lines(tmp_path / "src", SRCS)
    write_lines(tmp_path / "ref", REFS)
    write_lines(tmp_path / "hyp", ["die kleine Katze schläft", "ein Hund rennt"])
    return tmp_path


def test_score(files, capsys):
    assert main(["score", "--src", str(files / "src"), "--hyp", str(files / "hyp"),
                 "--ref", str(files / "ref")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("BLEU\t") and out[1].startswith("LC\t")


@pytest.mark.parametrize("argv", [["score", "--bogus"], ["frobnicate"], [],
                                  ["translate", "--model", "m"], ["augment", "shuffle"]])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_2(files, capsys):
    assert main(["score", "--src", str(files / "src"), "--hyp", str(files / "missing"),
                 "--ref", str(files / "ref")]) == 2
    write_lines(files / "one", ["x"])
    assert main(["score", "--src", str(files / "src"), "--hyp", str(files / "one"),
                 "--ref", str(files / "ref")]) == 2
    (files / "model").write_bytes(b"nope")
    assert main(["translate", "--model", str(files / "model"), "--src", str(files / "src"),
                 "--out", str(files / "o")]) == 2


def test_config_file_and_flag_precedence(files, capsys):
    cfg = files / "run.cfg"
    cfg.write_text(f"# comment\nsrc={files / 'src'}\nhyp={files / 'hyp'}\nref={files / 'ref'}\n"
                   "margin=0.001\n", encoding="utf-8")
    assert main(["score", "--config", str(cfg)]) == 0
    strict = capsys.readouterr().out
    assert main(["score", "--config", str(cfg), "--margin", "0.5"]) == 0
    loose = capsys.readouterr().out
    assert strict.splitlines()[1] == "LC\t0.00"
    assert loose.splitlines()[1] == "LC\t100.00"
    cfg.write_text("colour=blue\n", encoding="utf-8")
    assert main(["score", "--config", str(cfg)]) == 1


def test_spoken_and_concat(files):
    write_lines(files / "raw", ["I paid $5.", "Hello, World!"])
    assert main(["augment", "spoken", "--input", str(files / "raw"), "--out",
                 str(files / "spoken")]) == 0
    assert read_lines(files / "spoken") == ["i paid five dollars", "hello world"]
    (files / "docs").write_text("d\t0\nd\t1\n", encoding="utf-8")
    assert main(["augment", "concat", "--src", str(files / "src"), "--tgt", str(files / "ref"),
                 "--docs", str(files / "docs"), "--out-src", str(files / "cs"),
                 "--out-tgt", str(files / "ct")]) == 0
    assert read_lines(files / "cs") == [" ".join(SRCS)]


def test_rover_and_rescore(files):
    write_lines(files / "a", ["x" * 19, "y"])
    write_lines(files / "b", ["z", "w" * 20])
    assert main(["rover", "--src", str(files / "src"), "--systems", str(files / "a"),
                 str(files / "b"), "--quality", "1", "2", "--out", str(files / "r"),
                 "--choices-out", str(files / "c")]) == 0
    assert read_lines(files / "r") == ["x" * 19, "w" * 20]
    assert main(["rover", "--src", str(files / "src"), "--systems", str(files / "a"),
                 "--out", str(files / "r")]) == 1
    (files / "nb").write_text("0\t1\t-0.1\tshort\n0\t2\t-0.2\t" + "q" * 20 + "\n"
                              "1\t1\t-0.3\tone\n", encoding="utf-8")
    assert main(["rescore", "--src", str(files / "src"), "--nbest", str(files / "nb"),
                 "--out", str(files / "rs")]) == 0
    assert read_lines(files / "rs") == ["q" * 20, "one"]


def test_report_writes_table_data_and_figure(files, capsys):
    prefix = files / "rep"
    assert main(["report", "--src", str(files / "src"), "--ref", str(files / "ref"),
                 "--system", f"hyp={files / 'hyp'}", f"ref={files / 'ref'}",
                 "--out-prefix", str(prefix)]) == 0
    assert (files / "rep.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    data = (files / "rep.tsv").read_text(encoding="utf-8").splitlines()
    assert data[1] == "ref\t100.00\t" + data[1].split("\t")[2]
    assert "system" in capsys.readouterr().out
