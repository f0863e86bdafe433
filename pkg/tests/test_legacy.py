import pytest

from infodemic.cli import main
from infodemic.data import NON_RUMOR, RUMOR, read_events
from infodemic.errors import ValidationError
from infodemic.legacy import ConversionReport, convert_legacy_corpus, convert_tree, parse_tree_line, read_label_file

TREE = """\
['ROOT', 'ROOT', '0.0']->['u1', '100', '0.0']
['u1', '100', '0.0']->['u2', '101', '1.5']
['u1', '100', '0.0']->['u3', '102', '2.0']
['u2', '101', '1.5']->['u4', '103', '1.0']
['u2', '101', '1.5']->['u3', '102', '2.0']
['u9', '900', '3.0']->['u5', '104', '4.0']
"""


def test_parse_tree_line():
    parent, child = parse_tree_line("['ROOT', 'ROOT', '0.0']->['72', '55', '0.0']")
    assert parent == ("ROOT", "ROOT", "0.0") and child == ("72", "55", "0.0")
    with pytest.raises(ValidationError):
        parse_tree_line("['a', 'b', '1']")
    with pytest.raises(ValidationError):
        parse_tree_line("['a', 'b']->['c', 'd']")


def test_convert_tree_by_hand():
    report = ConversionReport()
    ev = convert_tree("e1", RUMOR, TREE.splitlines(), "source text", report)
    by_id = {p.post_id: p for p in ev.posts}
    root = ev.source
    assert root.post_id == "u1:100:0.0" and root.text == "source text" and root.timestamp == 0.0
    # first parent wins for u3; the repeated child edge is counted
    assert by_id["u3:102:2.0"].parent_id == "u1:100:0.0"
    assert report.duplicate_edges == 1
    # u4 replied at minute 1.0 to a post made at minute 1.5: clamped to 90 s
    assert by_id["u4:103:1.0"].timestamp == 90.0
    assert report.clamped_times == 1
    # u9's post never appears as a child of anything reachable: it hangs off the source, with u5 below it
    assert by_id["u9:900:3.0"].parent_id == root.post_id
    assert by_id["u5:104:4.0"].parent_id == "u9:900:3.0"
    assert by_id["u5:104:4.0"].timestamp == 240.0
    assert report.reattached_posts == 1
    assert set(ev.users()) == {"u1", "u2", "u3", "u4", "u5", "u9"}
    assert [p.timestamp for p in ev.posts] == sorted(p.timestamp for p in ev.posts)


def test_detached_cycle_is_broken_once():
    lines = ["['ROOT', 'ROOT', '0.0']->['s', '1', '0.0']",
             "['a', '2', '1.0']->['b', '3', '2.0']",
             "['b', '3', '2.0']->['a', '2', '1.0']"]
    report = ConversionReport()
    ev = convert_tree("e", RUMOR, lines, report=report)
    by_id = {p.post_id: p for p in ev.posts}
    assert report.reattached_posts == 1
    assert by_id["a:2:1.0"].parent_id == "s:1:0.0"
    assert by_id["b:3:2.0"].parent_id == "a:2:1.0"


def test_tree_without_root_rejected():
    with pytest.raises(ValidationError):
        convert_tree("e", RUMOR, ["['a', '1', '0']->['b', '2', '1']"])


def test_label_mapping(tmp_path):
    p = tmp_path / "label.txt"
    p.write_text("non-rumor:1\nfalse:2\ntrue:3\nunverified:4\n\n")
    assert read_label_file(p) == {"1": NON_RUMOR, "2": RUMOR, "3": RUMOR, "4": RUMOR}
    p.write_text("maybe:5\n")
    with pytest.raises(ValidationError):
        read_label_file(p)


def _legacy_dir(tmp_path):
    d = tmp_path / "legacy"
    (d / "tree").mkdir(parents=True)
    (d / "label.txt").write_text("false:e1\nnon-rumor:e2\ntrue:e3\n")
    (d / "tree" / "e1.txt").write_text(TREE)
    (d / "tree" / "e2.txt").write_text("['ROOT', 'ROOT', '0.0']->['a', '1', '0.0']\n['a', '1', '0.0']->['b', '2', '0.5']\n")
    (d / "source_tweets.txt").write_text("e1\tbreaking claim\ne2\tweather today\n")
    return d


def test_convert_directory(tmp_path):
    events, report = convert_legacy_corpus(_legacy_dir(tmp_path))
    assert [e.event_id for e in events] == ["e1", "e2"]
    assert [e.label for e in events] == [RUMOR, NON_RUMOR]
    assert report.skipped_events == ["e3"] and report.events == 2
    assert events[1].posts[1].timestamp == 30.0
    assert events[1].source.text == "weather today"


def test_convert_legacy_command(tmp_path):
    d = _legacy_dir(tmp_path)
    out = tmp_path / "out"
    assert main(["convert-legacy", "--data", str(d), "--out", str(out)]) == 0
    events = read_events(out / "events.jsonl")
    assert len(events) == 2
    assert (out / "conversion_report.json").exists()
    assert main(["dataset-stats", "--data", str(out)]) == 0
