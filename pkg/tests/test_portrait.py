import json
import re

import pytest

from billiards.portrait import (EDGE_FRACTION, PortraitData, PortraitInputError, load_inputs,
                                render_portrait, render_svg)

P = 5.0


def test_empty_portrait_has_axes_only():
    svg = render_svg(P)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "<polyline" not in svg and 'class="crossing"' not in svg
    assert svg.count("<text") >= 10


def test_rejects_bad_perimeter():
    with pytest.raises(ValueError):
        render_svg(0.0)


def test_rendering_is_deterministic():
    data = PortraitData(orbits=[("1/2", "hyperbolic", [(0.0, 0.0), (2.5, 0.0)])],
                        branches={"unstable+@0": [(0.0, 0.0), (0.1, 0.05), (0.2, 0.1)]},
                        crossings=[(1.0, 0.2)])
    assert render_svg(P, data, "t") == render_svg(P, data, "t")


def test_branch_is_split_at_the_seam():
    data = PortraitData(branches={"stable-@0": [(P - 0.02, 0.1), (P + 0.02, 0.12)]})
    svg = render_svg(P, data)
    assert svg.count("<polyline") == 2


def test_crossings_near_the_seam_are_drawn_twice():
    near = EDGE_FRACTION * P / 2
    svg = render_svg(P, PortraitData(crossings=[(near, 0.0), (P - near, 0.0), (P / 2, 0.0)]))
    assert svg.count('class="crossing"') == 5


def test_orbit_prefixes_keep_colors_by_kind():
    svg = render_svg(P, PortraitData(branches={"0:unstable+@1": [(0, 0), (0.1, 0.1)],
                                               "1:unstable+@0": [(1, 0), (1.1, 0.1)]}))
    # two groups, one legend entry
    assert svg.count('class="branch"') == 2
    assert len(re.findall(r">unstable\+</text>", svg)) == 1


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_reads_all_three_inputs(tmp_path):
    orb = _write(tmp_path, "o.csv", "rotation,stability,r,s\n1/2,hyperbolic,0.0 2.5,0.0 0.0\n")
    br = _write(tmp_path, "b.jsonl",
                '{"branch": "unstable+@0", "r": 0.1, "s": 0.0}\n\n'
                '{"branch": "unstable+@0", "r": 0.2, "s": 0.1}\n')
    cr = _write(tmp_path, "r.json", json.dumps({"a": {"crossings": [{"r": 1.0, "s": 0.5}]}}))
    d = load_inputs(orb, br, cr)
    assert d.orbits == [("1/2", "hyperbolic", [(0.0, 0.0), (2.5, 0.0)])]
    assert d.branches == {"unstable+@0": [(0.1, 0.0), (0.2, 0.1)]}
    assert d.crossings == [(1.0, 0.5)]
    out = render_portrait(tmp_path / "p.svg", P, orb, br, cr, "x")
    assert out.read_text().count('class="crossing"') == 1


@pytest.mark.parametrize("name,text,line", [
    ("b.jsonl", '{"branch": "u", "r": 0, "s": 0}\n{"branch": "u", "r": 0\n', 2),
    ("b.jsonl", '{"branch": "u", "r": 0, "s": 0}\n\n{"branch": "u", "s": 1}\n', 3),
    ("b.jsonl", '{"branch": "u", "r": "x", "s": 0}\n', 1),
    ("o.csv", "rotation,r,s\n1/2,0 1,0 0\n1/3,0 1,0\n", 3),
    ("o.csv", "rotation,r,s\n1/2,0 nan,0 0\n", 2),
    ("r.json", '{\n  "crossings": [\n  ,]\n}', 3),
])
def test_malformed_inputs_name_the_line(tmp_path, name, text, line):
    path = _write(tmp_path, name, text)
    kw = {"b.jsonl": "branches", "o.csv": "orbits", "r.json": "crossings"}[name]
    with pytest.raises(PortraitInputError) as info:
        load_inputs(**{kw: path})
    assert info.value.line == line
    assert f"{path}:{line}:" in str(info.value)


def test_missing_input_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        render_portrait(tmp_path / "p.svg", P, branches=tmp_path / "nope.jsonl")


def test_homoclinic_portrait(tmp_path, perturbed_table, perturbed_branches, perturbed_reports):
    from billiards.portrait import PortraitData, render_svg
    branches = {}
    for kind, brs in perturbed_branches.items():
        for rec in brs[0].jsonl_records():
            branches.setdefault(rec["branch"], []).append((rec["r"], rec["s"]))
    crossings = [(c["r"], c["s"]) for rep in perturbed_reports.values()
                 for c in rep.to_dict()["crossings"]]
    svg = render_svg(perturbed_table.perimeter, PortraitData(branches=branches, crossings=crossings))
    assert svg.count('class="branch"') == 4
    assert svg.count('class="crossing"') >= 1
    for kind in ("unstable+", "unstable-", "stable+", "stable-"):
        assert f">{kind}</text>" in svg
