import re

import numpy as np

from goldgan import plots as P


def _heights(svg):
    # skip the background rect, keep bars only
    return [float(h) for h in re.findall(r'<rect x="[^"]+" y="[^"]+" width="[^"]+" height="([^"]+)"', svg)]


def test_histogram_heights_proportional_to_counts():
    counts = [3, 6, 0, 12]
    svg = P.histogram_plot([0, 1, 2, 3, 4], counts)
    h = _heights(svg)
    assert len(h) == 4
    unit = h[-1] / 12
    assert np.allclose(h, [c * unit for c in counts], atol=0.02)


def test_outputs_are_deterministic():
    rng = np.random.default_rng(0)
    xy = rng.standard_normal((30, 2))
    a = P.scatter_plot([("a", xy, "#000000"), ("b", xy + 1, P.value_colors(xy[:, 0]))])
    b = P.scatter_plot([("a", xy, "#000000"), ("b", xy + 1, P.value_colors(xy[:, 0]))])
    assert a == b and a.count("<circle") == 60
    assert P.line_plot([("s", [1, 2, 3], [0.1, 0.2, 0.1])]) == P.line_plot([("s", [1, 2, 3], [0.1, 0.2, 0.1])])


def test_empty_inputs_give_axes_only():
    for svg in (P.line_plot([]), P.histogram_plot([], []), P.scatter_plot([])):
        assert svg.startswith("<svg") and svg.count("<line") == 2
        assert "<polyline" not in svg and "<circle" not in svg


def test_constant_series_and_labels_escaped():
    svg = P.line_plot([("a<b", [0, 0], [1, 1])], title="x & y")
    assert "a&lt;b" in svg and "x &amp; y" in svg and "nan" not in svg


def test_value_colors_ramp():
    cols = P.value_colors([0.0, 0.5, 1.0])
    assert cols[0] == "#0030ff" and cols[-1] == "#ff3000"
    assert P.value_colors([2.0, 2.0]) == ["#0030ff", "#0030ff"]
    assert P.value_colors([]) == []
