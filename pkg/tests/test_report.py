import csv
import io
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from frailty_metrics.discrepancy import OlsFit
from frailty_metrics.errors import (
    EmptyRows,
    EmptyTable,
    LabelMismatch,
    NonPositiveHR,
)
from frailty_metrics.predictor import PredictionTable
from frailty_metrics.report import (
    ForestRow,
    forest_rows,
    render_forest_plot,
    render_hr_table,
    render_scatter,
)
from frailty_metrics.survival import CoxFitResult

SVG_NS = "{http://www.w3.org/2000/svg}"


def _result(hrs, ci_los, ci_his, ps):
    hrs = np.asarray(hrs, dtype=float)
    beta = np.log(hrs)
    return CoxFitResult(beta=beta, se=np.full(len(hrs), 0.1), hr=hrs,
                        ci_low=np.asarray(ci_los, dtype=float),
                        ci_high=np.asarray(ci_his, dtype=float),
                        z=beta / 0.1, p_value=np.asarray(ps, dtype=float),
                        log_likelihood=-10.0, iterations=3, converged=True,
                        loglik_path=(-12.0, -10.0))


def _table1_like():
    return _result(hrs=[0.914, 2.825], ci_los=[0.840, 2.293],
                   ci_his=[0.994, 3.480], ps=[0.036, 0.0004])


class TestHrTable:
    def test_published_row_format(self):
        out = render_hr_table(_table1_like(), ["AI Age Discrepancy",
                                               "Minimally Invasive Surgery"])
        assert "0.914 & (0.840 - 0.994) & 0.036" in out.text

    def test_small_p_convention(self):
        out = render_hr_table(_table1_like(), ["a", "b"])
        assert "2.825 & (2.293 - 3.480) & <0.001" in out.text
        assert "<0.001" in out.csv

    def test_p_boundary(self):
        res = _result([1.0, 1.0], [0.9, 0.9], [1.1, 1.1], [0.001, 0.00099])
        out = render_hr_table(res, ["x", "y"])
        lines = out.text.splitlines()
        assert "0.001" in lines[1] and "<" not in lines[1]
        assert "<0.001" in lines[2]

    def test_significance_markers(self):
        out = render_hr_table(_table1_like(), ["a", "b"])
        rows = out.text.splitlines()[1:]
        assert rows[0].endswith("& *")  # p = 0.036
        assert rows[1].endswith("& *")  # p < 0.001
        res = _result([1.0], [0.8], [1.2], [0.5])
        assert render_hr_table(res, ["a"]).text.splitlines()[1].endswith("& -")

    def test_label_mismatch(self):
        with pytest.raises(LabelMismatch):
            render_hr_table(_table1_like(), ["only one"])

    def test_csv_readable_and_typed(self):
        out = render_hr_table(_table1_like(), ["a", "b"])
        rows = list(csv.DictReader(io.StringIO(out.csv)))
        assert rows[0]["hazard_ratio"] == "0.914"
        assert rows[0]["significant"] == "yes"
        assert rows[1]["p_value"] == "<0.001"

    def test_byte_identical_on_repeat(self):
        a = render_hr_table(_table1_like(), ["a", "b"])
        b = render_hr_table(_table1_like(), ["a", "b"])
        assert a.csv == b.csv and a.text == b.text

    def test_round_half_even_formatting(self):
        # 0.0625 and 0.1875 are exact binary fractions; ties go to even digits
        res = _result([0.0625, 0.1875], [0.0625, 0.1875], [0.0625, 0.1875],
                      [0.5, 0.5])
        out = render_hr_table(res, ["a", "b"])
        assert "0.062" in out.text.splitlines()[1]
        assert "0.188" in out.text.splitlines()[2]


def _parse_svg(text):
    root = ET.fromstring(text)
    assert root.tag == f"{SVG_NS}svg"
    return root


def _lines_with_class(root, cls):
    return [el for el in root.iter(f"{SVG_NS}line")
            if el.get("class") == cls]


class TestForestPlot:
    def test_unit_hr_sits_on_reference_line(self):
        rows = [ForestRow(label="x", hr=1.0, ci_low=1.0, ci_high=1.0,
                          p_value=0.9, significant=False)]
        root = _parse_svg(render_forest_plot(rows))
        ref = _lines_with_class(root, "refline")[0]
        whisker = _lines_with_class(root, "whisker")[0]
        assert whisker.get("x1") == whisker.get("x2")  # zero length
        marker = [el for el in root.iter(f"{SVG_NS}rect")][0]
        center = float(marker.get("x")) + float(marker.get("width")) / 2
        assert center == pytest.approx(float(ref.get("x1")), abs=0.01)

    def test_metastasis_whisker_right_of_reference(self):
        rows = [
            ForestRow("AI Age Discrepancy", 1.242, 1.025, 1.504, 0.027, True),
            ForestRow("Metastasis", 2.753, 1.562, 4.848, 0.0004, True),
        ]
        root = _parse_svg(render_forest_plot(rows))
        ref_x = float(_lines_with_class(root, "refline")[0].get("x1"))
        met = _lines_with_class(root, "whisker")[1]
        assert float(met.get("x1")) > ref_x
        assert float(met.get("x2")) > ref_x

    def test_whisker_spans_log_ci(self):
        rows = [ForestRow("m", 2.753, 1.562, 4.848, 0.0004, True)]
        root = _parse_svg(render_forest_plot(rows))
        ref_x = float(_lines_with_class(root, "refline")[0].get("x1"))
        wh = _lines_with_class(root, "whisker")[0]
        x1, x2 = float(wh.get("x1")), float(wh.get("x2"))
        # pixel distances proportional to log units
        ratio = (x2 - ref_x) / (x1 - ref_x)
        assert ratio == pytest.approx(math.log(4.848) / math.log(1.562), rel=0.01)

    def test_empty_rows_rejected(self):
        with pytest.raises(EmptyRows):
            render_forest_plot([])

    def test_non_positive_hr_rejected(self):
        rows = [ForestRow("x", 0.0, 0.0, 0.0, 0.5, False)]
        with pytest.raises(NonPositiveHR):
            render_forest_plot(rows)

    def test_viewbox_follows_row_count(self):
        rows = [ForestRow(f"r{i}", 1.2, 1.0, 1.4, 0.2, False) for i in range(7)]
        root = _parse_svg(render_forest_plot(rows))
        assert root.get("viewBox") == f"0 0 800 {40 * 7 + 80}"

    def test_forest_rows_builder_flags_significance(self):
        rows = forest_rows(_table1_like(), ["a", "b"])
        assert [r.significant for r in rows] == [True, True]
        with pytest.raises(LabelMismatch):
            forest_rows(_table1_like(), ["a"])


class TestScatter:
    def _table(self, n):
        ages = np.linspace(40.0, 70.0, n)
        preds = ages + np.linspace(-3.0, 3.0, n)
        return PredictionTable(patient_ids=tuple(f"p{i}" for i in range(n)),
                               predicted_age=preds, chronological_age=ages)

    def test_three_points_two_lines(self):
        table = self._table(3)
        svg = render_scatter(table, OlsFit(slope=0.25, intercept=37.5, n=3))
        root = _parse_svg(svg)
        assert len(list(root.iter(f"{SVG_NS}circle"))) == 3
        assert len(list(root.iter(f"{SVG_NS}line"))) == 2

    def test_single_patient_still_renders_lines(self):
        table = self._table(1)
        svg = render_scatter(table, OlsFit(slope=1.0, intercept=0.0, n=1))
        root = _parse_svg(svg)
        assert len(list(root.iter(f"{SVG_NS}circle"))) == 1
        assert len(list(root.iter(f"{SVG_NS}line"))) == 2

    def test_empty_table_rejected(self):
        table = PredictionTable(patient_ids=(), predicted_age=np.array([]),
                                chronological_age=np.array([]))
        with pytest.raises(EmptyTable):
            render_scatter(table, OlsFit(slope=1.0, intercept=0.0, n=2))

    def test_well_formed_xml(self):
        table = self._table(5)
        svg = render_scatter(table, OlsFit(slope=0.5, intercept=25.0, n=5))
        _parse_svg(svg)  # raises on malformed XML

    def test_label_escaping_in_forest(self):
        rows = [ForestRow("T Stage >= 3 & more", 1.2, 1.0, 1.5, 0.2, False)]
        _parse_svg(render_forest_plot(rows))
