import json

import numpy as np
import pytest
from pydantic import ValidationError

from st_enhance.core.errors import CorrelationUndefinedError, FormatError, ShapeError
from st_enhance.core.models import AblationSummary, LossReport, MetricReport, ReportFormat
from st_enhance.evaluate import (
    LossLog,
    colorize,
    emit_report,
    emit_summary,
    gec_distance,
    gene_correlation,
    load_report,
    pcc,
    pearson,
    render_ppm,
    rmse,
    write_heatmaps,
)


def report(**overrides):
    fields = dict(
        label="baseline",
        fingerprint="0123456789abcdef",
        sample_count=4,
        gene_ids=[3, 17],
        rmse=[0.1234567891, 0.25],
        pcc=[0.87654321, None],
        gec_distance=0.0123456789,
    )
    fields.update(overrides)
    return MetricReport(**fields)


def test_rmse_of_identical_maps_is_zero(rng):
    maps = rng.uniform(size=(2, 5, 5))
    assert rmse(maps, maps) == [0.0, 0.0]


def test_rmse_constant_offset():
    truth = np.zeros((1, 4, 4))
    assert rmse(truth + 0.5, truth) == pytest.approx([0.5])


def test_rmse_pools_samples():
    truth = np.zeros((2, 1, 2, 2))
    pred = truth.copy()
    pred[0] = 1.0
    assert rmse(pred, truth) == pytest.approx([np.sqrt(0.5)])


def test_shape_mismatch_is_rejected():
    with pytest.raises(ShapeError):
        rmse(np.zeros((1, 2, 2)), np.zeros((1, 3, 3)))


def test_pearson_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson(-x, x) == pytest.approx(-1.0)
    assert pearson(2 * x + 3, x) == pytest.approx(1.0)


def test_pearson_is_undefined_for_constant_maps():
    with pytest.raises(CorrelationUndefinedError):
        pearson(np.array([1.0, 2.0]), np.ones(2))
    with pytest.raises(CorrelationUndefinedError):
        pearson(np.ones(2), np.array([1.0, 2.0]))


def test_pcc_marks_constant_truth_as_none(rng):
    truth = rng.uniform(size=(2, 4, 4))
    truth[1] = 0.3
    values = pcc(truth, truth)
    assert values[0] == pytest.approx(1.0)
    assert values[1] is None


def test_gene_correlation_of_duplicated_gene(rng):
    base = rng.uniform(size=(3, 1, 6, 6))
    preds = np.concatenate([base, base, rng.uniform(size=(3, 1, 6, 6))], axis=1)
    matrix = gene_correlation(preds, [5, 6, 7]).as_array()
    assert matrix[0, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(np.diag(matrix), 1.0)
    np.testing.assert_allclose(matrix, matrix.T)


def test_independent_genes_are_nearly_uncorrelated():
    rng = np.random.default_rng(0)
    preds = rng.uniform(size=(100, 2, 50, 50))
    matrix = gene_correlation(preds, [0, 1]).as_array()
    assert abs(matrix[0, 1]) < 0.02


def test_gene_correlation_lists_constant_genes(rng):
    preds = rng.uniform(size=(2, 3, 4, 4))
    preds[:, 2] = 0.5
    corr = gene_correlation(preds, [0, 1, 2])
    assert corr.absent == [2]
    assert corr.matrix[2][0] is None and corr.matrix[0][2] is None
    with pytest.raises(ShapeError):
        gene_correlation(preds, [0, 1])


def test_gec_distance(rng):
    preds = rng.uniform(size=(2, 3, 5, 5))
    a = gene_correlation(preds, [0, 1, 2])
    assert gec_distance(a, a) == 0.0
    shuffled = gene_correlation(preds[:, ::-1] * np.linspace(1, 2, 25).reshape(5, 5), [0, 1, 2])
    expected = np.sqrt(np.nansum((a.as_array() - shuffled.as_array()) ** 2))
    assert gec_distance(a, shuffled) == pytest.approx(expected)


def test_report_rounds_to_six_significant_digits():
    r = report()
    assert r.rmse[0] == 0.123457
    assert r.pcc == [0.876543, None]
    assert r.gec_distance == 0.0123457
    assert r.mean_pcc == 0.876543


def test_report_rejects_bad_values():
    with pytest.raises(ValidationError):
        report(rmse=[-0.1, 0.2])
    with pytest.raises(ValidationError):
        report(pcc=[1.5, None])
    with pytest.raises(ValidationError):
        report(gene_ids=[1])


@pytest.mark.parametrize("fmt, name", [(ReportFormat.JSON, "report.json"), (ReportFormat.CSV, "report.csv")])
def test_report_files_reload_exactly(tmp_path, fmt, name):
    original = report(no_lr_st=True)
    emit_report(original, tmp_path / name, fmt)
    assert load_report(tmp_path / name) == original


def test_report_json_carries_aggregates(tmp_path):
    emit_report(report(), tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["mean_rmse"] == pytest.approx((0.123457 + 0.25) / 2, rel=1e-5)
    assert data["mean_pcc"] == 0.876543


def test_report_csv_layout(tmp_path):
    emit_report(report(), tmp_path / "r.csv", ReportFormat.CSV)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "label,fingerprint,sample_count,no_lr_st,gene_id,rmse,pcc,mean_rmse,mean_pcc,gec_distance"
    assert len(lines) == 3
    assert lines[2].split(",")[6] == ""


def test_malformed_reports(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_report(tmp_path / "bad.json")
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        load_report(tmp_path / "bad.csv")


def test_summary_files(tmp_path):
    summary = AblationSummary.from_reports([report(), report(label="zero padding", rmse=[0.3, 0.4])])
    json_path, csv_path = emit_summary(summary, tmp_path)
    assert json.loads(json_path.read_text())["rows"][1]["label"] == "zero padding"
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "label,mean_rmse,mean_pcc,gec_distance,fingerprint"
    assert lines[2].startswith("zero padding,0.35,")
    assert summary.row("zero padding").mean_rmse == pytest.approx(0.35)
    with pytest.raises(KeyError):
        summary.row("missing")


def test_loss_log_appends_json_lines(tmp_path):
    log = LossLog(tmp_path / "losses.jsonl", "abc")
    log.reset()
    log.append(LossReport(step=0, total=1.5, mse=1.0, modal=0.5, tau=0.07, alpha=1.0, beta=1.0, present=3))
    log.append(LossReport(step=1, total=1.0, mse=1.0, tau=0.07, alpha=0.5, beta=0.5, present=0))
    lines = (tmp_path / "losses.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["fingerprint"] == "abc"
    assert "modal" not in json.loads(lines[1])
    entries = log.read()
    assert [e.step for e in entries] == [0, 1]
    assert entries[0].modal == 0.5 and entries[1].content is None


def test_colorize_endpoints():
    colours = colorize(np.array([[0.0, 0.5, 1.0, 2.0]]))
    assert colours[0, 0].tolist() == [68, 1, 84]
    assert colours[0, 1].tolist() == [33, 145, 140]
    assert colours[0, 2].tolist() == [253, 231, 37]
    assert colours[0, 3].tolist() == [253, 231, 37]


def test_render_ppm_header():
    text = render_ppm(np.zeros((2, 3, 3), dtype=np.uint8))
    assert text.splitlines()[:3] == ["P3", "3 2", "255"]


def test_write_heatmaps(tmp_path, rng):
    pred = rng.uniform(size=(2, 2, 4, 4))
    paths = write_heatmaps(pred, pred, ["a", "b"], [9, 11], tmp_path / "maps", max_samples=1)
    assert [p.name for p in paths] == ["a_gene9.ppm", "a_gene11.ppm"]
    assert paths[0].read_text().splitlines()[1] == "10 4"
    with pytest.raises(ShapeError):
        write_heatmaps(pred, pred[:1], ["a"], [9, 11], tmp_path)
