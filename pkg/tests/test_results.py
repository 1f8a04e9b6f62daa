import math

import pytest

from neuroens.results import (
    ResultRow,
    ResultTable,
    aggregate_accuracies,
    load_results,
    render_results,
    save_results,
)


class TestAggregate:
    def test_mean_and_sample_std(self):
        accs = [0.90, 0.95, 0.85, 0.92, 0.88]
        mean, std = aggregate_accuracies(accs)
        want_mean = sum(accs) / len(accs)
        want_var = sum((a - want_mean) ** 2 for a in accs) / (len(accs) - 1)
        assert mean == want_mean
        assert std == math.sqrt(want_var)

    def test_single_repetition_std_zero(self):
        assert aggregate_accuracies([0.9]) == (0.9, 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no accuracies"):
            aggregate_accuracies([])


class TestResultRow:
    def test_from_accuracies(self):
        row = ResultRow.from_accuracies(model=2, smoothed=True, pretrained=False,
                                        learning_rate=1e-4, accuracies=[0.8, 0.9])
        assert row.acc_mean == pytest.approx(0.85)
        assert row.rep_accuracies == (0.8, 0.9)

    def test_validation(self):
        with pytest.raises(ValueError, match="model"):
            ResultRow(model=3, smoothed=False, pretrained=False, learning_rate=1e-3,
                      acc_mean=0.5, acc_std=0.0, rep_accuracies=(0.5,))
        with pytest.raises(ValueError, match="learning_rate"):
            ResultRow(model=1, smoothed=False, pretrained=False, learning_rate=0.0,
                      acc_mean=0.5, acc_std=0.0, rep_accuracies=(0.5,))
        with pytest.raises(ValueError, match="accuracy"):
            ResultRow(model=1, smoothed=False, pretrained=False, learning_rate=1e-3,
                      acc_mean=1.5, acc_std=0.0, rep_accuracies=(1.5,))


class TestCsv:
    def _table(self):
        rows = [
            ResultRow.from_accuracies(model=1, smoothed=False, pretrained=False,
                                      learning_rate=1e-3,
                                      accuracies=[0.91234567890123456, 0.85, 0.9]),
            ResultRow.from_accuracies(model=2, smoothed=True, pretrained=True,
                                      learning_rate=1e-4, accuracies=[0.75]),
        ]
        return ResultTable(rows=tuple(rows))

    def test_round_trip_exact(self, tmp_path):
        table = self._table()
        path = tmp_path / "results.csv"
        save_results(table, path)
        back = load_results(path)
        assert back == table

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="bad results header"):
            load_results(path)

    def test_field_count_checked(self, tmp_path):
        table = self._table()
        path = tmp_path / "results.csv"
        save_results(table, path)
        lines = path.read_text().splitlines()
        lines[1] = lines[1] + ",extra"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="fields"):
            load_results(path)


class TestRender:
    def test_formatting(self):
        rows = (
            ResultRow(model=1, smoothed=False, pretrained=False, learning_rate=1e-3,
                      acc_mean=0.947, acc_std=0.0083, rep_accuracies=(0.94, 0.954)),
            ResultRow(model=2, smoothed=True, pretrained=True, learning_rate=1e-4,
                      acc_mean=0.9, acc_std=0.05, rep_accuracies=(0.85, 0.95)),
        )
        text = render_results(ResultTable(rows=rows))
        lines = text.splitlines()
        assert lines[0].split() == ["Model", "Use", "Smoothed", "Scan", "Pre",
                                    "Trained", "Learning", "Rate", "Accuracy"]
        assert set(lines[1]) == {"-", " "}
        assert "0.9470 ± 0.0083" in lines[2]
        assert "N/A" in lines[2]          # model 1 has no smoothing choice
        assert "No" in lines[2]
        assert "0.001" in lines[2]
        assert "Yes" in lines[3]
        assert "0.0001" in lines[3]

    def test_rendered_fields_parse_back_at_printed_precision(self):
        rows = (
            ResultRow.from_accuracies(model=1, smoothed=False, pretrained=True,
                                      learning_rate=1e-3,
                                      accuracies=[0.9123456, 0.8631001, 0.9555]),
            ResultRow.from_accuracies(model=2, smoothed=True, pretrained=False,
                                      learning_rate=1e-4, accuracies=[0.7, 0.8]),
        )
        lines = render_results(ResultTable(rows=rows)).splitlines()[2:]
        for line, row in zip(lines, rows):
            fields = line.split()
            assert int(fields[0]) == row.model
            want_smoothed = "N/A" if row.model == 1 else ("Yes" if row.smoothed else "No")
            assert fields[1] == want_smoothed
            assert fields[2] == ("Yes" if row.pretrained else "No")
            assert float(fields[3]) == row.learning_rate
            mean_text, pm, std_text = fields[4], fields[5], fields[6]
            assert pm == "±"
            assert float(mean_text) == round(row.acc_mean, 4)
            assert float(std_text) == round(row.acc_std, 4)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty result table"):
            render_results(ResultTable(rows=()))
