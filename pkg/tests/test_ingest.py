import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fdrcurve.distributions import DomainError, FamilyKind
from fdrcurve.ingest import (
    DataError,
    DataWarning,
    ExpressionMatrix,
    GeneSummary,
    build_hypotheses,
    group_summary,
    load_matrix,
)

TOY = "gene,s1,s2,s3,s4\ng1,0,2,3,5\ng2,1,1.5,2,2.5\ng3,4,4.2,4.1,3.9\n"


@pytest.fixture
def toy(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text(TOY)
    return p


class TestLoadMatrix:
    def test_toy_with_group_list(self, toy):
        mat = load_matrix(toy, groups=["A", "A", "B", "B"])
        assert mat.values.shape == (3, 4)
        assert mat.gene_ids == ("g1", "g2", "g3")
        assert mat.group_labels.count("A") == 2 and mat.group_labels.count("B") == 2
        assert mat.dropped_rows == 0

    def test_tab_delimited_with_inline_groups(self, tmp_path):
        p = tmp_path / "toy.tsv"
        p.write_text("id\ta1\ta2\tb1\tb2\ngroup\tBRCA1\tBRCA1\tBRCA2\tBRCA2\ng1\t0\t2\t3\t5\n")
        mat = load_matrix(p)
        assert mat.group_labels == ("A", "A", "B", "B")
        assert mat.values.tolist() == [[0, 2, 3, 5]]

    def test_labels_file(self, toy, tmp_path):
        lab = tmp_path / "labels.csv"
        lab.write_text("sample,label\ns1,B\ns2,A\ns3,A\ns4,B\n")
        mat = load_matrix(toy, labels_path=lab)
        assert mat.group_labels == ("B", "A", "A", "B")

    def test_named_groups_drop_other_samples(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("g,a,b,c,d,e,f\nx,1,2,3,4,5,6\n")
        mat = load_matrix(p, groups=["X", "Y", "Z", "Y", "X", "Z"], group_a="Y", group_b="Z")
        assert mat.sample_ids == ("b", "c", "d", "f")
        assert mat.group_labels == ("A", "B", "A", "B")

    def test_non_numeric_row_dropped(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(TOY + "g4,1,NA,2,3\n")
        with pytest.warns(DataWarning, match="dropped 1"):
            mat = load_matrix(p, groups="AABB")
        assert mat.dropped_rows == 1 and mat.gene_ids == ("g1", "g2", "g3")

    def test_single_group(self, toy):
        with pytest.raises(DataError):
            load_matrix(toy, groups=["A"] * 4)

    def test_group_with_one_sample(self, toy):
        with pytest.raises(DataError, match="at least 2"):
            load_matrix(toy, groups=["A", "B", "B", "B"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_matrix(tmp_path / "nope.csv", groups="AABB")

    @pytest.mark.parametrize("header", ["gene,s1,s1,s2,s3", "gene,s1,,s2,s3", "gene"])
    def test_malformed_header(self, tmp_path, header):
        p = tmp_path / "h.csv"
        p.write_text(header + "\ng1,1,2,3,4\n")
        with pytest.raises(DataError, match="header"):
            load_matrix(p, groups="AABB")

    def test_labels_given_twice(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("id,a,b,c,d\ngroup,A,A,B,B\ng1,0,2,3,5\n")
        with pytest.raises(DataError, match="exactly once"):
            load_matrix(p, groups="AABB")

    def test_label_count_mismatch(self, toy):
        with pytest.raises(DataError):
            load_matrix(toy, groups="AAB")


class TestGroupSummary:
    def test_hand_example(self, toy):
        s = group_summary(load_matrix(toy, groups="AABB"))
        assert s.x[0] == 3.0
        assert s.sigma_hat[0] == pytest.approx(math.sqrt(2.0), rel=1e-15)

    def test_zero_variance_dropped(self):
        mat = ExpressionMatrix([[1, 1, 2, 2], [0, 2, 3, 5]], ["flat", "g"], "AABB")
        with pytest.warns(DataWarning, match="zero variance"):
            s = group_summary(mat)
        assert s.gene_ids == ("g",) and s.dropped_genes == ("flat",)

    def test_identical_groups(self):
        s = group_summary(ExpressionMatrix([[1.0, 3.0, 1.0, 3.0]], ["g"], "AABB"))
        assert s.x[0] == 0.0

    def test_round_trip_csv(self, toy, tmp_path):
        s = group_summary(load_matrix(toy, groups="AABB"))
        s.to_csv(tmp_path / "s.csv")
        again = GeneSummary.from_csv(tmp_path / "s.csv")
        assert again.gene_ids == s.gene_ids
        assert np.allclose(again.x, s.x, rtol=1e-11) and np.allclose(again.sigma_hat, s.sigma_hat, rtol=1e-11)

    def test_export_is_deterministic(self, toy, tmp_path):
        for name in ("a.csv", "b.csv"):
            group_summary(load_matrix(toy, groups="AABB")).to_csv(tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


matrices = arrays(
    float,
    st.tuples(st.integers(1, 6), st.integers(4, 8)),
    elements=st.floats(-20, 20, allow_nan=False).map(lambda v: round(v, 3)),
)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_label_swap_negates(values):
    n = values.shape[1]
    labels = ["A", "A"] + ["B"] * (n - 4) + ["A", "B"]
    swapped = ["B" if g == "A" else "A" for g in labels]
    ids = [f"g{i}" for i in range(values.shape[0])]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataWarning)
        try:
            s1 = group_summary(ExpressionMatrix(values, ids, labels))
        except DataError:
            return
        s2 = group_summary(ExpressionMatrix(values, ids, swapped))
    assert np.array_equal(s1.x, -s2.x)
    assert np.allclose(s1.sigma_hat, s2.sigma_hat, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_scaling_a_gene_leaves_snr_unchanged(values):
    labels = ["A", "B"] * (values.shape[1] // 2) + ["A"] * (values.shape[1] % 2)
    ids = [f"g{i}" for i in range(values.shape[0])]
    doubled = values.copy()
    doubled[0] *= 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataWarning)
        try:
            s1 = group_summary(ExpressionMatrix(values, ids, labels))
        except DataError:
            return
        s2 = group_summary(ExpressionMatrix(doubled, ids, labels))
    if "g0" not in s1.gene_ids:
        return
    assert s2.x[0] == pytest.approx(2 * s1.x[0], rel=1e-12, abs=1e-12)
    assert s2.sigma_hat[0] == pytest.approx(2 * s1.sigma_hat[0], rel=1e-12)
    snr1 = build_hypotheses(s1, "snr").statistics[0]
    snr2 = build_hypotheses(s2, "snr").statistics[0]
    assert snr2 == pytest.approx(snr1, rel=1e-12, abs=1e-12)


class TestBuildHypotheses:
    summary = GeneSummary(("u", "v"), [1.0, -1.0], [2.0, 0.5])

    def test_effect_size(self):
        h = build_hypotheses(self.summary, "effect-size")
        assert h.statistics.tolist() == [1.0, -1.0]
        assert [f.scale for f in h.families] == [2.0, 0.5]
        assert all(f.kind is FamilyKind.SCALED_GAUSSIAN for f in h.families)
        assert h.ids == ("u", "v")

    def test_snr(self):
        h = build_hypotheses(self.summary, "snr")
        assert h.statistics.tolist() == [0.5, -2.0]
        assert h.families.kind is FamilyKind.GAUSSIAN

    def test_negate(self):
        assert build_hypotheses(self.summary, "snr", negate=True).statistics.tolist() == [-0.5, 2.0]

    def test_unknown_mode(self):
        with pytest.raises(DomainError):
            build_hypotheses(self.summary, "t-test")

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(DataError):
            GeneSummary(("u",), [1.0], [0.0])
