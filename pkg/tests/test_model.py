import numpy as np
import pytest
from hypothesis import given, strategies as st

from bpslda.errors import AllZeroError, FormatError, NegativeEntryError
from bpslda.model import (
    CLASSIFICATION,
    Hyperparams,
    Model,
    OutputParams,
    REGRESSION,
    Task,
    TopicMatrix,
    UNSUPERVISED,
    load_model,
    normalize_to_simplex,
    save_model,
    with_output_offset,
)

from conftest import make_model, random_phi


class TestNormalizeToSimplex:
    def test_symmetry(self):
        np.testing.assert_array_equal(normalize_to_simplex([1.0, 1.0]), [0.5, 0.5])

    def test_single_support(self):
        np.testing.assert_array_equal(normalize_to_simplex([2.0, 0.0, 0.0]), [1, 0, 0])

    def test_proportionality(self):
        np.testing.assert_allclose(normalize_to_simplex([1.0, 3.0]), [0.25, 0.75])

    def test_all_zero_rejected(self):
        with pytest.raises(AllZeroError):
            normalize_to_simplex([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(NegativeEntryError):
            normalize_to_simplex([1.0, -0.1])

    @given(
        st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=20)
    )
    def test_idempotent_and_sums_to_one(self, values):
        once = normalize_to_simplex(values)
        twice = normalize_to_simplex(once)
        assert abs(once.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(twice, once, rtol=0, atol=1e-15)


class TestHyperparams:
    def test_convex_regime_flag(self):
        assert Hyperparams(num_topics=2, dirichlet_alpha=1.0).convex_regime
        assert Hyperparams(num_topics=2, dirichlet_alpha=1.5).convex_regime
        assert not Hyperparams(num_topics=2, dirichlet_alpha=0.999).convex_regime

    @pytest.mark.parametrize(
        "kw",
        [
            dict(num_topics=0, dirichlet_alpha=1.0),
            dict(num_topics=2, dirichlet_alpha=0.0),
            dict(num_topics=2, dirichlet_alpha=1.0, dirichlet_beta=-1.0),
            dict(num_topics=2, dirichlet_alpha=1.0, gamma=0.0),
            dict(num_topics=2, dirichlet_alpha=1.0, unroll_depth=-1),
        ],
    )
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            Hyperparams(**kw)

    def test_task_validation(self):
        with pytest.raises(ValueError):
            Task("nonsense")
        with pytest.raises(ValueError):
            Task(REGRESSION, 0)
        assert Task(UNSUPERVISED).num_outputs == 0


class TestTopicMatrix:
    def test_accepts_valid(self, rng):
        tm = TopicMatrix(random_phi(rng, 5, 3))
        assert tm.vocab_size == 5 and tm.num_topics == 3

    def test_column_major_readonly(self, rng):
        tm = TopicMatrix(random_phi(rng, 5, 3))
        assert tm.entries.flags.f_contiguous
        assert not tm.entries.flags.writeable

    def test_rejects_nonpositive(self, rng):
        phi = random_phi(rng, 4, 2)
        phi[0, 0] = 0.0
        phi /= phi.sum(axis=0)
        with pytest.raises(ValueError):
            TopicMatrix(phi)

    def test_rejects_subfloor(self, rng):
        phi = random_phi(rng, 4, 2)
        phi[0, 0] = 1e-301
        phi /= phi.sum(axis=0)
        with pytest.raises(ValueError):
            TopicMatrix(phi)

    def test_rejects_bad_column_sum(self, rng):
        phi = random_phi(rng, 4, 2)
        phi[:, 1] *= 1.0 + 1e-6
        with pytest.raises(ValueError):
            TopicMatrix(phi)

    def test_column_sums_within_tolerance(self, rng):
        for _ in range(20):
            tm = TopicMatrix(random_phi(rng, 30, 7))
            assert np.abs(tm.entries.sum(axis=0) - 1.0).max() <= 1e-9
            assert tm.entries.min() > 0


class TestModel:
    def test_dimension_agreement(self, rng):
        phi = TopicMatrix(random_phi(rng, 5, 3))
        hyper = Hyperparams(num_topics=3, dirichlet_alpha=1.0, task=Task(REGRESSION, 1))
        with pytest.raises(ValueError):
            Model(hyper, phi, OutputParams(np.zeros((1, 4))))
        with pytest.raises(ValueError):
            Model(hyper, phi, None)

    def test_unsup_has_no_outputs(self, rng):
        phi = TopicMatrix(random_phi(rng, 5, 3))
        hyper = Hyperparams(num_topics=3, dirichlet_alpha=1.0, task=Task(UNSUPERVISED))
        with pytest.raises(ValueError):
            Model(hyper, phi, OutputParams(np.zeros((1, 3))))
        assert Model(hyper, phi, None).u is None

    def test_output_offset_shifts_predictions(self, rng):
        model = make_model(rng, kind=REGRESSION)
        shifted = with_output_offset(model, [2.5])
        theta = normalize_to_simplex(rng.random(3))
        base = model.u.u @ theta
        moved = shifted.u.u @ theta
        np.testing.assert_allclose(moved - base, [2.5], atol=1e-12)


class TestSerialization:
    @pytest.mark.parametrize("kind,c", [(REGRESSION, 1), (CLASSIFICATION, 4), (UNSUPERVISED, 0)])
    def test_round_trip_bit_exact(self, rng, tmp_path, kind, c):
        model = make_model(rng, vocab_size=7, num_topics=4, kind=kind, num_outputs=max(c, 1))
        path = tmp_path / "model.txt"
        save_model(model, path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.phi.entries, model.phi.entries)
        if kind == UNSUPERVISED:
            assert loaded.u is None
        else:
            np.testing.assert_array_equal(loaded.u.u, model.u.u)
        assert loaded.hyper == model.hyper

    def test_bad_header_version(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("BPSLDA v999\n1 1 0 unsup 0 1 1 1\n1\n")
        with pytest.raises(FormatError):
            load_model(path)

    def test_column_sum_deviation_rejected(self, rng, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text(
            "BPSLDA v1\n2 1 0 unsup 0 1 1 1\n0.5\n0.50001\n"
        )
        with pytest.raises(FormatError):
            load_model(path)

    def test_small_column_sum_deviation_renormalized(self, tmp_path):
        # deviation of 1e-7 passes the file check and is corrected on load
        path = tmp_path / "m.txt"
        path.write_text("BPSLDA v1\n2 1 0 unsup 0 1 1 1\n0.5\n0.5000001\n")
        model = load_model(path)
        np.testing.assert_allclose(model.phi.entries.sum(axis=0), 1.0, atol=1e-12)

    def test_wrong_row_count(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("BPSLDA v1\n3 1 0 unsup 0 1 1 1\n0.5\n0.5\n")
        with pytest.raises(FormatError):
            load_model(path)

    def test_bad_number(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("BPSLDA v1\n1 1 0 unsup 0 1 1 1\nnot_a_float\n")
        with pytest.raises(FormatError):
            load_model(path)

    def test_unknown_task(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("BPSLDA v1\n1 1 1 ranking 0 1 1 1\n1\n0\n")
        with pytest.raises(FormatError):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "absent.txt")

    def test_nonpositive_entry_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("BPSLDA v1\n2 1 0 unsup 0 1 1 1\n1\n0\n")
        with pytest.raises(FormatError):
            load_model(path)
