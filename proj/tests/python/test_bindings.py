import math

import numpy as np
import pytest

import weasul


def test_label_matrix_round_trip():
    values = np.array([[0, 1, 1], [1, 0, 1]], dtype=np.int32)
    lm = weasul.LabelMatrix(values)
    assert (lm.rows, lm.cols) == (2, 3)
    assert (lm.to_numpy() == values).all()


def test_label_matrix_rejects_non_binary():
    with pytest.raises(weasul.WeasulError):
        weasul.LabelMatrix(np.array([[0, 2]], dtype=np.int32))


def test_metrics():
    assert weasul.binarize([0.2, 0.5, 0.9]) == [0, 1, 1]
    assert weasul.accuracy([1, 0, 1, 1], [1, 0, 0, 1]) == pytest.approx(0.75)
    assert weasul.f1([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.5)
    assert weasul.diversity_entropy([0, 1, 2, 3]) == pytest.approx(math.log(4))


def test_synthetic_shapes(synthetic):
    train, test = synthetic
    assert len(train) == 2000 and len(test) == 600
    assert train.label_matrix.cols == 3
    assert set(np.unique(train.label_matrix.to_numpy())) <= {0, 1}


def test_fit_and_predict(synthetic):
    train, _ = synthetic
    mi = weasul.make_moment_input(train.label_matrix, weasul.synthetic_dependency())
    buckets = weasul.build_buckets(train.label_matrix)
    params, diag = weasul.fit(mi, 0.5, [], buckets, weasul.FitConfig())
    assert diag.base_loss < 1e-3
    assert all(b <= a for a, b in zip(diag.loss_trace, diag.loss_trace[1:]))
    probs = weasul.predict_points(params, mi, train.label_matrix)
    assert len(probs) == len(train)
    assert all(0.0 < p < 1.0 for p in probs)
    # Every labelling function firing is strong evidence for the positive class.
    assert weasul.predict_bucket(params, [1, 1, 1], mi) > 0.5


def test_gradient_matches_finite_differences(synthetic):
    train, _ = synthetic
    mi = weasul.make_moment_input(train.label_matrix, weasul.synthetic_dependency())
    buckets = weasul.build_buckets(train.label_matrix)
    labeled = [(0, int(train.labels[0])), (7, int(train.labels[7]))]
    z = np.array([0.4, -0.3, 0.5, 0.2])
    grad = weasul.gradient(z, mi, 0.5, labeled, buckets, 2.0)
    h = 1e-6
    for i in range(len(z)):
        step = np.zeros_like(z)
        step[i] = h
        fd = (weasul.objective(z + step, mi, 0.5, labeled, buckets, 2.0)
              - weasul.objective(z - step, mi, 0.5, labeled, buckets, 2.0)) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_run_method_records_validate(synthetic, record_schema):
    import jsonschema

    train, test = synthetic
    records = weasul.run_method("active-weasul", train, test, strategy="maxkl", budget=5, seed=1)
    assert [r["t"] for r in records] == list(range(6))
    for record in records:
        jsonschema.validate(record, record_schema)
    again = weasul.run_method("active-weasul", train, test, strategy="maxkl", budget=5, seed=1)
    assert records == again


def test_errors_carry_a_kind():
    with pytest.raises(weasul.WeasulError) as info:
        weasul.generate_gaussian_mixture({"seed": 0, "n_train": 0})
    assert len(info.value.args) == 2
