import numpy as np
import pytest

from hsfl.trainer import (
    HybridTrainer,
    ToyModel,
    TrainingDiverged,
    aggregate,
    dirichlet_partition,
    make_synthetic_dataset,
    run_hsfl_training,
)


@pytest.fixture(scope="module")
def data():
    return make_synthetic_dataset(5, total_samples=1000, seed=0)


def test_parameter_layout():
    m = ToyModel((3, 4, 2))
    assert m.num_params == 3 * 4 + 4 + 4 * 2 + 2
    p = m.init_params(np.random.default_rng(0))
    shapes = [(w.shape, b.shape) for w, b in m.unpack(p)]
    assert shapes == [((3, 4), (4,)), ((4, 2), (2,))]


def test_gradient_matches_finite_differences_per_coordinate():
    m = ToyModel((4, 5, 3))
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(7, 4)), rng.integers(0, 3, size=7)
    p = m.init_params(rng)
    _, g = m.loss_and_grad(p, x, y)
    h = 1e-6
    fd = np.array([(m.loss(p + h * e, x, y) - m.loss(p - h * e, x, y)) / (2 * h) for e in np.eye(p.size)])
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-9)


def test_loss_is_cross_entropy():
    m = ToyModel((2, 2, 2))
    p = np.zeros(m.num_params)
    x = np.ones((3, 2))
    assert m.loss(p, x, np.array([0, 1, 0])) == pytest.approx(np.log(2.0))


def test_partition_covers_each_sample_once():
    labels = np.repeat(np.arange(4), 250)
    parts = dirichlet_partition(labels, 10, 1.0, np.random.default_rng(0))
    allidx = np.concatenate(parts)
    assert len(allidx) == 1000 and len(np.unique(allidx)) == 1000
    assert all(len(p) > 0 for p in parts)


def test_larger_phi_is_more_heterogeneous():
    labels = np.repeat(np.arange(4), 500)

    def mean_entropy(phi):
        ents = []
        for s in range(5):
            for p in dirichlet_partition(labels, 10, phi, np.random.default_rng(s)):
                q = np.bincount(labels[p], minlength=4) / len(p)
                ents.append(-np.sum(q[q > 0] * np.log(q[q > 0])))
        return np.mean(ents)

    assert mean_entropy(0.1) > mean_entropy(1.0) > mean_entropy(10.0)


def test_partition_argument_checks():
    with pytest.raises(ValueError):
        dirichlet_partition(np.zeros(10), 2, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        dirichlet_partition(np.zeros(3), 5, 1.0, np.random.default_rng(0))


def test_dataset_split(data):
    assert data.num_devices == 5
    assert data.sizes.sum() + len(data.test_y) == 1000
    assert len(data.test_y) == 200


def test_aggregate_ignores_insertion_order():
    rng = np.random.default_rng(0)
    vecs = {k: rng.normal(size=50) for k in range(6)}
    shuffled = {k: vecs[k] for k in [4, 1, 5, 0, 3, 2]}
    np.testing.assert_array_equal(aggregate(vecs), aggregate(shuffled))
    np.testing.assert_allclose(aggregate(vecs), np.mean(list(vecs.values()), axis=0))


def test_batches_do_not_depend_on_mode(data):
    a = HybridTrainer(data, seed=3)
    idx = a.sample_batches(np.full(5, 4), 2)
    again = HybridTrainer(data, seed=3).sample_batches(np.full(5, 4), 2)
    for k in range(5):
        np.testing.assert_array_equal(idx[k], again[k])
        assert len(np.unique(idx[k])) == 4
    with pytest.raises(ValueError):
        a.sample_batches(np.full(5, 10_000), 0)


def test_training_reduces_loss(data):
    tr = HybridTrainer(data, eta=0.1, seed=0)
    start = tr.test_loss()
    hit, curve = run_hsfl_training(tr, lambda t: (np.array([True, False, True, False, False]), np.full(5, 16)), 30)
    assert hit is None and len(curve) == 30
    assert curve[-1] < start


def test_target_stops_training(data):
    tr = HybridTrainer(data, eta=0.1, seed=0)
    hit, curve = run_hsfl_training(tr, lambda t: (np.ones(5, dtype=bool), np.full(5, 16)), 200, target_loss=10.0)
    assert hit == 1 and len(curve) == 1


def test_divergence_is_reported(data):
    tr = HybridTrainer(data, seed=0)
    tr.state.params[:] = np.nan
    with pytest.raises(TrainingDiverged):
        tr.step(np.zeros(5, dtype=bool), np.full(5, 2))
