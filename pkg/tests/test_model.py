import numpy as np
import pytest

from cgrkit.model import (
    SKIP_FROM,
    SKIP_TO,
    DecisionBank,
    ModelError,
    ModelParams,
    TrainConfig,
    forward,
    gradients,
    init_model,
    load_bank,
    load_model,
    loss,
    save_bank,
    save_model,
    train,
    write_training_log,
)


# ---------------------------------------------------------------------------
# Architecture


def test_init_model_shapes():
    m = init_model(seed=0, input_dim=480, hidden=1024, n_layers=7)
    assert m.n_layers == 7
    assert m.weights[0].shape == (480, 1024)
    for w in m.weights[1:-1]:
        assert w.shape == (1024, 1024)
    assert m.weights[-1].shape == (1024, 1)
    assert len(m.bn_gamma) == 6
    assert all(g.shape == (1024,) for g in m.bn_gamma)


def test_skip_connection_indices():
    assert SKIP_FROM == 1  # output of layer 2
    assert SKIP_TO == 4  # input of layer 5


def test_skip_connection_changes_output():
    """Zeroing layers 3-4 must not sever the path from layer 2 to layer 5."""
    m = init_model(seed=1, input_dim=12, hidden=8)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 12))
    base = forward(m, x, training=True)
    for i in range(SKIP_FROM + 1, SKIP_TO):
        m.weights[i][:] = 0.0
        m.bn_gamma[i][:] = 0.0
    cut = forward(m, x, training=True)
    # with the skip connection the output still depends on the input
    assert np.std(cut) > 1e-9
    assert not np.allclose(base, cut)


def test_forward_outputs_probabilities():
    m = init_model(seed=3, input_dim=20, hidden=16)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((30, 20))
    p = forward(m, x, training=True)
    assert p.shape == (30,)
    assert np.all((p > 0) & (p < 1))
    single = forward(m, x[0], training=True)
    assert isinstance(single, float)


def test_forward_rejects_non_finite():
    m = init_model(seed=5, input_dim=4, hidden=8)
    with pytest.raises(ModelError):
        forward(m, np.array([1.0, np.nan, 0.0, 0.0]))


def test_inference_uses_running_stats():
    m = init_model(seed=6, input_dim=6, hidden=8)
    x = np.random.default_rng(7).standard_normal((4, 6))
    a = forward(m, x, training=False)
    b = forward(m, x[:2], training=False)
    # inference-mode outputs are batch-independent
    assert np.allclose(a[:2], b, atol=1e-12)


# ---------------------------------------------------------------------------
# Loss


def test_bce_loss_oracle():
    p = np.array([0.9, 0.1, 0.5])
    y = np.array([1.0, 0.0, 1.0])
    want = -(np.log(0.9) + np.log(0.9) + np.log(0.5)) / 3
    assert abs(loss(p, y) - want) < 1e-12


def test_bce_loss_clamps():
    assert np.isfinite(loss(np.array([0.0, 1.0]), np.array([1.0, 0.0])))


# ---------------------------------------------------------------------------
# Gradient check


def _numeric_grad(model, x, y, arr, idx, h=1e-6, training=True):
    old = arr[idx]
    arr[idx] = old + h
    lp, _ = gradients(model, x, y, training=training)
    arr[idx] = old - h
    lm, _ = gradients(model, x, y, training=training)
    arr[idx] = old
    return (lp - lm) / (2 * h)


@pytest.mark.parametrize("training", [True, False])
def test_gradients_match_finite_differences(training):
    rng = np.random.default_rng(8)
    model = init_model(seed=9, input_dim=12, hidden=8)
    x = rng.standard_normal((16, 12))
    y = (rng.random(16) > 0.5).astype(float)
    _, grads = gradients(model, x, y, training=training)
    checked = 0
    for name, arr in model.flat_parameters():
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        n_check = min(30, flat.size)
        for idx in rng.choice(flat.size, size=n_check, replace=False):
            num = _numeric_grad(model, x, y, flat, idx, training=training)
            ana = gflat[idx]
            if abs(num - ana) < 5e-9:
                # below central-difference roundoff noise (e.g. biases are
                # exactly cancelled by batch normalization)
                checked += 1
                continue
            denom = max(abs(num), abs(ana))
            assert abs(num - ana) / denom < 1e-4, f"{name}[{idx}]: {num} vs {ana}"
            checked += 1
    assert checked > 300


# ---------------------------------------------------------------------------
# Training


def _separable_data(rng, n=1000, dim=16, margin=0.4):
    """Linearly separable labels with a margin around the boundary."""
    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)
    chunks = []
    while sum(len(c) for c in chunks) < n:
        x = rng.standard_normal((2 * n, dim))
        chunks.append(x[np.abs(x @ w) > margin])
    x = np.vstack(chunks)[:n]
    return x, (x @ w > 0).astype(float)


def test_training_learns_separable_data():
    rng = np.random.default_rng(10)
    x, y = _separable_data(rng)
    split = 800
    config = TrainConfig(epochs=20, hidden=64, seed=0, learning_rate=3e-3)
    model, logs = train(x[:split], y[:split], config, holdout=(x[split:], y[split:]))
    assert len(logs) == 20
    assert logs[-1].holdout_accuracy > 0.95
    assert logs[-1].mean_loss < logs[0].mean_loss


def test_training_deterministic_per_seed():
    rng = np.random.default_rng(11)
    x, y = _separable_data(rng, n=200, dim=8)
    config = TrainConfig(epochs=3, hidden=16, seed=5)
    m1, _ = train(x, y, config)
    m2, _ = train(x, y, config)
    for (n1, a1), (n2, a2) in zip(m1.flat_parameters(), m2.flat_parameters()):
        assert n1 == n2
        assert np.array_equal(a1, a2)


def test_training_warns_on_single_class():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((50, 8))
    y = np.ones(50)
    warnings = []
    train(x, y, TrainConfig(epochs=1, hidden=8), warn=warnings.append)
    assert any("single class" in w for w in warnings)


def test_learning_rate_decay_applied():
    config = TrainConfig()
    assert config.decay_epochs == (10, 15)
    assert config.decay_factor == 0.5
    assert config.epochs == 20
    assert config.batch_size == 128
    assert config.learning_rate == 1e-4


def test_write_training_log(tmp_path):
    from cgrkit.model import EpochLog

    path = tmp_path / "log.csv"
    write_training_log([EpochLog(1, 0.5, 0.8), EpochLog(2, 0.4, None)], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,mean_loss,holdout_accuracy"
    assert lines[1].startswith("1,0.5")
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# Decision bank and serialization


def test_model_save_load_bitwise(tmp_path):
    m = init_model(seed=13, input_dim=10, hidden=8)
    path = tmp_path / "model.bin"
    save_model(m, path)
    back = load_model(path)
    save_model(back, tmp_path / "model2.bin")
    assert path.read_bytes() == (tmp_path / "model2.bin").read_bytes()
    rng = np.random.default_rng(14)
    x = rng.standard_normal((5, 10))
    # float32 storage: predictions agree to storage precision
    assert np.allclose(forward(back, x), forward(m, x), atol=1e-5)


def test_bank_save_load_and_decide(tmp_path):
    models = {i: init_model(seed=i, input_dim=6, hidden=8) for i in range(3)}
    bank = DecisionBank(models)
    path = tmp_path / "bank.bin"
    save_bank(bank, path)
    back = load_bank(path)
    assert sorted(back.models) == [0, 1, 2]
    save_bank(back, tmp_path / "bank2.bin")
    assert path.read_bytes() == (tmp_path / "bank2.bin").read_bytes()

    class FakeCandidate:
        grasp_type_id = 1

    class FakeCgr:
        @staticmethod
        def flatten():
            return np.zeros(6)

    p = back.decide(FakeCandidate(), FakeCgr())
    assert 0.0 <= p <= 1.0
    FakeCandidate.grasp_type_id = 9
    with pytest.raises(ModelError):
        back.decide(FakeCandidate(), FakeCgr())


def test_load_model_rejects_bank(tmp_path):
    bank = DecisionBank({i: init_model(seed=i, input_dim=4, hidden=8) for i in range(2)})
    save_bank(bank, tmp_path / "b.bin")
    with pytest.raises(ModelError):
        load_model(tmp_path / "b.bin")


def test_load_bank_bad_magic(tmp_path):
    (tmp_path / "junk.bin").write_bytes(b"NOTMAGIC" + b"\0" * 32)
    with pytest.raises(ModelError):
        load_bank(tmp_path / "junk.bin")
