"""Optimizer, loss, split, metric, and training-loop tests."""
import numpy as np
import pytest

from wallsense.autodiff import GradientFlowError, Tensor
from wallsense.model import ModelConfig, build_model
from wallsense.training import (Adam, DivergenceError, TrainConfig,
                                confusion_matrix, cross_entropy, evaluate,
                                metrics_from_confusion, stratified_split, train)

TINY = ModelConfig(input_len=6, input_channels=4, model_dim=4, state_dim=2,
                   num_blocks=1, conv_kernel_width=2, num_classes=3)


def make_toy_data(n_per_class=8, n_classes=3, L=6, M=4, seed=0):
    """Linearly separable toy sequences: class-specific channel offsets."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c in range(n_classes):
        offset = np.zeros(M)
        offset[c % M] = 2.5
        x = rng.standard_normal((n_per_class, L, M)) * 0.3 + offset
        xs.append(x)
        ys.append(np.full(n_per_class, c))
    return np.concatenate(xs), np.concatenate(ys)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_zero_lr_keeps_parameters():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True, name="p")
    opt = Adam([p], lr=0.0)
    p.grad = np.array([0.5, -0.5])
    opt.step()
    assert np.array_equal(p.data, [1.0, 2.0])


def test_adam_first_step_size_is_lr():
    # With bias correction, the first step moves by ~lr regardless of scale.
    p = Tensor(np.array([0.0]), requires_grad=True, name="p")
    opt = Adam([p], lr=0.01)
    p.grad = np.array([123.0])
    opt.step()
    assert p.data[0] == pytest.approx(-0.01, rel=1e-6)


def test_adam_missing_gradient_reported():
    p = Tensor(np.ones(2), requires_grad=True, name="orphan")
    opt = Adam([p], lr=0.1)
    with pytest.raises(GradientFlowError, match="orphan"):
        opt.step()


def test_adam_hand_computed_two_steps():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    m = v = 0.0
    theta = 1.0
    for t in range(1, 3):
        g = 2.0 * theta  # d/dtheta of theta^2
        p.grad = np.array([2.0 * p.data[0]])
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1 - 0.9 ** t)
        vh = v / (1 - 0.999 ** t)
        theta = theta - 0.1 * mh / (np.sqrt(vh) + 1e-8)
        assert p.data[0] == pytest.approx(theta, rel=1e-12)


# ---------------------------------------------------------------------------
# Cross-entropy
# ---------------------------------------------------------------------------

def test_cross_entropy_uniform_logits():
    logits = Tensor(np.zeros((4, 6)))
    loss = cross_entropy(logits, np.zeros(4, dtype=int))
    assert loss.item() == pytest.approx(np.log(6.0), rel=1e-12)


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(0)
    logits = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    y = np.array([1, 3, 0])
    cross_entropy(logits, y).backward()
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    onehot = np.eye(4)[y]
    assert np.allclose(logits.grad, (p - onehot) / 3.0, atol=1e-10)


def test_linear_weight_gradient_hand_case():
    # loss = sum(x @ W): dW = column sums of x broadcast over outputs.
    from wallsense.autodiff import matmul
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    w = Tensor(np.zeros((2, 2)), requires_grad=True)
    matmul(x, w).sum().backward()
    assert np.allclose(w.grad, [[4.0, 4.0], [6.0, 6.0]])


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def test_stratified_split_proportions_and_disjoint():
    labels = np.repeat(np.arange(6), 50)
    tr, va, te = stratified_split(labels, 0.15, 0.15, seed=0)
    assert len(tr) + len(va) + len(te) == 300
    assert len(va) == 6 * 8 and len(te) == 6 * 8
    assert not (set(tr) & set(va) or set(tr) & set(te) or set(va) & set(te))
    for split in (tr, va, te):
        counts = np.bincount(labels[split], minlength=6)
        assert np.all(counts == counts[0])


def test_stratified_split_deterministic_and_seed_sensitive():
    labels = np.repeat(np.arange(3), 20)
    a = stratified_split(labels, 0.2, 0.2, seed=1)
    b = stratified_split(labels, 0.2, 0.2, seed=1)
    c = stratified_split(labels, 0.2, 0.2, seed=2)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))


def test_split_rejects_tiny_classes():
    labels = np.array([0, 0, 1])
    with pytest.raises(ValueError):
        stratified_split(labels, 0.4, 0.4, seed=0)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def test_metrics_perfect_prediction():
    cm = np.diag([5, 7, 9])
    m = metrics_from_confusion(cm)
    assert m["accuracy"] == 1.0
    assert m["macro_precision"] == 1.0
    assert m["macro_recall"] == 1.0
    assert m["macro_f1"] == 1.0


def test_metrics_hand_built_two_class():
    m = metrics_from_confusion(np.array([[3, 1], [1, 3]]))
    assert m["accuracy"] == pytest.approx(0.75)
    assert m["macro_precision"] == pytest.approx(0.75)
    assert m["macro_recall"] == pytest.approx(0.75)
    assert m["macro_f1"] == pytest.approx(0.75)


def test_metrics_uniform_random_predictions():
    rng = np.random.default_rng(0)
    y_true = np.repeat(np.arange(6), 100)
    y_pred = rng.integers(0, 6, 600)
    m = metrics_from_confusion(confusion_matrix(y_true, y_pred, 6))
    p = 1.0 / 6.0
    sigma = np.sqrt(p * (1 - p) / 600)
    assert abs(m["accuracy"] - p) < 3 * sigma


def test_metrics_empty_split_rejected():
    with pytest.raises(ValueError):
        metrics_from_confusion(np.zeros((3, 3)))


def test_confusion_matrix_layout():
    cm = confusion_matrix([0, 0, 1], [0, 1, 1], 2)
    assert np.array_equal(cm, [[1, 1], [0, 1]])


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def test_zero_lr_training_keeps_parameters():
    x, y = make_toy_data()
    model = build_model(TINY, seed=0)
    before = {n: p.copy() for n, p in model.state_dict().items()}
    cfg = TrainConfig(lr=0.0, batch_size=8, epochs=1, seed=0,
                      early_stop_patience=100, stop_at_val_acc=2.0)
    train(model, x, y, x[:6], y[:6], cfg)
    after = model.state_dict()
    # Best-checkpoint restore keeps the (unchanged) initial parameters.
    for n in before:
        assert np.array_equal(before[n], after[n]), n


def test_single_sample_memorization():
    x, y = make_toy_data(n_per_class=1)
    model = build_model(TINY, seed=0)
    cfg = TrainConfig(lr=1e-2, batch_size=3, epochs=200, seed=0,
                      early_stop_patience=10_000, stop_at_val_acc=2.0)
    report = train(model, x, y, x, y, cfg)
    assert report.epochs[-1]["train_loss"] < 0.01
    assert len(report.epochs) <= 200


def test_training_deterministic_under_seed():
    x, y = make_toy_data()
    cfg = TrainConfig(lr=1e-3, batch_size=8, epochs=3, seed=7,
                      early_stop_patience=100, stop_at_val_acc=2.0)
    m1 = build_model(TINY, seed=7)
    r1 = train(m1, x, y, x[:6], y[:6], cfg)
    m2 = build_model(TINY, seed=7)
    r2 = train(m2, x, y, x[:6], y[:6], cfg)
    assert r1.epochs == r2.epochs
    for (n1, p1), (_, p2) in zip(m1.named_parameters(), m2.named_parameters()):
        assert np.array_equal(p1.data, p2.data), n1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_with_diagnostic():
    x, y = make_toy_data()
    model = build_model(TINY, seed=0)
    model.head_out.weight.data += 1e160  # force overflow in the first step
    cfg = TrainConfig(lr=1.0, batch_size=8, epochs=2, seed=0)
    with pytest.raises(DivergenceError, match="learning rate"):
        train(model, x * 1e160, y, x[:6], y[:6], cfg)


def test_best_checkpoint_restored():
    x, y = make_toy_data(n_per_class=6)
    model = build_model(TINY, seed=1)
    cfg = TrainConfig(lr=5e-3, batch_size=8, epochs=6, seed=1,
                      early_stop_patience=100, stop_at_val_acc=2.0)
    report = train(model, x, y, x, y, cfg)
    assert 0 <= report.best_epoch < len(report.epochs)
    best_val = report.epochs[report.best_epoch]["val_accuracy"]
    assert best_val == report.best_val_accuracy
    final = evaluate(model, x, y)
    assert final["accuracy"] == pytest.approx(best_val)


def test_one_step_loss_decrease_smoke():
    """Directional smoke check: one Adam step on a fixed batch lowers the loss
    for small learning rates; isolated violations are flagged, not failed."""
    violations = []
    for seed in range(20):
        x, y = make_toy_data(n_per_class=4, seed=seed)
        model = build_model(TINY, seed=seed)
        opt = Adam(model.parameters(), lr=1e-3)
        loss0 = cross_entropy(model(Tensor(x)), y)
        loss0.backward()
        opt.step()
        loss1 = cross_entropy(model(Tensor(x)), y)
        if loss1.item() >= loss0.item():
            violations.append(seed)
    if violations:
        print(f"flagged seeds without one-step decrease: {violations}")
    assert len(violations) <= 1  # < 5% of 20 seeds


def test_evaluate_empty_split_rejected():
    model = build_model(TINY, seed=0)
    with pytest.raises(ValueError):
        evaluate(model, np.zeros((0, 6, 4)), np.zeros(0, dtype=int))
