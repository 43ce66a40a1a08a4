"""Shared fixtures and pipeline helpers for the test suite."""
import numpy as np
import pytest

from wallsense import channel, ris
from wallsense.config import RunConfig
from wallsense.model import ModelConfig, ablation_variant
from wallsense.preprocess import FilterSpec, fit_normalization, lowpass_filter
from wallsense.training import TrainConfig, evaluate, stratified_split, train

ACTIVITY_NAMES = list(channel.ACTIVITY_CLASSES)


def synthesize_features(freq_bins: int, samples_per_class: int, noise: float,
                        jitter: float, data_seed: int, with_ris: bool = False,
                        extra_eval_per_class: int = 0):
    """Run the gen -> amplitude -> filter -> normalize pipeline in memory.

    Returns (features [n, L, M], labels, splits, snr_db) where splits is
    (train, val, test, eval); eval is the test split plus any extra
    hold-out samples generated beyond samples_per_class.
    """
    profiles = channel.default_activity_profiles(jitter)
    cfg = RunConfig()
    cfg.scene.freq_bins = freq_bins
    cfg.scene.noise_variance = noise
    cfg.scene.rng_seed = data_seed
    scene = cfg.scene_template()

    kwargs = {}
    if with_ris:
        chan = ris.CascadeChannel.random(cfg.ris.rows * cfg.ris.cols,
                                         seed=cfg.ris.channel_seed)
        config_mat, _ = ris.greedy_optimize(chan, cfg.ris.rows, cfg.ris.cols)
        n_paths = cfg.scene.static_path_count + 1
        kwargs = dict(with_ris=True, config=config_mat,
                      coupling=channel.ElementPathCoupling.shared(chan, n_paths))

    total = samples_per_class + extra_eval_per_class
    frames = channel.generate_activity_dataset(profiles, scene, total, **kwargs)
    labels = np.array([ACTIVITY_NAMES.index(f.label) for f in frames])
    data = np.stack([f.data for f in frames])
    snr_db = 10 * np.log10((np.mean(np.abs(data) ** 2) - noise) / noise)

    filtered = lowpass_filter(np.abs(data), FilterSpec(4, 10.0, 50.0))
    feats = filtered.transpose(0, 2, 1)

    main_mask = np.zeros(len(frames), bool)
    for c in range(len(ACTIVITY_NAMES)):
        idx = np.nonzero(labels == c)[0]
        main_mask[idx[:samples_per_class]] = True
    main_idx = np.nonzero(main_mask)[0]
    tr, va, te = stratified_split(labels[main_mask], 0.15, 0.15, 0)
    tr, va, te = main_idx[tr], main_idx[va], main_idx[te]
    hold_out = np.nonzero(~main_mask)[0]
    ev = np.concatenate([te, hold_out]) if hold_out.size else te

    stats = fit_normalization(feats, fit_indices=tr)
    return stats.apply(feats), labels, (tr, va, te, ev), float(snr_db)


def train_and_score(feats, labels, splits, mcfg: ModelConfig, lr: float,
                    epochs: int, seed: int, patience: int = 40) -> float:
    """Train one model and return accuracy on the eval split."""
    tr, va, _, ev = splits
    model = ablation_variant(mcfg, mcfg.variant, seed=seed)
    tcfg = TrainConfig(lr=lr, batch_size=32, epochs=epochs, seed=seed,
                       early_stop_patience=patience)
    train(model, feats[tr], labels[tr], feats[va], labels[va], tcfg)
    return evaluate(model, feats[ev], labels[ev])["accuracy"]


@pytest.fixture(scope="session")
def reduced_model_config():
    return ModelConfig(input_channels=24, model_dim=16, state_dim=4, num_blocks=1)
