"""Acceptance gate: one test per criterion, one printed PASS line each.

Criteria 6-8 train models end to end and dominate the runtime (the whole
module takes roughly 15-20 minutes on a desktop CPU; criterion 6 alone stays
inside its 10-minute budget). Run with `pytest tests/test_acceptance.py -v -s`
to see the per-criterion lines as they complete.
"""
import math
import time

import numpy as np
from scipy.linalg import expm

from conftest import synthesize_features, train_and_score
from wallsense import channel, ris
from wallsense.autodiff import Tensor
from wallsense.cli import main as cli_main
from wallsense.model import ModelConfig, ablation_variant, build_model
from wallsense.preprocess import (FilterSpec, design_butterworth, segment_count,
                                  sos_frequency_response)
from wallsense.ssm import (ContinuousSsm, SelectiveParams, apply_kernel,
                           conv_kernel, recurrent_scan,
                           selective_scan_parallel, selective_scan_sequential,
                           zoh_discretize)
from wallsense.training import (TrainConfig, cross_entropy, evaluate, train)


def report(criterion: int, passed: bool, detail: str):
    print(f"\n[criterion {criterion}] {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# 1. Wall attenuation values
# ---------------------------------------------------------------------------

def test_criterion_1_wall_attenuation():
    got_a = channel.wall_attenuation_rate(channel.WallModel(5.5, 0.11, 0.3))
    got_b = channel.wall_attenuation_rate(channel.WallModel(3.58, 0.11, 0.3))
    want_a = 1636.0 * 0.11 / math.sqrt(5.5)
    want_b = 1636.0 * 0.11 / math.sqrt(3.58)
    ok = (abs(got_a - want_a) / want_a < 1e-6 and abs(got_b - want_b) / want_b < 1e-6)
    report(1, ok, f"alpha(5.5)={got_a:.4f} dB/m, alpha(3.58)={got_b:.4f} dB/m "
                  f"(hand values {want_a:.4f}, {want_b:.4f})")


# ---------------------------------------------------------------------------
# 2. Greedy surface gain statistics and oracle bound
# ---------------------------------------------------------------------------

def test_criterion_2_greedy_gain():
    rep = ris.array_gain_report(100, (16, 16), seed=2024)
    mean_db = rep.mean_db

    monotone = True
    for seed in range(20):
        chan = ris.CascadeChannel.random(256, seed=seed)
        _, trace = ris.greedy_optimize(chan, 16, 16)
        vals = trace.values
        monotone &= all(b >= a for a, b in zip(vals, vals[1:]))

    grids = [(1, 2), (2, 2), (1, 4), (2, 4), (2, 6), (3, 4), (2, 8), (4, 4)]
    bounded = True
    for i in range(200):
        rows, cols = grids[i % len(grids)]
        chan = ris.CascadeChannel.random(rows * cols, seed=10_000 + i)
        _, trace = ris.greedy_optimize(chan, rows, cols)
        _, best = ris.exhaustive_oracle(chan, rows, cols)
        bounded &= trace.values[-1] <= best + 1e-9

    ok = 8.0 <= mean_db <= 15.0 and monotone and bounded
    report(2, ok, f"mean gain {mean_db:.2f} dB over 100 16x16 trials "
                  f"(band [8,15], published 11.7); traces monotone={monotone}; "
                  f"greedy<=oracle on 200 small channels={bounded}")


# ---------------------------------------------------------------------------
# 3. SSM oracle equivalences
# ---------------------------------------------------------------------------

def test_criterion_3_ssm_oracles():
    rng = np.random.default_rng(3)

    worst_zoh = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        sys = ContinuousSsm(np.diag(-rng.uniform(0.1, 3.0, n)),
                            rng.standard_normal((n, 1)), rng.standard_normal((1, n)),
                            float(rng.uniform(0.05, 0.8)))
        d = zoh_discretize(sys)
        a_ref = expm(sys.delta * sys.A)
        b_ref = np.linalg.solve(sys.delta * sys.A,
                                (a_ref - np.eye(n))) @ (sys.delta * sys.B)
        worst_zoh = max(worst_zoh, np.max(np.abs(d.A_bar - a_ref)),
                        np.max(np.abs(d.B_bar - b_ref)))

    worst_conv = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        sys = ContinuousSsm(np.diag(-rng.uniform(0.1, 3.0, n)),
                            rng.standard_normal((n, 1)), rng.standard_normal((1, n)),
                            float(rng.uniform(0.05, 0.8)))
        d = zoh_discretize(sys)
        x = rng.standard_normal(64)
        worst_conv = max(worst_conv, np.max(np.abs(
            recurrent_scan(d, x) - apply_kernel(conv_kernel(d, 64), x))))

    worst_scan = 0.0
    for _ in range(20):
        D, N = int(rng.integers(1, 5)), int(rng.integers(1, 9))
        params = SelectiveParams(
            delta=rng.uniform(1e-3, 0.3, (1024, D)),
            A=-rng.uniform(0.2, 2.5, (D, N)),
            B=rng.standard_normal((1024, N)), C=rng.standard_normal((1024, N)))
        x = rng.standard_normal((1024, D))
        ys = selective_scan_sequential(params, x)
        yp = selective_scan_parallel(params, x)
        worst_scan = max(worst_scan, np.max(np.abs(ys - yp)) / np.max(np.abs(ys)))

    ok = worst_zoh < 1e-10 and worst_conv < 1e-8 and worst_scan < 1e-6
    report(3, ok, f"ZOH vs expm {worst_zoh:.2e} (<1e-10); recurrence vs kernel "
                  f"{worst_conv:.2e} (<1e-8); parallel vs sequential rel "
                  f"{worst_scan:.2e} (<1e-6)")


# ---------------------------------------------------------------------------
# 4. Gradient correctness on the tiny dual-stream model
# ---------------------------------------------------------------------------

def test_criterion_4_gradient_checks():
    cfg = ModelConfig(input_len=4, input_channels=3, model_dim=2, state_dim=2,
                      num_blocks=1, conv_kernel_width=2, num_classes=3)
    model = build_model(cfg, seed=4)
    # Move residual scales off zero so every block parameter carries signal.
    for name, p in model.named_parameters():
        if name.endswith("alpha"):
            p.data = np.asarray(0.3)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 4, 3))
    y = np.array([0, 1, 2])

    def loss_value():
        return cross_entropy(model(Tensor(x)), y).item()

    cross_entropy(model(Tensor(x)), y).backward()
    eps = 1e-4
    worst = 0.0
    n_checked = 0
    for name, p in model.named_parameters():
        assert p.grad is not None, f"no gradient reached {name}"
        grad = p.grad.copy()
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + eps
            fp = loss_value()
            p.data[idx] = orig - eps
            fm = loss_value()
            p.data[idx] = orig
            num = (fp - fm) / (2 * eps)
            rel = abs(num - grad[idx]) / max(1e-6, abs(num), abs(grad[idx]))
            worst = max(worst, rel)
            n_checked += 1
    ok = worst < 1e-4
    report(4, ok, f"{n_checked} parameter entries finite-difference checked, "
                  f"worst relative error {worst:.2e} (<1e-4)")


# ---------------------------------------------------------------------------
# 5. Butterworth response
# ---------------------------------------------------------------------------

def test_criterion_5_filter_response():
    spec = FilterSpec(order=4, cutoff_hz=10.0, sample_rate_hz=50.0)
    sos = design_butterworth(spec)
    tan_c = math.tan(math.pi * 10.0 / 50.0)
    worst = 0.0
    for f in (2.0, 10.0, 20.0):
        measured = abs(sos_frequency_response(sos, [f], 50.0)[0])
        r = math.tan(math.pi * f / 50.0) / tan_c
        analytic = 1.0 / math.sqrt(1.0 + r ** 8)
        worst = max(worst, abs(measured - analytic) / analytic)
    cutoff_db = 20 * math.log10(abs(sos_frequency_response(sos, [10.0], 50.0)[0]))
    ok = worst < 0.01 and abs(cutoff_db - (-3.0103)) < 0.05
    report(5, ok, f"prototype match worst rel err {worst:.2e} at 2/10/20 Hz (<1%); "
                  f"cutoff gain {cutoff_db:.4f} dB (expect -3.01 +/- 0.05)")


# ---------------------------------------------------------------------------
# 6. End-to-end synthetic classification at desk scale
# ---------------------------------------------------------------------------

def test_criterion_6_end_to_end_accuracy():
    t0 = time.time()
    feats, labels, (tr, va, te, _), snr = synthesize_features(
        freq_bins=64, samples_per_class=50, noise=2e-4, jitter=1.0, data_seed=1234)
    model = build_model(ModelConfig(), seed=0)
    tcfg = TrainConfig(lr=1e-3, batch_size=32, epochs=50, seed=0,
                       early_stop_patience=12)
    rep = train(model, feats[tr], labels[tr], feats[va], labels[va], tcfg)
    acc = evaluate(model, feats[te], labels[te])["accuracy"]
    minutes = (time.time() - t0) / 60.0
    ok = acc >= 0.90 and len(rep.epochs) <= 50
    report(6, ok, f"test accuracy {acc:.4f} (>=0.90) after {len(rep.epochs)} epochs "
                  f"(<=50, lr=1e-3, batch 32) on 300 samples at {snr:.1f} dB SNR; "
                  f"{minutes:.1f} min")


# ---------------------------------------------------------------------------
# 7. Surface-on vs surface-off accuracy ordering
# ---------------------------------------------------------------------------

def test_criterion_7_ris_contrast():
    t0 = time.time()
    mcfg = ModelConfig(input_channels=24, model_dim=16, state_dim=4, num_blocks=1)
    f_on, l_on, s_on, snr_on = synthesize_features(
        24, 30, noise=4e-3, jitter=0.8, data_seed=777, with_ris=True,
        extra_eval_per_class=15)
    f_off, l_off, s_off, snr_off = synthesize_features(
        24, 30, noise=4e-3, jitter=0.8, data_seed=777, with_ris=False,
        extra_eval_per_class=15)
    gap = snr_on - snr_off
    assert gap >= 10.0, f"precondition: configured SNR gap {gap:.1f} dB < 10 dB"

    on_accs = [train_and_score(f_on, l_on, s_on, mcfg, 4e-3, 45, s) for s in (0, 1, 2)]
    off_accs = [train_and_score(f_off, l_off, s_off, mcfg, 4e-3, 45, s) for s in (0, 1, 2)]
    mean_on, mean_off = float(np.mean(on_accs)), float(np.mean(off_accs))
    ok = mean_on > mean_off
    report(7, ok, f"surface-on mean accuracy {mean_on:.4f} > surface-off "
                  f"{mean_off:.4f} over 3 seeds (SNR gap {gap:.1f} dB >= 10); "
                  f"{(time.time()-t0)/60:.1f} min")


# ---------------------------------------------------------------------------
# 8. Ablation ordering
# ---------------------------------------------------------------------------

def test_criterion_8_ablation_ordering():
    t0 = time.time()
    feats, labels, (tr, va, _, ev), _ = synthesize_features(
        24, 24, noise=1e-5, jitter=0.5, data_seed=555, extra_eval_per_class=20)
    means = {}
    for variant in ("full", "concat-fusion", "freq-only", "time-only"):
        mcfg = ModelConfig(input_channels=24, model_dim=16, state_dim=4,
                           num_blocks=1, variant=variant)
        accs = []
        for seed in (0, 1, 2):
            model = ablation_variant(mcfg, variant, seed=seed)
            tcfg = TrainConfig(lr=4e-3, batch_size=32, epochs=70, seed=seed,
                               early_stop_patience=999, stop_at_val_acc=2.0)
            train(model, feats[tr], labels[tr], feats[va], labels[va], tcfg)
            accs.append(evaluate(model, feats[ev], labels[ev])["accuracy"])
        means[variant] = float(np.mean(accs))
    single_floor = min(means["freq-only"], means["time-only"])
    ok = (means["full"] >= means["concat-fusion"] - 0.01
          and means["concat-fusion"] >= single_floor - 0.01)
    report(8, ok, f"mean accuracies over 3 seeds: full={means['full']:.4f} >= "
                  f"concat={means['concat-fusion']:.4f} >= min(single)={single_floor:.4f} "
                  f"(1pp inversion tolerance); {(time.time()-t0)/60:.1f} min")


# ---------------------------------------------------------------------------
# 9. Byte-level determinism of gen-data and train
# ---------------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    import json
    cfg = {
        "scene": {"freq_bins": 6, "noise_variance": 1e-5, "rng_seed": 31,
                  "static_path_count": 2},
        "ris": {"rows": 4, "cols": 4, "gain_report_trials": 3},
        "dataset": {"samples_per_class": 3, "with_ris": True, "jitter_scale": 0.5},
        "model": {"model_dim": 4, "state_dim": 2, "num_blocks": 1},
        "training": {"epochs": 3, "lr": 1e-3, "val_fraction": 0.34,
                     "test_fraction": 0.33, "batch_size": 4, "seed": 0},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))

    pairs = []
    for tag in ("a", "b"):
        data_dir = tmp_path / f"data_{tag}"
        cli_main(["gen-data", "--config", str(cfg_path), "--out", str(data_dir)])
        feat_dir = tmp_path / f"feat_{tag}"
        cli_main(["preprocess", "--config", str(cfg_path), "--out", str(feat_dir),
                  str(data_dir / "dataset_ris_off.bin")])
        run_dir = tmp_path / f"run_{tag}"
        cli_main(["train", "--config", str(cfg_path), "--out", str(run_dir),
                  str(feat_dir / "features.bin")])
        pairs.append({
            "off": (data_dir / "dataset_ris_off.bin").read_bytes(),
            "on": (data_dir / "dataset_ris_on.bin").read_bytes(),
            "ckpt": (run_dir / "checkpoint.bin").read_bytes(),
        })
    same = {k: pairs[0][k] == pairs[1][k] for k in pairs[0]}
    ok = all(same.values())
    report(9, ok, f"re-run byte identity: containers off={same['off']} "
                  f"on={same['on']}, checkpoint={same['ckpt']}")


# ---------------------------------------------------------------------------
# 10. Segmentation arithmetic
# ---------------------------------------------------------------------------

def test_criterion_10_segmentation():
    eight = segment_count(2000, 250, 250)
    # Documented corpus: 7 classes x 6 subjects x 20 trials of 2000 steps,
    # window 250, stride 300.
    corpus_total = 7 * 6 * 20 * segment_count(2000, 250, 300)
    within = abs(corpus_total - 5000) / 5000
    ok = eight == 8 and within < 0.10
    report(10, ok, f"2000/250/250 -> {eight} segments (expect 8); corpus "
                   f"-> {corpus_total} samples ({within*100:.1f}% from ~5000, <10%)")
