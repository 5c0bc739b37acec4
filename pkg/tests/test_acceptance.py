"""Acceptance suite: one test per primary criterion, each printing a verdict line.

The training-based criteria (7, 8, 9) share one session fixture that trains
the vgg_m baseline and the single-placement FEFA model on the default
synthetic corpus for three seeds.  Expect about 25 minutes on one CPU.
"""

import math
import time

import numpy as np
import pytest

from fefakit import dsp
from fefakit import fefa as F
from fefakit.checkpoint import to_bytes
from fefakit.cli import main
from fefakit.config import RunConfig
from fefakit.exp.corpus import SyntheticCorpusSpec, generate_corpus
from fefakit.exp.metrics import build_trials, compute_eer
from fefakit.exp.robustness import robustness_sweep
from fefakit.exp.training import TrainConfig, evaluate, featurize_many, train
from fefakit.gradcheck import run_suite
from fefakit.nn import BACKBONES, ModelSpec, build_model
from oracles import exhaustive_eer

SEEDS = (0, 1, 2)


def test_criterion_01_gradient_suite(verdict):
    start = time.process_time()
    results = run_suite(instances=10, model_instances=10)
    elapsed = time.process_time() - start
    failed = [r.name for r in results if not r.passed]
    worst_layer = max(r.max_rel_error for r in results if not r.name.startswith("model"))
    worst_model = max(r.max_rel_error for r in results if r.name.startswith("model"))
    ok = not failed and elapsed < 120
    verdict(1, ok, f"{len(results)} checks x 10 instances, worst layer {worst_layer:.1e} (tol 1e-5), "
                   f"worst model {worst_model:.1e} (tol 1e-4), {elapsed:.0f} s CPU (limit 120)"
                   + (f", failed: {failed}" if failed else ""))
    assert ok


def test_criterion_02_identity_at_init(verdict):
    rng = np.random.default_rng(2)
    x = np.abs(rng.standard_normal((100, 1, 257, 20))) * rng.uniform(0.1, 10, (100, 1, 1, 1))
    worst = 0.0
    for backbone in BACKBONES:
        base = build_model(ModelSpec(backbone=backbone, seed=5)).forward(x)
        for mode in ("single", "multi"):
            out = build_model(ModelSpec(backbone=backbone, fefa=mode, seed=5)).forward(x)
            worst = max(worst, float(np.max(np.abs(out - base))))
    ok = worst <= 1e-12
    verdict(2, ok, f"zero-init FEFA vs plain backbone, 3 backbones x single/multi x 100 inputs: "
                   f"max |logit diff| {worst:.1e} (limit 1e-12)")
    assert ok


def test_criterion_03_simplex_and_shift(verdict):
    rng = np.random.default_rng(3)
    worst_sum, worst_shift, min_p = 0.0, 0.0, 1.0
    for _ in range(2000):
        n = int(rng.integers(1, 520))
        z = rng.standard_normal(n) * rng.uniform(0.1, 50)
        p = F.softmax(z)
        worst_sum = max(worst_sum, abs(p.sum() - 1))
        min_p = min(min_p, float(p.min()))
        c = rng.uniform(-100, 100)
        worst_shift = max(worst_shift, float(np.max(np.abs(F.softmax(z + c) - p))))
    # attention weights produced by the layer itself
    for _ in range(200):
        bins = int(rng.integers(2, 64))
        params = F.FefaParams(rng.standard_normal((bins, bins)) * 3, rng.standard_normal(bins))
        _, cache = F.fefa_forward(rng.standard_normal((bins, 7)), params)
        worst_sum = max(worst_sum, float(abs(cache.p.sum() - 1)))
        min_p = min(min_p, float(cache.p.min()))
    ok = worst_sum <= 1e-9 and min_p >= 0 and worst_shift <= 1e-12
    verdict(3, ok, f"max |sum p - 1| {worst_sum:.1e} (1e-9), min p {min_p:.1e} (>= 0), "
                   f"max shift deviation {worst_shift:.1e} (1e-12)")
    assert ok


def test_criterion_04_complexity(verdict):
    full = F.param_count(F.FefaParams.zeros(257))
    ratios = [F.count_macs(F.FefaParams.zeros(2 * b), (2 * b, 1)) /
              F.count_macs(F.FefaParams.zeros(b), (b, 1)) for b in (16, 64, 257, 512)]
    local_ok = all(F.param_count(F.FefaParams.zeros(bins, "local", w)) <= bins * (w + 1)
                   for bins in (4, 16, 257) for w in (1, 3, 9) if w <= bins)
    ok = full == 66306 and all(3.5 <= r <= 4.5 for r in ratios) and local_ok
    verdict(4, ok, f"param_count(full, 257) = {full} (66306); MAC ratio 2b/b at frames=1 "
                   f"{[round(r, 3) for r in ratios]} (in [3.5, 4.5]); local <= bins*(w+1): {local_ok}")
    assert ok


def test_criterion_05_dsp(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(500):
        frame = dsp.apply_window(rng.standard_normal(400))
        p = dsp.power_spectrum(frame, 512)
        lhs = p[0] + p[256] + 2 * p[1:256].sum()
        worst = max(worst, abs(lhs - 512 * np.sum(frame ** 2)) / (512 * np.sum(frame ** 2)))
    # Hann-windowed cosine at a bin centre of the analysed frame
    n = 512
    conc = []
    for k0 in range(2, n // 2 - 1):
        x = np.cos(2 * np.pi * k0 * np.arange(n) / n)
        p = dsp.power_spectrum(dsp.apply_window(x), n)
        conc.append(p[k0 - 1:k0 + 2].sum() / p.sum())
    # for context: the default 400-sample window zero-padded to 512 leaks more
    padded = []
    for k0 in range(3, 253):
        p = dsp.power_spectrum(dsp.apply_window(np.cos(2 * np.pi * k0 * np.arange(400) / n)), n)
        padded.append(p[k0 - 1:k0 + 2].sum() / p.sum())
    ok = worst <= 1e-9 and min(conc) >= 0.99
    verdict(5, ok, f"Parseval max rel err {worst:.1e} (1e-9); Hann bin-aligned cosine energy in "
                   f"k0 +/- 1: min {min(conc):.6f} over k0=2..254 (>= 0.99); "
                   f"[info] 400-in-512 zero-padded frame: min {min(padded):.4f}")
    assert ok


def test_criterion_06_eer_oracle(verdict):
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        labels = rng.random(n) < rng.uniform(0.1, 0.9)
        labels[0], labels[1] = True, False
        scores = rng.integers(0, int(rng.integers(2, 40)), n) / 8.0
        if compute_eer(scores, labels) != float(exhaustive_eer(scores.tolist(), labels.tolist())):
            mismatches += 1
    separated = compute_eer(np.r_[rng.random(50), 2 + rng.random(50)], np.r_[np.zeros(50), np.ones(50)])
    random_eer = compute_eer(rng.random(10000), rng.random(10000) < 0.5)
    ok = mismatches == 0 and separated == 0.0 and abs(random_eer - 0.5) <= 0.05
    verdict(6, ok, f"oracle mismatches {mismatches}/1000; separated EER {separated}; "
                   f"uninformative EER {random_eer:.4f} at n=10000 (0.5 +/- 0.05)")
    assert ok


@pytest.fixture(scope="session")
def desk_runs():
    """Default corpus; vgg_m baseline and FEFA-single, three seeds each."""
    cfg = RunConfig()
    corpus = generate_corpus(cfg.corpus_spec())
    features = featurize_many(corpus.waves, cfg.spectrogram_config(), cfg.input_transform)
    trials = build_trials(corpus.test_idx, corpus.labels, cfg.n_trials, cfg.trial_seed)
    runs = {}
    for fefa in ("none", "single"):
        for seed in SEEDS:
            start = time.process_time()
            ckpt, log = train(cfg.model_spec(fefa, seed), corpus, cfg.train_config(seed),
                              cfg.spectrogram_config(), features=features)
            runs[(fefa, seed)] = (ckpt, log, time.process_time() - start)
    return cfg, corpus, trials, runs


def test_criterion_07_desk_training(verdict, desk_runs):
    cfg, corpus, trials, runs = desk_runs
    base_acc = [100 * runs[("none", s)][1][-1]["test_acc"] for s in SEEDS]
    fefa_acc = [100 * runs[("single", s)][1][-1]["test_acc"] for s in SEEDS]
    base_time = max(runs[("none", s)][2] for s in SEEDS)
    epochs = cfg.epochs
    ok = (min(base_acc) >= 90 and epochs <= 15 and base_time < 600
          and np.median(fefa_acc) >= np.median(base_acc) - 1)
    verdict(7, ok, f"vgg_m baseline test acc {[round(a, 2) for a in base_acc]}% after {epochs} epochs "
                   f"(>= 90, <= 15 epochs), slowest run {base_time:.0f} s CPU (< 600); "
                   f"median FEFA-single {np.median(fefa_acc):.2f}% vs baseline "
                   f"{np.median(base_acc):.2f}% (>= baseline - 1)")
    assert ok


def test_criterion_08_robustness(verdict, desk_runs):
    cfg, corpus, trials, runs = desk_runs
    ckpts = [runs[(f, s)][0] for f in ("none", "single") for s in SEEDS]
    start = time.process_time()
    report = robustness_sweep(ckpts, corpus, trials, cfg.snr_db_list, cfg.noise_dists,
                              cfg.noise_seed)
    elapsed = time.process_time() - start
    harsh = min(cfg.snr_db_list)
    parts, ok = [], elapsed < 900
    for dist in cfg.noise_dists:
        base = report.lookup("baseline", dist, harsh)
        fefa = report.lookup("fefa_single", dist, harsh)
        ok = ok and fefa.delta_eer_pct >= base.delta_eer_pct
        parts.append(f"{dist}: dEER fefa {fefa.delta_eer_pct:.1f}% (EER {fefa.eer_pct:.2f}) vs "
                     f"baseline {base.delta_eer_pct:.1f}% (EER {base.eer_pct:.2f})")
    clean_b = report.lookup("baseline", "clean", math.inf).eer_pct
    clean_f = report.lookup("fefa_single", "clean", math.inf).eer_pct
    verdict(8, ok, f"at {harsh:g} dB, median over 3 seeds; " + "; ".join(parts)
                   + f"; clean EER baseline {clean_b:.2f}%, fefa {clean_f:.2f}%; "
                   f"sweep {elapsed:.0f} s CPU (< 900)")
    print(report.to_csv())
    assert ok


def test_criterion_09_reproducibility(verdict, desk_runs, tmp_path):
    cfg, corpus, trials, runs = desk_runs
    # full-scale: retrain one default run and compare checkpoint bytes
    ckpt, log = train(cfg.model_spec("none", 0), corpus, cfg.train_config(0), cfg.spectrogram_config())
    same_ckpt = to_bytes(ckpt) == to_bytes(runs[("none", 0)][0])
    same_log = log == runs[("none", 0)][1]
    # whole CLI pipeline twice on a reduced config
    yaml_text = ("n_speakers: 4\nutterances_per_speaker: 20\nduration_s: 0.5\nepochs: 2\n"
                 "batch_size: 16\nstep_size: 5\nn_trials: 100\nsweep_seeds: [0, 1]\n")
    (tmp_path / "cfg.yaml").write_text(yaml_text)
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        codes = [main(["train", "--config", str(tmp_path / "cfg.yaml"), "--out", str(out)]),
                 main(["noise-test", "--config", str(tmp_path / "cfg.yaml"), "--out", str(out)])]
        files = sorted(p for p in out.rglob("*") if p.is_file())
        outputs.append((codes, {p.relative_to(out): p.read_bytes() for p in files}))
    (codes_a, files_a), (codes_b, files_b) = outputs
    same_cli = codes_a == codes_b == [0, 0] and files_a == files_b and len(files_a) == 7
    ok = same_ckpt and same_log and same_cli
    verdict(9, ok, f"default-config retrain byte-identical checkpoint: {same_ckpt}, identical log: "
                   f"{same_log}; two CLI pipeline runs ({len(files_a)} files: checkpoints, "
                   f"training log, noise report) byte-identical: {same_cli}")
    assert ok


def test_criterion_10_multi_layer(verdict):
    spec = SyntheticCorpusSpec(n_speakers=4, utterances_per_speaker=24, duration_s=0.5, seed=3)
    corpus = generate_corpus(spec)
    features = featurize_many(corpus.waves, dsp.SpectrogramConfig())
    trials = build_trials(corpus.test_idx, corpus.labels, 200, 0)
    tcfg = TrainConfig(epochs=2, batch_size=16, step_size=10)
    ok, notes = True, []
    for backbone in BACKBONES:
        results = {}
        for mode in ("single", "multi"):
            ckpt, log = train(ModelSpec(backbone=backbone, fefa=mode, n_classes=4), corpus, tcfg,
                              features=features)
            acc, eer = evaluate(ckpt, corpus, trials)
            moved = all(np.any(v != 0) for k, v in ckpt.tensors.items() if k.startswith("fefa"))
            finite = all(math.isfinite(r["train_loss"]) for r in log)
            ok = ok and moved and finite and math.isfinite(acc) and math.isfinite(eer)
            results[mode] = (acc, eer, sum(k.endswith(".bias") and k.startswith("fefa")
                                           for k in ckpt.tensors))
        notes.append(f"{backbone}: single acc {results['single'][0]:.1f}% EER {results['single'][1]:.1f}%, "
                     f"multi ({results['multi'][2]} placements) acc {results['multi'][0]:.1f}% "
                     f"EER {results['multi'][1]:.1f}%")
    verdict(10, ok, "multi-layer FEFA trains and evaluates on all backbones; observation: "
                    + "; ".join(notes))
    assert ok
