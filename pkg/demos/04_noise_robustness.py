"""
Test-time noise sweep
=====================

Models trained on clean data are evaluated with Gaussian and uniform noise
added to every test utterance.  The default here is a reduced setting; pass
``--full`` for the default corpus and three training seeds per variant
(roughly 20 minutes on one CPU).
"""

import sys

from fefakit.config import RunConfig
from fefakit.exp.corpus import generate_corpus
from fefakit.exp.metrics import build_trials
from fefakit.exp.robustness import robustness_sweep
from fefakit.exp.training import featurize_many, train

if "--full" in sys.argv:
    cfg = RunConfig()
else:
    cfg = RunConfig(n_speakers=4, utterances_per_speaker=30, duration_s=0.5, epochs=3,
                    batch_size=16, step_size=10, n_trials=200, sweep_seeds=[0, 1, 2])

corpus = generate_corpus(cfg.corpus_spec())
features = featurize_many(corpus.waves, cfg.spectrogram_config(), cfg.input_transform)
trials = build_trials(corpus.test_idx, corpus.labels, cfg.n_trials, cfg.trial_seed)

checkpoints = []
for variant in cfg.sweep_variants:
    for seed in cfg.sweep_seeds:
        ckpt, _ = train(cfg.model_spec(variant, seed), corpus, cfg.train_config(seed),
                        cfg.spectrogram_config(), features=features)
        checkpoints.append(ckpt)

report = robustness_sweep(checkpoints, corpus, trials, cfg.snr_db_list, cfg.noise_dists,
                          cfg.noise_seed)
print(report.to_csv())

# ΔEER is negative when noise hurts; compare the variants at the harshest SNR.
worst = min(cfg.snr_db_list)
for dist in cfg.noise_dists:
    base = report.lookup("baseline", dist, worst).delta_eer_pct
    fefa = report.lookup("fefa_single", dist, worst).delta_eer_pct
    print(f"{dist} at {worst:g} dB: ΔEER baseline {base:.1f}%, FEFA {fefa:.1f}%")
