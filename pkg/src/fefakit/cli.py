"""``fefakit`` command line.

Exit codes: 0 success, 1 failed check, 2 missing or invalid input artifact,
3 invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from fefakit import checkpoint as ckpt_io
from fefakit import io as fio
from fefakit.config import ConfigError, RunConfig, load_config
from fefakit.dsp import SignalTooShortError, spectrogram

EXIT_OK, EXIT_CHECK, EXIT_ARTIFACT, EXIT_CONFIG = 0, 1, 2, 3


class ArtifactError(Exception):
    pass


def _expected_hash(cfg: RunConfig, fefa=None, seed=None) -> str:
    from fefakit.exp.training import run_hash
    return run_hash(cfg.model_spec(fefa, seed), cfg.train_config(seed),
                    cfg.spectrogram_config(), cfg.corpus_spec())


def _load_checkpoint(path, expected_hash=None):
    try:
        return ckpt_io.load(path, expected_hash)
    except ckpt_io.ConfigHashMismatch:
        raise
    except FileNotFoundError as exc:
        raise ArtifactError(f"checkpoint not found: {path}") from exc
    except (ckpt_io.CheckpointError, OSError) as exc:
        raise ArtifactError(f"invalid checkpoint {path}: {exc}") from exc


def _read_wav(path):
    try:
        return fio.read_wav(path)
    except FileNotFoundError as exc:
        raise ArtifactError(f"WAV not found: {path}") from exc
    except fio.InvalidAudioError as exc:
        raise ArtifactError(str(exc)) from exc


def _corpus_and_trials(cfg: RunConfig):
    from fefakit.exp.corpus import generate_corpus
    from fefakit.exp.metrics import build_trials
    corpus = generate_corpus(cfg.corpus_spec())
    trials = build_trials(corpus.test_idx, corpus.labels, cfg.n_trials, cfg.trial_seed)
    return corpus, trials


def _write(out: Path, name: str, payload):
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    if isinstance(payload, bytes):
        path.write_bytes(payload)
    else:
        path.write_text(payload)
    print(f"wrote {path}")
    return path


def cmd_featurize(args, cfg):
    wave = _read_wav(args.wav)
    try:
        spec = spectrogram(wave, cfg.spectrogram_config())
    except SignalTooShortError as exc:
        raise ArtifactError(f"{args.wav}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    stem = Path(args.wav).stem
    _write(args.out, f"{stem}.csv", fio.matrix_to_csv(spec.values))
    _write(args.out, f"{stem}.pgm", fio.to_pgm(spec.values))
    return EXIT_OK


def cmd_gen_corpus(args, cfg):
    from fefakit.exp.corpus import generate_corpus
    corpus = generate_corpus(cfg.corpus_spec())
    wav_dir = args.out / "corpus"
    wav_dir.mkdir(parents=True, exist_ok=True)
    test = set(corpus.test_idx.tolist())
    lines = ["file,speaker,split"]
    for i, wave in enumerate(corpus.waves):
        name = f"utt{i:05d}.wav"
        fio.write_wav(wav_dir / name, wave)
        lines.append(f"{name},{int(corpus.labels[i])},{'test' if i in test else 'train'}")
    _write(wav_dir, "manifest.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def _train_one(cfg, corpus, features, fefa, seed):
    from fefakit.exp.training import train
    return train(cfg.model_spec(fefa, seed), corpus, cfg.train_config(seed),
                 cfg.spectrogram_config(), features=features)


def cmd_train(args, cfg):
    from fefakit.exp.corpus import generate_corpus
    corpus = generate_corpus(cfg.corpus_spec())
    ckpt, rows = _train_one(cfg, corpus, None, cfg.fefa, cfg.seed)
    for row in rows:
        print(f"epoch {row['epoch']:>3}  loss {row['train_loss']:.4f}  "
              f"train {row['train_acc']:.3f}  test {row['test_acc']:.3f}")
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt_io.save(ckpt, args.out / "model.ckpt")
    print(f"wrote {args.out / 'model.ckpt'}")
    _write(args.out, "train_log.csv", fio.training_log_csv(rows))
    return EXIT_OK


def cmd_eval(args, cfg):
    from fefakit.exp.robustness import robustness_sweep
    ckpt = _load_checkpoint(args.checkpoint, _expected_hash(cfg))
    corpus, trials = _corpus_and_trials(cfg)
    report = robustness_sweep([ckpt], corpus, trials, snr_list=(), dists=())
    row = report.rows[0]
    print(f"accuracy {row.accuracy_pct:.2f}%  EER {row.eer_pct:.2f}%")
    _write(args.out, "eval.csv", report.to_csv())
    return EXIT_OK


def noise_test_checkpoints(cfg: RunConfig, corpus, ckpt_dir: Path):
    """Load or train one checkpoint per (variant, seed) in the sweep."""
    from fefakit.exp.training import featurize_many
    features, ckpts = None, []
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    for fefa in cfg.sweep_variants:
        for seed in cfg.sweep_seeds:
            path = ckpt_dir / f"{cfg.backbone}_{fefa}_seed{seed}.ckpt"
            expected = _expected_hash(cfg, fefa, seed)
            if path.exists():
                ckpts.append(_load_checkpoint(path, expected))
                print(f"loaded {path}")
                continue
            if features is None:
                features = featurize_many(corpus.waves, cfg.spectrogram_config(),
                                          cfg.input_transform)
            ckpt, _ = _train_one(cfg, corpus, features, fefa, seed)
            ckpt_io.save(ckpt, path)
            print(f"trained {path}")
            ckpts.append(ckpt)
    return ckpts


def cmd_noise_test(args, cfg):
    from fefakit.exp.robustness import robustness_sweep
    corpus, trials = _corpus_and_trials(cfg)
    ckpt_dir = args.checkpoints or args.out / "checkpoints"
    ckpts = noise_test_checkpoints(cfg, corpus, ckpt_dir)
    report = robustness_sweep(ckpts, corpus, trials, cfg.snr_db_list, cfg.noise_dists,
                              cfg.noise_seed)
    csv_text = report.to_csv()
    print(csv_text, end="")
    _write(args.out, "noise_test.csv", csv_text)
    return EXIT_OK


def cmd_attn_map(args, cfg):
    from fefakit.exp.attention import NoAttentionError, attention_heatmap
    ckpt = _load_checkpoint(args.checkpoint)
    wave = _read_wav(args.wav)
    try:
        amap = attention_heatmap(ckpt, wave)
    except NoAttentionError as exc:
        raise ArtifactError(f"{args.checkpoint}: {exc}") from exc
    except SignalTooShortError as exc:
        raise ArtifactError(f"{args.wav}: {exc}") from exc
    stem = Path(args.wav).stem
    _write(args.out, f"{stem}_attention.csv", fio.attention_csv(amap.weights))
    for pid, p in amap.weights.items():
        # each column repeated so the strip is visible
        _write(args.out, f"{stem}_attention_{pid}.pgm", fio.to_pgm(np.repeat(p[:, None], 16, 1)))
    _write(args.out, f"{stem}_input.pgm", fio.to_pgm(np.expm1(amap.features)
                                                     if ckpt.meta["train"]["input_transform"] == "log1p"
                                                     else amap.features))
    if amap.enhanced is not None:
        _write(args.out, f"{stem}_enhanced.csv", fio.matrix_to_csv(amap.enhanced))
        _write(args.out, f"{stem}_enhanced.pgm", fio.to_pgm(np.maximum(amap.enhanced, 0)))
    return EXIT_OK


def cmd_grad_check(args, cfg):
    from fefakit.gradcheck import run_suite
    results = run_suite(instances=args.instances, model_instances=args.instances, seed=cfg.seed)
    for res in results:
        print(res)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat YAML run config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fefakit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", parents=[common], help="WAV to spectrogram CSV and PGM")
    p.add_argument("wav", type=Path)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("gen-corpus", parents=[common], help="write the synthetic corpus as WAVs")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", parents=[common], help="train one model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="clean accuracy and EER of a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise-test", parents=[common], help="test-time noise sweep over seeds")
    p.add_argument("--checkpoints", type=Path,
                   help="directory of per-seed checkpoints (missing ones are trained)")
    p.set_defaults(func=cmd_noise_test)

    p = sub.add_parser("attn-map", parents=[common], help="export attention weights of one WAV")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("wav", type=Path)
    p.set_defaults(func=cmd_attn_map)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--instances", type=int, default=10)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        return args.func(args, cfg)
    except (ConfigError, ckpt_io.ConfigHashMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT


if __name__ == "__main__":
    sys.exit(main())
