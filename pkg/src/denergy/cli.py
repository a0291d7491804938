"""Command-line interface: score, eval, train-ebm, synth, verify.

All commands are deterministic given their flags and seeds; scores go to
CSV, metrics and verification reports to JSON, embeddings and checkpoints to
the binary formats documented in :mod:`denergy.fileio`.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio
from .core import FeatureMatrix, cosine_similarities, normalize_rows
from .errors import FileFormatError, InvalidConfig
from .metrics import evaluate_ood
from .prompt import init_params
from .scores import ALL_METHODS, ScoreConfig, score_rows
from .synth import generate, preset
from .training import EbmConfig, train
from . import verify as verify_mod

_SUITES = ("thm1", "thm2", "thm3", "thm4", "grad", "all")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DENERGY_THREADS", "1")))
    except ValueError:
        return 1


def _load_normalized(path) -> tuple[FeatureMatrix, np.ndarray | None]:
    matrix, labels = fileio.read_embeddings(path)
    return normalize_rows(matrix), labels


def _cmd_score(args) -> int:
    images, _ = _load_normalized(args.images)
    texts, _ = _load_normalized(args.texts)
    cfg = ScoreConfig(tau=args.tau, c=args.c)
    # similarities come from one matrix product so chunking (and therefore
    # the thread count) cannot perturb the scores
    rows = cosine_similarities(images, texts)
    if args.threads <= 1 or images.rows < 2 * args.threads:
        scores = score_rows(args.method, images, texts, cfg, rows=rows)
    else:
        bounds = np.linspace(0, images.rows, args.threads + 1, dtype=int)
        spans = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

        def run(span):
            lo, hi = span
            chunk = FeatureMatrix(images.data[lo:hi], normalized=True)
            return score_rows(args.method, chunk, texts, cfg, rows=rows[lo:hi])

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            scores = np.concatenate(list(pool.map(run, spans)))
    fileio.write_scores_csv(args.out, scores)
    return 0


def _cmd_eval(args) -> int:
    id_scores = fileio.read_scores_csv(args.id_scores)
    ood_scores = fileio.read_scores_csv(args.ood_scores)
    result = evaluate_ood(id_scores, ood_scores)
    fileio.write_metrics_json(args.out, result)
    print(json.dumps({"auroc": result.auroc, "fpr95": result.fpr95}))
    return 0


def _cmd_train_ebm(args) -> int:
    manifest = fileio.read_manifest(args.manifest)
    images, labels = _load_normalized(manifest.id_embeddings)
    if labels is None:
        raise InvalidConfig("training requires labeled ID embeddings")
    texts, _ = fileio.read_embeddings(manifest.text_embeddings)
    cfg = EbmConfig(
        lambda0=args.lambda0,
        p=args.p,
        tau=args.tau,
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    params = init_params(
        args.seed, n=args.n_ctx, d_e=args.d_e, h=args.hidden, D=images.dim, K=texts.rows
    )
    trained, report = train(images, labels, params, cfg)
    fileio.write_theta(args.out_theta, trained.theta, seed=args.seed)
    if args.log:
        with open(args.log, "w") as fh:
            for rec in report.records:
                fh.write(
                    json.dumps(
                        {
                            "epoch": rec.epoch,
                            "l_ce": rec.l_ce,
                            "l_delta_e": rec.l_delta_e,
                            "l_ebm": rec.l_ebm,
                            "acc": rec.accuracy,
                            "mean_delta_energy": rec.mean_delta_energy,
                            "condition_rate": rec.condition_rate,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    if report.records:
        final = report.final
        print(json.dumps({"epochs": len(report.records), "acc": final.accuracy,
                          "l_ebm": final.l_ebm}, sort_keys=True))
    else:
        print(json.dumps({"epochs": 0}))
    return 0


def _cmd_synth(args) -> int:
    cfg = preset(args.preset, seed=args.seed)
    ds = generate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_embeddings(out / "text_features.demb", ds.text_features)
    fileio.write_embeddings(out / "id_images.demb", ds.id_images, labels=ds.labels)
    fileio.write_embeddings(out / "covariate_images.demb", ds.covariate_images, labels=ds.labels)
    fileio.write_embeddings(out / "semantic_images.demb", ds.semantic_images)
    manifest = fileio.Manifest(
        id_embeddings=Path("id_images.demb"),
        text_embeddings=Path("text_features.demb"),
        covariate_embeddings=Path("covariate_images.demb"),
        semantic_embeddings=Path("semantic_images.demb"),
        class_names=[f"class_{i:02d}" for i in range(cfg.classes)],
        score_overrides={"tau": 0.01, "c": 2},
    )
    fileio.write_manifest(out / "manifest.json", manifest)
    print(json.dumps({"out_dir": str(out), "classes": cfg.classes,
                      "samples_per_split": cfg.samples_per_split}, sort_keys=True))
    return 0


def _report_doc(report) -> dict:
    worst = report.worst_margin
    return {
        "theorem": report.theorem_id,
        "trials": report.trials,
        "violations": report.violations,
        "skipped": report.skipped,
        "worst_margin": None if math.isinf(worst) else worst,
        "ok": report.ok,
    }


def _cmd_verify(args) -> int:
    suites = _SUITES[:-1] if args.suite == "all" else (args.suite,)
    reports = []
    for suite in suites:
        if suite == "thm1":
            trials = args.trials or 10000
            reports.append(verify_mod.verify_amplification(args.seed, trials))
            reports.append(verify_mod.verify_monotonicity(args.seed, trials))
        elif suite == "thm2":
            reports.append(verify_mod.verify_fpr_dominance(args.seed, args.trials or 10000))
        elif suite == "thm3":
            reports.append(verify_mod.verify_lower_bound(args.seed, args.trials or 1000))
        elif suite == "thm4":
            reports.append(verify_mod.verify_hessian_trend(args.seed, args.trials or 5))
        elif suite == "grad":
            reports.append(verify_mod.verify_gradients(args.seed, args.trials or 50))
    for report in reports:
        print(json.dumps(_report_doc(report), sort_keys=True))
    return 0 if all(r.ok for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="denergy",
        description="Energy-change OOD scoring and bound-maximization prompt tuning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score image embeddings against text embeddings")
    p_score.add_argument("--images", required=True)
    p_score.add_argument("--texts", required=True)
    p_score.add_argument("--method", required=True, choices=ALL_METHODS)
    p_score.add_argument("--tau", type=float, default=0.01)
    p_score.add_argument("--c", type=int, default=2)
    p_score.add_argument("--out", required=True)
    p_score.add_argument("--threads", type=int, default=_default_threads())
    p_score.set_defaults(func=_cmd_score)

    p_eval = sub.add_parser("eval", help="AUROC / FPR95 from two score files")
    p_eval.add_argument("--id-scores", required=True)
    p_eval.add_argument("--ood-scores", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=_cmd_eval)

    p_train = sub.add_parser("train-ebm", help="tune prompt context vectors")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--lambda0", type=float, default=0.5)
    p_train.add_argument("--p", type=float, default=0.5)
    p_train.add_argument("--tau", type=float, default=0.01)
    p_train.add_argument("--lr", type=float, default=0.002)
    p_train.add_argument("--epochs", type=int, default=30)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--n-ctx", type=int, default=4)
    p_train.add_argument("--d-e", type=int, default=16)
    p_train.add_argument("--hidden", type=int, default=32)
    p_train.add_argument("--out-theta", required=True)
    p_train.add_argument("--log", default=None)
    p_train.set_defaults(func=_cmd_train_ebm)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark")
    p_synth.add_argument("--preset", default="default")
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    p_verify = sub.add_parser("verify", help="run empirical theorem checks")
    p_verify.add_argument("--suite", default="all", choices=_SUITES)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--trials", type=int, default=None)
    p_verify.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileFormatError, InvalidConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
