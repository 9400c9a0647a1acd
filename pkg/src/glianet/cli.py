"""Command-line surface: dataset synthesis, training, evaluation, inspection.

stdout carries machine-readable ``name=value`` lines; human prose goes to
stderr. Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 training
divergence, 5 weight/config mismatch.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from . import image as img_io
from . import kvconfig
from . import model as model_mod
from . import training as train_mod
from . import weights as wio
from .fragments import extract_fragments, plan_grid
from .vit import WeightShapeError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_WEIGHTS = 5


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(name: str, value) -> None:
    print(f"{name}={value}")


def cmd_synth(args) -> int:
    if not os.path.isdir(args.sources):
        _say(f"source directory not found: {args.sources}")
        return EXIT_IO
    patterns = ("*.ppm", "*.png")
    paths = sorted(p for pat in patterns for p in glob.glob(os.path.join(args.sources, pat)))
    if not paths:
        _say(f"no source images (*.ppm, *.png) in {args.sources}")
        return EXIT_IO
    kinds = tuple(args.kinds.split(","))
    try:
        manifest = img_io.build_synth_manifest(
            paths, args.out, kinds=kinds, levels=args.levels, seed=args.seed
        )
    except ValueError as exc:
        _say(str(exc))
        return EXIT_USAGE
    manifest_path = os.path.join(args.out, "manifest.csv")
    manifest.save(manifest_path)
    _emit("entries", len(manifest.entries))
    _emit("manifest", manifest_path)
    return EXIT_OK


def _load_configs(path: str):
    if path is None:
        return model_mod.GliaNetConfig.toy(), train_mod.TrainConfig()
    return kvconfig.load_config_file(path)


def cmd_train(args) -> int:
    cfg, tc = _load_configs(args.config)
    if args.ablation:
        cfg = model_mod.GliaNetConfig(
            **{**_cfg_kwargs(cfg), "ablation": args.ablation}
        )
    if args.guidance:
        cfg = model_mod.GliaNetConfig(
            **{**_cfg_kwargs(cfg), "guidance_mode": args.guidance}
        )
    repeats = args.repeats if args.repeats is not None else tc.repeats
    manifest = img_io.DatasetManifest.load(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    if repeats > 1:
        tc_rep = train_mod.TrainConfig(**{**_tc_kwargs(tc), "repeats": repeats})
        report = train_mod.repeated_eval(manifest, cfg, tc_rep)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as f:
            json.dump(report, f, sort_keys=True, indent=2)
        _emit("median_srcc", report["median_srcc"])
        _emit("median_plcc", report["median_plcc"])
        return EXIT_OK
    train_entries, test_entries = train_mod.split_dataset(manifest, tc.split_fraction, tc.seed)
    params = model_mod.init_model_params(cfg, seed=tc.seed + 1)
    run = train_mod.train(params, cfg, train_entries, test_entries, tc)
    img_io.DatasetManifest(
        entries=[img_io.ManifestEntry(e.path, e.mos, "train") for e in train_entries]
    ).save(os.path.join(args.out, "train_split.csv"))
    img_io.DatasetManifest(
        entries=[img_io.ManifestEntry(e.path, e.mos, "test") for e in test_entries]
    ).save(os.path.join(args.out, "test_split.csv"))
    model_mod.save_model(params, cfg, os.path.join(args.out, "model.glia"))
    for name, arr in run.best_state.items():
        params[name].data = arr
    model_mod.save_model(params, cfg, os.path.join(args.out, "model_best.glia"))
    with open(os.path.join(args.out, "train_log.jsonl"), "w", encoding="utf-8") as f:
        f.write(run.to_jsonl())
    log_tail = run.epoch_logs[-1] if run.epoch_logs else {"eval_srcc": float("nan"), "eval_plcc": float("nan")}
    _say(f"trained {run.n_trainable} parameters, ablation={cfg.ablation}, guidance={cfg.guidance_mode}")
    _emit("srcc", log_tail["eval_srcc"])
    _emit("plcc", log_tail["eval_plcc"])
    return EXIT_OK


def _cfg_kwargs(cfg: model_mod.GliaNetConfig) -> dict:
    return {
        "vit": cfg.vit,
        "d_latent": cfg.d_latent,
        "n_heads_cross": cfg.n_heads_cross,
        "insertion_points": cfg.insertion_points,
        "n_h": cfg.n_h,
        "n_w": cfg.n_w,
        "f_h": cfg.f_h,
        "f_w": cfg.f_w,
        "frag_mode": cfg.frag_mode,
        "frag_seed": cfg.frag_seed,
        "head_hidden": cfg.head_hidden,
        "guidance_mode": cfg.guidance_mode,
        "ablation": cfg.ablation,
        "gelu_exact": cfg.gelu_exact,
    }


def _tc_kwargs(tc: train_mod.TrainConfig) -> dict:
    return {
        "epochs": tc.epochs,
        "batch_size": tc.batch_size,
        "lr": tc.lr,
        "weight_decay": tc.weight_decay,
        "beta1": tc.beta1,
        "beta2": tc.beta2,
        "eps": tc.eps,
        "seed": tc.seed,
        "split_fraction": tc.split_fraction,
        "repeats": tc.repeats,
        "loss": tc.loss,
        "eval_every": tc.eval_every,
    }


def cmd_eval(args) -> int:
    params, cfg = model_mod.load_model(args.weights)
    manifest = img_io.DatasetManifest.load(args.manifest)
    s, p, _ = train_mod.evaluate(params, cfg, manifest.entries)
    _emit("srcc", s)
    _emit("plcc", p)
    return EXIT_OK


def cmd_score(args) -> int:
    params, cfg = model_mod.load_model(args.weights)
    img = img_io.load_image(args.image)
    from .tensor import no_grad

    with no_grad():
        score = model_mod.forward(img, params, cfg).item()
    _emit("score", score)
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.attn and not args.weights:
        _say("--attn requires --weights")
        return EXIT_USAGE
    if not args.fragments and not args.attn:
        _say("nothing to do: pass --fragments and/or --attn")
        return EXIT_USAGE
    img = img_io.load_image(args.image)
    if args.fragments:
        grid = plan_grid(img.shape[0], img.shape[1], args.n_h, args.n_w, args.f_h, args.f_w)
        detail = extract_fragments(img, grid)
        img_io.save_image(detail, args.fragments)
        _emit("fragments", args.fragments)
    if args.attn:
        params, cfg = model_mod.load_model(args.weights)
        if not 0 <= args.block < cfg.vit.n_layers:
            _say(f"block {args.block} out of range 0..{cfg.vit.n_layers - 1}")
            return EXIT_USAGE
        model_mod.export_attention_map(img, params, cfg, args.block, args.attn)
        _emit("attn", args.attn)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glianet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic-distortion dataset")
    p.add_argument("--sources", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kinds", default=",".join(img_io.DISTORTION_KINDS))
    p.add_argument("--levels", type=int, default=img_io.MAX_LEVEL)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--ablation", choices=("full", "lgf_only", "glr_only"), default=None)
    p.add_argument("--guidance", choices=model_mod.GUIDANCE_MODES, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate weights against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score one image")
    p.add_argument("--image", required=True)
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("inspect", help="dump fragment splices and attention maps")
    p.add_argument("--image", required=True)
    p.add_argument("--fragments", default=None)
    p.add_argument("--attn", default=None)
    p.add_argument("--weights", default=None)
    p.add_argument("--block", type=int, default=0)
    p.add_argument("--n-h", type=int, default=8)
    p.add_argument("--n-w", type=int, default=8)
    p.add_argument("--f-h", type=int, default=8)
    p.add_argument("--f-w", type=int, default=8)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except train_mod.TrainingDivergedError as exc:
        _say(f"training diverged: {exc}")
        return EXIT_DIVERGED
    except (wio.WeightFileError, WeightShapeError) as exc:
        _say(f"weight/config mismatch: {exc}")
        return EXIT_WEIGHTS
    except img_io.PpmError as exc:
        _say(f"bad image file: {exc}")
        return EXIT_IO
    except (kvconfig.ConfigError, ValueError) as exc:
        _say(f"invalid arguments: {exc}")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _say(str(exc))
        return EXIT_IO
    except OSError as exc:
        _say(f"I/O failure: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
