"""Command-line entry point: ``raea <command> --config FILE [...]``.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 numeric failure.
"""

import argparse
import logging
import os
import sys

from . import pipeline
from .diffcore import ContractError
from .kg import ParseError, SeedError
from .rough_filter import RuleError
from .text_embed import EmbeddingFormatError
from .trainer import TrainingError

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


def _out(args, cfg, default_name):
    return args.out or os.path.join(cfg.output_dir, default_name)


def cmd_build_kg(args, cfg):
    out = _out(args, cfg, "bundle")
    pipeline.save_bundle(pipeline.build_bundle(cfg), out)
    print(out)


def cmd_rough_filter(args, cfg):
    out = _out(args, cfg, "candidates.tsv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    pipeline.rough_filter_stage(cfg, out)
    print(out)


def _bundle(args, cfg):
    return pipeline.load_bundle(args.bundle or os.path.join(cfg.output_dir, "bundle"))


def cmd_train(args, cfg):
    out = _out(args, cfg, "train")
    pipeline.train_stage(_bundle(args, cfg), cfg, out)
    print(out)


def cmd_align(args, cfg):
    out = _out(args, cfg, "align")
    train_dir = args.train_dir or os.path.join(cfg.output_dir, "train")
    pipeline.align_stage(_bundle(args, cfg), cfg, train_dir, out)
    print(out)


def cmd_evaluate(args, cfg):
    out = _out(args, cfg, "metrics.txt")
    align_dir = args.align_dir or os.path.join(cfg.output_dir, "align")
    report = pipeline.evaluate_stage(_bundle(args, cfg), cfg, align_dir, out)
    sys.stdout.write(report.to_text())


def cmd_pipeline(args, cfg):
    report = pipeline.run_pipeline(cfg, args.out)
    sys.stdout.write(report.to_text())


def cmd_ablate(args, cfg):
    out = args.out or cfg.output_dir
    pipeline.run_ablation(cfg, out)
    with open(os.path.join(out, "ablation.tsv"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())


def cmd_synth(args, cfg):
    from .synth import SynthConfig, dump_pair, generate_aligned_pair

    scfg = SynthConfig(n_entities=args.n_entities, n_relations=args.n_relations,
                       n_predicates=args.n_predicates, rel_density=args.rel_density,
                       attr_per_entity=args.attr_per_entity, attr_noise=args.attr_noise,
                       rel_noise=args.rel_noise, rng_seed=args.seed)
    out = args.out or "synth"
    dump_pair(generate_aligned_pair(scfg), out)
    with open(os.path.join(out, "pipeline.cfg"), "w", encoding="utf-8") as fh:
        fh.write("# generated by `raea synth`\n")
        for key in ("rel_triples_1", "attr_triples_1", "rel_triples_2", "attr_triples_2", "ent_links"):
            fh.write(f"{key} = {key}\n")
        fh.write("output_dir = run\n")
    print(out)


COMMANDS = {
    "build-kg": (cmd_build_kg, "load triple files and write a KG bundle"),
    "rough-filter": (cmd_rough_filter, "apply blocking rules to product records"),
    "train": (cmd_train, "train every enabled channel"),
    "align": (cmd_align, "similarity matrices, ensemble and Top-K"),
    "evaluate": (cmd_evaluate, "metric report with bootstrap intervals"),
    "pipeline": (cmd_pipeline, "run every stage"),
    "ablate": (cmd_ablate, "full model plus the five ablation variants"),
    "synth": (cmd_synth, "generate an aligned synthetic KG pair"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="raea", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", help="output path (defaults under output_dir)")
        if name == "synth":
            p.add_argument("--config", help="unused; accepted for symmetry")
            p.add_argument("--n-entities", type=int, default=200)
            p.add_argument("--n-relations", type=int, default=20)
            p.add_argument("--n-predicates", type=int, default=10)
            p.add_argument("--rel-density", type=float, default=5.0)
            p.add_argument("--attr-per-entity", type=int, default=3)
            p.add_argument("--attr-noise", type=float, default=0.0)
            p.add_argument("--rel-noise", type=float, default=0.0)
            p.add_argument("--seed", type=int, default=0)
            continue
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        if name in ("train", "align", "evaluate"):
            p.add_argument("--bundle", help="KG bundle directory")
        if name == "align":
            p.add_argument("--train-dir")
        if name == "evaluate":
            p.add_argument("--align-dir")
    return parser


def _load(args):
    cfg = pipeline.load_config(args.config)
    if args.set:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        overridden = {s.split("=", 1)[0].strip() for s in args.set}
        kept = [ln for ln in text.splitlines() if ln.split("=", 1)[0].strip() not in overridden]
        text = "\n".join(kept + [s.replace("=", " = ", 1) for s in args.set])
        cfg = pipeline.parse_config_text(text, os.path.dirname(os.path.abspath(args.config)))
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = None if args.command == "synth" else _load(args)
        func(args, cfg)
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pipeline.InputError, ParseError, SeedError, RuleError, EmbeddingFormatError,
            FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TrainingError, ContractError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
