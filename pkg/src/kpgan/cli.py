"""``kpgan`` command-line entry point.

Exit codes: 0 ok, 1 gradient check failed, 2 parse/schema/config error,
3 missing prerequisite checkpoint, 4 checkpoint version/format mismatch,
5 prediction/gold misalignment.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import checkpoint as ckpt_io
from . import corpus as cp
from . import discriminator as dsc
from . import evaluation as ev
from . import generator as gen
from . import training
from ._jit import set_threads
from .config import RunConfig, load_config
from .gradcheck import format_table, run_gradcheck

EXIT_GRADCHECK, EXIT_PARSE, EXIT_DEPENDENCY, EXIT_VERSION, EXIT_ALIGN = 1, 2, 3, 4, 5


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------- data helpers

def _example_to_json(ex):
    doc = ex.document
    return json.dumps({
        "tokens": list(doc.tokens), "ids": list(doc.ids), "extended_ids": list(doc.extended_ids),
        "oov": list(doc.oov_list), "target": list(ex.target), "phrases": [list(p) for p in ex.phrases],
    }, sort_keys=True, ensure_ascii=False)


def _example_from_json(line):
    rec = json.loads(line)
    doc = cp.Document(tuple(rec["tokens"]), tuple(rec["ids"]), tuple(rec["extended_ids"]), tuple(rec["oov"]))
    return cp.Example(doc, tuple(rec["target"]), tuple(tuple(p) for p in rec["phrases"]))


def _write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_prepared(data_dir):
    with open(os.path.join(data_dir, "vocab.txt"), encoding="utf-8") as fh:
        vocab = cp.Vocabulary([line.rstrip("\n") for line in fh])
    with open(os.path.join(data_dir, "corpus.jsonl"), encoding="utf-8") as fh:
        examples = [_example_from_json(line) for line in fh if line.strip()]
    return vocab, examples


def _load_samples(path, mode, stats=None):
    try:
        return cp.load_dataset(path, mode, stats)
    except cp.DatasetError as exc:
        raise CommandError(EXIT_PARSE, f"{path}: {exc}") from None


def _load_checkpoint(path):
    if not path or not os.path.exists(path):
        raise CommandError(EXIT_DEPENDENCY, f"checkpoint not found: {path}")
    try:
        return ckpt_io.load(path)
    except ckpt_io.CheckpointError as exc:
        raise CommandError(EXIT_VERSION, f"{path}: {exc}") from None


def _split_tensors(ckpt, prefix):
    return {k[len(prefix):]: v for k, v in ckpt.tensors.items() if k.startswith(prefix)}


def restore_models(ckpt):
    """(config, vocab, generator params or None, discriminator params or None)."""
    config = RunConfig.from_dict(ckpt.meta["config"])
    vocab = cp.Vocabulary(ckpt.vocab)
    gparams = dparams = None
    g = _split_tensors(ckpt, "G.")
    if g:
        dims = gen.GeneratorDims(len(vocab), config.model.emb_dim, config.model.hidden_dim)
        gparams = gen.init_generator(dims, np.random.default_rng(0)).replace(g)
    d = _split_tensors(ckpt, "D.")
    if d:
        dims = dsc.DiscriminatorDims(len(vocab), config.model.disc_emb_dim, config.model.disc_hidden_dim)
        dparams = dsc.init_discriminator(dims, np.random.default_rng(0)).replace(d)
    return config, vocab, gparams, dparams


def build_checkpoint(config, vocab, stages, gparams=None, dparams=None, extra=None):
    tensors = {}
    if gparams is not None:
        tensors.update({f"G.{k}": v for k, v in gparams.arrays().items()})
    if dparams is not None:
        tensors.update({f"D.{k}": v for k, v in dparams.arrays().items()})
    meta = {"config": config.to_dict(), "stages": sorted(set(stages))}
    meta.update(extra or {})
    return ckpt_io.Checkpoint(meta, list(vocab.tokens), tensors)


# ----------------------------------------------------------------- commands

def cmd_preprocess(args, config):
    stats = {}
    samples = _load_samples(args.raw, "train", stats)
    c = config.corpus
    vocab = cp.build_vocab(samples, c.vocab_size)
    examples = cp.encode_corpus(samples, vocab, c.max_src_len, c.max_phrases, c.max_phrase_len)
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "vocab.txt"), "".join(t + "\n" for t in vocab.tokens))
    _write_text(os.path.join(args.out, "corpus.jsonl"), "".join(_example_to_json(e) + "\n" for e in examples))
    n_tokens = sum(len(e.document) for e in examples)
    n_oov = sum(1 for e in examples for i in e.document.ids if i == cp.UNK)
    summary = {"samples": stats["kept"], "dropped": stats["dropped"], "vocab_size": len(vocab),
               "oov_rate": n_oov / n_tokens if n_tokens else 0.0}
    print(json.dumps(summary, sort_keys=True))
    return 0


def _prepared(args):
    try:
        return load_prepared(args.data)
    except FileNotFoundError as exc:
        raise CommandError(EXIT_DEPENDENCY, f"prepared data missing: {exc.filename}") from None


def cmd_pretrain(args, config):
    vocab, examples = _prepared(args)
    rng = np.random.default_rng(config.train.seed)
    dims = gen.GeneratorDims(len(vocab), config.model.emb_dim, config.model.hidden_dim)
    result = training.pretrain_generator(examples, config.train, dims=dims, rng=rng)
    for epoch, loss in enumerate(result.losses, start=1):
        print(json.dumps({"epoch": epoch, "loss": loss}))
    ckpt_io.save(build_checkpoint(config, vocab, ["pretrain"], result.params), args.out)
    return 0


def _require_pretrained(args):
    ckpt = _load_checkpoint(args.checkpoint)
    if "pretrain" not in ckpt.stages:
        raise CommandError(EXIT_DEPENDENCY, f"{args.checkpoint}: generator has not been pretrained")
    return ckpt


def _fresh_discriminator(config, vocab, rng):
    dims = dsc.DiscriminatorDims(len(vocab), config.model.disc_emb_dim, config.model.disc_hidden_dim)
    return dsc.init_discriminator(dims, rng)


def cmd_train_disc(args, config):
    ckpt = _require_pretrained(args)
    _, vocab, gparams, _ = restore_models(ckpt)
    _, examples = _prepared(args)
    rng = np.random.default_rng(config.train.seed)
    dparams = _fresh_discriminator(config, vocab, rng)
    dparams, losses = training.train_discriminator(examples, gparams, dparams, config.train, rng)
    for epoch, loss in enumerate(losses, start=1):
        print(json.dumps({"epoch": epoch, "d_loss": loss}))
    stages = ckpt.stages + ["disc"]
    ckpt_io.save(build_checkpoint(config, vocab, stages, gparams, dparams), args.out)
    return 0


def cmd_train_gan(args, config):
    ckpt = _require_pretrained(args)
    _, vocab, gparams, dparams = restore_models(ckpt)
    _, examples = _prepared(args)
    rng = np.random.default_rng(config.train.seed)
    if dparams is None:
        dparams = _fresh_discriminator(config, vocab, rng)
        dparams, _ = training.train_discriminator(examples, gparams, dparams, config.train, rng)
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else sys.stdout
    try:
        result = training.gan_train(examples, config.train, gparams, dparams, rng=rng, log_fh=log_fh)
    finally:
        if log_fh is not sys.stdout:
            log_fh.close()
    stages = ckpt.stages + ["disc", "gan"]
    ckpt_io.save(build_checkpoint(config, vocab, stages, result.gen_params, result.disc_params), args.out)
    return 0


def cmd_generate(args, config):
    ckpt = _load_checkpoint(args.checkpoint)
    saved, vocab, gparams, _ = restore_models(ckpt)
    if gparams is None:
        raise CommandError(EXIT_DEPENDENCY, f"{args.checkpoint}: no generator tensors")
    samples = _load_samples(args.dataset, "test")
    seed = args.seed if args.seed is not None else saved.train.seed
    rng = np.random.default_rng(seed)
    max_len, max_phrase = saved.train.max_decode_len, saved.corpus.max_phrase_len
    lines = []
    for sample in samples:
        doc = cp.encode_source(sample, vocab, saved.corpus.max_src_len)
        if args.mode == "greedy":
            phrases = gen.greedy_decode(doc, gparams, max_len, max_phrase).phrases
        else:
            phrases = gen.sample_decode(doc, gparams, max_len, rng, max_phrase).phrases.phrases
        lines.append(cp.format_prediction_line(cp.phrases_to_text(phrases, vocab, doc.oov_list)))
    _write_text(args.out, "".join(line + "\n" for line in lines))
    return 0


def cmd_evaluate(args, config):
    gold = _load_samples(args.gold, "test")
    try:
        report = ev.evaluate_dataset(args.pred, gold, k=args.k, alpha=args.alpha,
                                     dataset=os.path.basename(args.gold))
    except ev.AlignmentError as exc:
        raise CommandError(EXIT_ALIGN, str(exc)) from None
    print(report.table())
    if args.out:
        _write_text(args.out, report.to_json())
    return 0


def cmd_gradcheck(args, config):
    start = time.perf_counter()
    results = run_gradcheck(seed=args.seed or 0, corrupt=args.corrupt)
    print(format_table(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {time.perf_counter() - start:.1f}s")
    if failed:
        for r in failed:
            print(f"FAILED {r.name}: worst relative error {r.max_rel_error:.3e} in {r.worst_param}",
                  file=sys.stderr)
        return EXIT_GRADCHECK
    return 0


# ------------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="override train.seed")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")

    parser = argparse.ArgumentParser(prog="kpgan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="tokenise, build vocab, encode corpus")
    p.add_argument("raw")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pretrain", parents=[common], help="MLE pretraining of the generator")
    p.add_argument("data", help="directory written by preprocess")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    for name, func, helptext in (("train-disc", cmd_train_disc, "train the discriminator"),
                                 ("train-gan", cmd_train_gan, "adversarial training rounds")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("data")
        p.add_argument("--checkpoint", required=True, help="input checkpoint")
        p.add_argument("--out", required=True)
        if name == "train-gan":
            p.add_argument("--log", help="round log (JSON lines); default stdout")
        p.set_defaults(func=func)

    p = sub.add_parser("generate", parents=[common], help="decode keyphrases for a dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="score a prediction file")
    p.add_argument("pred")
    p.add_argument("gold")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--corrupt", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = os.environ.get("KPGAN_THREADS")
    if threads:
        set_threads(int(threads))
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"train.seed={args.seed}")
        config = load_config(args.config, overrides)
        return args.func(args, config)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except cp.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
