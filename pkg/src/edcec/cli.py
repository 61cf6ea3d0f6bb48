"""Command-line entry point: ``edcec <subcommand> [flags]``.

Flag values can also come from a flat ``key = value`` file passed with
``--config``; keys are flag names without the leading dashes.  An explicit
flag beats the file, which beats the built-in default.

Exit status: 0 on success, 2 on usage errors, 1 on runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

log = logging.getLogger("edcec")


class UsageError(Exception):
    pass


# -- config file ------------------------------------------------------------
def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` pairs; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{n}: expected key = value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    known = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for this subcommand")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean, got {raw!r}")
            defaults[key] = raw.lower() in ("true", "1", "yes")
        else:
            defaults[key] = raw  # argparse runs ``type`` on string defaults
    parser.set_defaults(**defaults)


# -- shared helpers ----------------------------------------------------------
def _triples(path):
    from .align import Triple
    from .io import read_jsonl

    return [Triple.from_json(r) for r in read_jsonl(path)]


def _dump(obj, path=None) -> None:
    from .io import atomic_write_text

    text = json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


def _require(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise UsageError(f"no such file: {p}")


def _load_model(args):
    from .model import load_checkpoint
    from .text import Vocab

    _require(args.checkpoint, args.vocab)
    model = load_checkpoint(args.checkpoint)
    vocab = Vocab.load(args.vocab)
    if model.cfg.vocab_size != len(vocab):
        raise UsageError(f"checkpoint expects {model.cfg.vocab_size} tokens, vocab has {len(vocab)}")
    return model, vocab


def _report_json(report) -> dict:
    return {**report.to_json(), "wer_rate": report.wer.rate, "b_wer_rate": report.b_wer.rate,
            "u_wer_rate": report.u_wer.rate}


def _parse_sizes(text: str) -> list:
    sizes = []
    for part in text.split(","):
        part = part.strip()
        if part.isdigit():
            sizes.append(int(part))
        elif part.startswith("anti-") and part[5:].isdigit():
            sizes.append(part)
        else:
            raise UsageError(f"bad list size {part!r}: expected N or anti-N")
    return sizes


# -- subcommands -------------------------------------------------------------
def _gen_chunk(job):
    from .datagen import generate

    clean, full, cfg, list_size, include_true, lexicon, start = job
    return generate(clean, full, cfg, list_size, include_true, lexicon, start)


def cmd_gen_data(args) -> int:
    from .datagen import CorruptionConfig, make_clean_corpus
    from .io import write_jsonl
    from .rarelist import build_full_list, load_full_list, save_full_list
    from .wordlists import COMMON_WORDS, TRIGGER_WORDS, rare_inventory, recognizer_lexicon

    cfg = CorruptionConfig(args.p_sub_rare, args.p_del, args.p_ins, args.edit_intensity, args.seed)
    if args.clean:
        _require(args.clean)
        with open(args.clean, encoding="utf-8") as f:
            clean = [line.split() for line in f if line.strip()]
    else:
        clean = make_clean_corpus(args.n + args.n_test, seed=args.seed)
    train_c, test_c = clean[: len(clean) - args.n_test], clean[len(clean) - args.n_test:]
    if not train_c:
        raise UsageError("no sentences left for the main split")
    if args.full_list:
        _require(args.full_list)
        full = load_full_list(args.full_list)
    else:
        top_k = args.top_k if args.top_k is not None else len(set(COMMON_WORDS)) + len(TRIGGER_WORDS)
        full = build_full_list(train_c, top_k=top_k)
    if args.clean:
        rare = set(full)
        lexicon = sorted({w.lower() for s in clean for w in s} - rare)
    else:
        lexicon = recognizer_lexicon(args.lexicon_extra, exclude=rare_inventory())

    def run(sentences, config):
        chunk = max(1, -(-len(sentences) // max(1, args.jobs)))
        jobs = [(sentences[i: i + chunk], full, config, args.list_size, not args.anti, lexicon, i)
                for i in range(0, len(sentences), chunk)]
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                parts = list(pool.map(_gen_chunk, jobs))
        else:
            parts = [_gen_chunk(j) for j in jobs]
        return [t for p in parts for t in p[0]], [n for p in parts for n in p[1]]

    triples, notes = run(train_c, cfg)
    write_jsonl(args.out, [t.to_json() for t in triples])
    write_jsonl(args.notes or args.out + ".notes.jsonl", notes)
    if args.test_out and test_c:
        test_cfg = CorruptionConfig(args.p_sub_rare, args.p_del, args.p_ins, args.edit_intensity, args.seed + 1000)
        test, test_notes = run(test_c, test_cfg)
        write_jsonl(args.test_out, [t.to_json() for t in test])
        write_jsonl(args.test_out + ".notes.jsonl", test_notes)
    if args.list_out:
        save_full_list(args.list_out, full)
    log.info("wrote %d triples (%d rare words in the full list)", len(triples), len(full))
    return 0


def cmd_build_vocab(args) -> int:
    from .text import build_vocab

    _require(args.corpus)
    triples = _triples(args.corpus)
    vocab = build_vocab([t.tgt for t in triples] + [t.src for t in triples] + [c.split() for t in triples for c in t.ctx],
                        max_size=args.max_size, min_freq=args.min_freq)
    vocab.save(args.out)
    log.info("vocab of %d tokens -> %s", len(vocab), args.out)
    return 0


def cmd_build_list(args) -> int:
    from .rarelist import build_full_list, save_full_list

    _require(args.corpus)
    if args.corpus.endswith(".jsonl"):
        corpus = [t.tgt for t in _triples(args.corpus)]
    else:
        with open(args.corpus, encoding="utf-8") as f:
            corpus = [line.split() for line in f if line.strip()]
    full = build_full_list(corpus, top_k=args.top_k, max_count=args.max_count)
    save_full_list(args.out, full)
    log.info("%d rare words -> %s", len(full), args.out)
    return 0


def cmd_train(args) -> int:
    from .align import build_example
    from .model import ModelConfig
    from .text import Vocab
    from .train import TrainConfig, train_epochs

    _require(args.corpus, args.vocab, args.val)
    vocab = Vocab.load(args.vocab)
    mcfg = ModelConfig(len(vocab), d=args.d, encoder_layers=args.encoder_layers, encoder_heads=args.heads,
                       decoder_heads=args.heads, context_heads=args.heads, ffn_dim=args.ffn_dim,
                       max_positions=args.max_positions, max_decode_len=args.max_decode_len)
    tcfg = TrainConfig(gamma=args.gamma, lr=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                       seed=args.seed, clip_norm=args.clip_norm, dropout=args.dropout,
                       item_selection=args.item_selection, reduction=args.reduction)
    examples = [build_example(t, vocab, max_target_len=args.max_decode_len) for t in _triples(args.corpus)]
    val = _triples(args.val) if args.val else ()
    res = train_epochs(examples, tcfg, mcfg, vocab=vocab, val=val, out_dir=args.out_dir,
                       on_epoch=lambda r: log.info("epoch %d total %.4f", r.epoch, r.total))
    log.info("best epoch %s; checkpoints in %s", res.best_epoch, args.out_dir)
    return 0


def cmd_correct(args) -> int:
    from .infer import correct_batch
    from .io import write_jsonl

    model, vocab = _load_model(args)
    _require(args.corpus)
    triples = _triples(args.corpus)
    lists = [[] if args.empty_lists else t.ctx for t in triples]
    results = correct_batch([t.src for t in triples], lists, model, vocab, batch_size=args.batch_size)
    rows = []
    for t, r in zip(triples, results):
        row = r.to_json(t.src, vocab)
        row["tgt"] = " ".join(t.tgt)
        row["ctx"] = list(t.ctx)
        rows.append(row)
    write_jsonl(args.out, rows)
    log.info("corrected %d utterances -> %s", len(rows), args.out)
    return 0


def cmd_evaluate(args) -> int:
    from .io import atomic_write_text, read_jsonl
    from .metrics import score, werr

    _require(args.corpus, args.hyp)
    triples = _triples(args.corpus)
    if args.hyp:
        hyps = [r["hyp"].split() for r in read_jsonl(args.hyp)]
        if len(hyps) != len(triples):
            raise UsageError(f"{len(hyps)} hypotheses for {len(triples)} references")
    else:
        hyps = [t.src for t in triples]
    per_utt = [score(t.tgt, h, t.ctx) for t, h in zip(triples, hyps)]
    total = sum(per_utt[1:], per_utt[0]) if per_utt else None
    if total is None:
        raise UsageError("empty corpus")
    base = sum((score(t.tgt, t.src, t.ctx) for t in triples[1:]), score(triples[0].tgt, triples[0].src, triples[0].ctx))
    out = _report_json(total)
    out["werr"] = werr(base.wer.rate, total.wer.rate)
    out["input_wer_rate"] = base.wer.rate
    _dump(out, args.out)
    if args.out:
        print(f"WER {total.wer.rate:.4f}  B-WER {total.b_wer.rate:.4f}  U-WER {total.u_wer.rate:.4f}")
    if args.tsv:
        lines = ["index\tref\thyp\twer\tb_wer\tu_wer\n"]
        for n, (t, h, s) in enumerate(zip(triples, hyps, per_utt)):
            lines.append(f"{n}\t{' '.join(t.tgt)}\t{' '.join(h)}\t{s.wer.rate:.6g}\t{s.b_wer.rate:.6g}\t{s.u_wer.rate:.6g}\n")
        atomic_write_text(args.tsv, "".join(lines))
    return 0


def cmd_bench(args) -> int:
    from .benchmark import corrupted_fraction, speed_corpus
    from .infer import bench
    from .rarelist import load_full_list
    from .wordlists import rare_inventory, recognizer_lexicon

    model, vocab = _load_model(args)
    if args.corpus:
        _require(args.corpus)
        triples = _triples(args.corpus)
    else:
        if not args.full_list:
            raise UsageError("bench needs --corpus or --full-list")
        _require(args.full_list)
        triples = speed_corpus(load_full_list(args.full_list), recognizer_lexicon(exclude=rare_inventory()),
                               n=args.n, seed=args.seed)
    out = bench(triples, model, vocab, repeats=args.repeats)
    out["utterances"] = len(triples)
    out["corrupted_fraction"] = corrupted_fraction(triples)
    _dump(out, args.out)
    print(f"constrained {out['constrained_ms_median']:.2f} ms  baseline {out['baseline_ms_median']:.2f} ms  "
          f"speedup {out['speedup']}  step speedup {out['step_speedup']}")
    return 0


def cmd_grad_check(args) -> int:
    from .train import grad_check

    rep = grad_check(seed=args.seed, n_coords=args.coords)
    out = {"max_rel_error": rep.max_rel_error, "max_abs_error_small": rep.max_abs_error_small,
           "n_checked": rep.n_checked, "n_small": rep.n_small, "passed": rep.passed(), "worst": rep.worst}
    _dump(out, args.out)
    if not rep.passed():
        print(f"gradient check failed: max relative error {rep.max_rel_error:.3g}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    from .benchmark import sweep_list_size
    from .rarelist import load_full_list

    sizes = _parse_sizes(args.sizes)
    model, vocab = _load_model(args)
    _require(args.corpus, args.full_list)
    reports = sweep_list_size(model, vocab, _triples(args.corpus), load_full_list(args.full_list), sizes, args.seed)
    _dump({k: _report_json(v) for k, v in reports.items()}, args.out)
    for k, v in reports.items():
        print(f"{k:>10}  WER {v.wer.rate:.4f}  B-WER {v.b_wer.rate:.4f}  U-WER {v.u_wer.rate:.4f}")
    return 0


def cmd_demo(args) -> int:
    work = Path(args.work_dir)
    work.mkdir(parents=True, exist_ok=True)
    steps = [
        ["gen-data", "--out", str(work / "train.jsonl"), "--test-out", str(work / "test.jsonl"),
         "--list-out", str(work / "full_list.txt"), "--n", str(args.n), "--n-test", str(args.n_test)],
        ["build-vocab", "--corpus", str(work / "train.jsonl"), "--out", str(work / "vocab.txt")],
        ["train", "--corpus", str(work / "train.jsonl"), "--vocab", str(work / "vocab.txt"),
         "--out-dir", str(work / "model"), "--epochs", str(args.epochs)],
        ["correct", "--checkpoint", str(work / "model" / "last.ckpt"), "--vocab", str(work / "vocab.txt"),
         "--corpus", str(work / "test.jsonl"), "--out", str(work / "hyp.jsonl")],
        ["evaluate", "--corpus", str(work / "test.jsonl"), "--hyp", str(work / "hyp.jsonl"),
         "--out", str(work / "report.json"), "--tsv", str(work / "per_utterance.tsv")],
    ]
    for argv in steps:
        log.info("demo: %s", " ".join(argv))
        code = run(argv + ["--seed", str(args.seed)] + (["-v"] if args.verbose else []))
        if code:
            return code
    return 0


# -- parser ------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file with defaults for this subcommand's flags")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    model_io = argparse.ArgumentParser(add_help=False)
    model_io.add_argument("--checkpoint", required=True, help="binary checkpoint written by train")
    model_io.add_argument("--vocab", required=True, help="vocabulary file, one token per line")

    p = argparse.ArgumentParser(prog="edcec", description="Detect-then-correct ASR error correction with rare-word lists.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen-data", parents=[common], help="synthesize corrupted (src, tgt, list) triples")
    g.add_argument("--out", required=True, help="output JSONL of triples")
    g.add_argument("--notes", help="sidecar JSONL of corruption annotations (default: OUT.notes.jsonl)")
    g.add_argument("--test-out", help="also write a held-out split here")
    g.add_argument("--list-out", help="write the full rare-word list here")
    g.add_argument("--clean", help="clean sentences, one per line (default: bundled synthetic corpus)")
    g.add_argument("--n", type=int, default=2000, help="sentences in the main split (bundled corpus)")
    g.add_argument("--n-test", type=int, default=0, help="sentences held out for --test-out")
    g.add_argument("--full-list", help="use this rare-word inventory instead of deriving one")
    g.add_argument("--top-k", type=int, default=None, help="most frequent words excluded from the derived inventory")
    g.add_argument("--list-size", type=int, default=10, help="words per utterance list")
    g.add_argument("--anti", action="store_true", help="distractor-only lists (no true words)")
    g.add_argument("--p-sub-rare", type=float, default=0.6)
    g.add_argument("--p-del", type=float, default=0.02)
    g.add_argument("--p-ins", type=float, default=0.02)
    g.add_argument("--edit-intensity", type=int, default=2, help="max character edits per corrupted rare word")
    g.add_argument("--lexicon-extra", type=int, default=1000, help="generated in-lexicon words rare words can snap to")
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes (default: all cores)")
    g.set_defaults(func=cmd_gen_data)

    v = sub.add_parser("build-vocab", parents=[common], help="learn a word-piece vocabulary from a triple corpus")
    v.add_argument("--corpus", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--max-size", type=int, default=2000)
    v.add_argument("--min-freq", type=int, default=1)
    v.set_defaults(func=cmd_build_vocab)

    b = sub.add_parser("build-list", parents=[common], help="full rare-word list: everything outside the top-k words")
    b.add_argument("--corpus", required=True, help="JSONL triples (targets are used) or plain text")
    b.add_argument("--out", required=True)
    b.add_argument("--top-k", type=int, default=5000)
    b.add_argument("--max-count", type=int, default=None, help="also drop words seen this many times or more")
    b.set_defaults(func=cmd_build_list)

    t = sub.add_parser("train", parents=[common], help="train detector and corrector jointly")
    t.add_argument("--corpus", required=True)
    t.add_argument("--vocab", required=True)
    t.add_argument("--val", help="validation triples; best.ckpt then tracks validation WER")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--d", type=int, default=64, help="hidden size")
    t.add_argument("--encoder-layers", type=int, default=2)
    t.add_argument("--heads", type=int, default=4)
    t.add_argument("--ffn-dim", type=int, default=256)
    t.add_argument("--max-positions", type=int, default=256)
    t.add_argument("--max-decode-len", type=int, default=8)
    t.add_argument("--epochs", type=int, default=16)
    t.add_argument("--lr", type=float, default=2e-3)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--gamma", type=float, default=3.0, help="detection loss weight")
    t.add_argument("--dropout", type=float, default=0.1)
    t.add_argument("--clip-norm", type=float, default=None)
    t.add_argument("--reduction", choices=("mean", "utterance"), default="utterance")
    t.add_argument("--item-selection", choices=("gold", "argmax"), default="gold")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("correct", parents=[common, model_io], help="correct a triple corpus")
    c.add_argument("--corpus", required=True)
    c.add_argument("--out", required=True, help="JSONL with hyp, labels and per-position traces")
    c.add_argument("--empty-lists", action="store_true", help="ignore the corpus lists")
    c.add_argument("--batch-size", type=int, default=64)
    c.set_defaults(func=cmd_correct)

    e = sub.add_parser("evaluate", parents=[common], help="WER, B-WER and U-WER of hypotheses")
    e.add_argument("--corpus", required=True, help="reference triples (tgt and ctx are used)")
    e.add_argument("--hyp", help="output of correct (default: score the uncorrected sources)")
    e.add_argument("--out", help="report JSON (default: stdout)")
    e.add_argument("--tsv", help="per-utterance scores")
    e.set_defaults(func=cmd_evaluate)

    k = sub.add_parser("bench", parents=[common, model_io], help="constrained vs full-rewrite decoding cost")
    k.add_argument("--corpus", help="triples to time (default: bundled long-sentence corpus)")
    k.add_argument("--full-list", help="rare inventory for the bundled corpus")
    k.add_argument("--n", type=int, default=100)
    k.add_argument("--repeats", type=int, default=5)
    k.add_argument("--out")
    k.set_defaults(func=cmd_bench)

    gc = sub.add_parser("grad-check", parents=[common], help="finite-difference check of analytic gradients")
    gc.add_argument("--coords", type=int, default=100)
    gc.add_argument("--out")
    gc.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("sweep-list-size", parents=[common, model_io], help="score one model under several list sizes")
    s.add_argument("--corpus", required=True)
    s.add_argument("--full-list", required=True)
    s.add_argument("--sizes", default="0,anti-10,10", help="comma-separated N or anti-N (default 0,anti-10,10)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("demo", parents=[common], help="gen-data, train, correct and evaluate end to end")
    d.add_argument("--work-dir", required=True)
    d.add_argument("--n", type=int, default=2000)
    d.add_argument("--n-test", type=int, default=500)
    d.add_argument("--epochs", type=int, default=16)
    d.set_defaults(func=cmd_demo)
    return p


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            command = next((a for a in argv if not a.startswith("-")), None)
            if command is None:
                raise UsageError("--config needs a subcommand")
            _require(known.config)
            try:
                _apply_config(_subparser(parser, command), read_config(known.config))
            except KeyError:
                raise UsageError(f"unknown subcommand {command!r}")
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"edcec: error: {err}", file=sys.stderr)
        return 2
    except SystemExit as err:  # argparse usage errors and --help
        return int(err.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"edcec {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError, json.JSONDecodeError) as err:
        print(f"edcec {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
