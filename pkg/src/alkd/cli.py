"""Command-line entry point.

Subcommands: build-vocab, synth-teacher, pretrain, finetune, evaluate,
inspect-store. Exit codes: 0 success, 1 usage error, 2 data/validation
error, 3 divergence. Report-producing paths write figures next to their
delimited outputs.
"""

from __future__ import annotations

import argparse
import os
import sys


def _set_threads(n: str) -> None:
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ[var] = str(n)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def build_parser() -> _Parser:
    from .config import defaults_help

    p = _Parser(prog="alkd", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help="pin BLAS/OpenMP thread count (1 = fully deterministic)")

    bv = sub.add_parser("build-vocab", help="induce a vocabulary from records or a store")
    src = bv.add_mutually_exclusive_group(required=True)
    src.add_argument("--records", help="newline-delimited JSON records with a 'text' field")
    src.add_argument("--store", help="ALKD store; transcripts form the corpus")
    bv.add_argument("--size", type=int, required=True, help="total vocabulary size incl. reserved")
    bv.add_argument("--out", required=True, help="output vocab file, one token per line")
    common(bv)

    st = sub.add_parser("synth-teacher",
                        help="generate a synthetic teacher store with paired transcripts")
    st.add_argument("--classes", type=int, required=True)
    st.add_argument("--per-class", type=int, required=True)
    st.add_argument("--dim", type=int, required=True)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--noise-scale", type=float, default=0.1)
    st.add_argument("--norm-spread", type=float, default=0.0,
                    help="scale class c vectors by 1 + spread*c/(classes-1)")
    st.add_argument("--topic-prob", type=float, default=0.35,
                    help="probability a transcript word is class-topical")
    st.add_argument("--out", required=True, help="output .alkd store path")
    st.add_argument("--labels-out", default=None,
                    help="also write labeled text records (class id as label)")
    common(st)

    pt = sub.add_parser("pretrain", help="pretrain a student against a teacher store",
                        epilog=defaults_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    pt.add_argument("--store", required=True)
    pt.add_argument("--out", required=True, help="output directory")
    pt.add_argument("--config", default=None, help="JSON or TOML config file")
    pt.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="override a config key (repeatable)")
    pt.add_argument("--vocab", default=None, help="existing vocab file (else induced)")
    pt.add_argument("--resume", default=None, help="checkpoint to resume from")
    pt.add_argument("--seed", type=int, default=None, help="override train.seed")
    common(pt)

    ft = sub.add_parser("finetune", help="fine-tune a pretrained checkpoint on a task",
                        epilog=defaults_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    ft.add_argument("--checkpoint", required=True)
    ft.add_argument("--train", required=True, help="labeled records (JSONL)")
    ft.add_argument("--task", required=True,
                    help="sentiment_regression | sentiment_class_{7,5,3,2_with_neutral,"
                         "2_without_neutral} | emotion_binary:<name>")
    ft.add_argument("--config", default=None)
    ft.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ft.add_argument("--seed", type=int, default=0)
    ft.add_argument("--out", required=True, help="output fine-tuned checkpoint path")
    common(ft)

    ev = sub.add_parser("evaluate", help="fine-tune over seeds and report metrics",
                        epilog=defaults_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--train", required=True)
    ev.add_argument("--test", required=True)
    ev.add_argument("--tasks", required=True, help="comma-separated task list")
    ev.add_argument("--config", default=None)
    ev.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ev.add_argument("--out", required=True, help="output directory for reports/figures")
    common(ev)

    ins = sub.add_parser("inspect-store", help="validate a store and print its summary")
    ins.add_argument("--path", required=True)
    common(ins)
    return p


def _load_cfg(args):
    from .config import apply_overrides, load_config, validate_config_dict

    cfg = load_config(args.config) if args.config else {}
    validate_config_dict(cfg)
    return apply_overrides(cfg, args.overrides)


def cmd_build_vocab(args) -> int:
    from .store import read_store
    from .text import induce_vocab, read_records

    if args.records:
        corpus = [r.text for r in read_records(args.records)]
    else:
        corpus = [r.transcript for r in read_store(args.store).records]
    vocab = induce_vocab(corpus, args.size)
    vocab.save(args.out)
    print(f"wrote {vocab.size} tokens to {args.out}")
    return 0


def cmd_synth_teacher(args) -> int:
    from .store import write_store
    from .synthdata import build_synth_dataset
    from .text import write_records

    embeddings, labeled = build_synth_dataset(
        classes=args.classes, per_class=args.per_class, dim=args.dim,
        noise_scale=args.noise_scale, seed=args.seed,
        norm_spread=args.norm_spread, topic_prob=args.topic_prob,
    )
    write_store(embeddings, args.out)
    print(f"wrote {len(embeddings)} records (d_t={args.dim}) to {args.out}")
    if args.labels_out:
        write_records(labeled, args.labels_out)
        print(f"wrote labeled transcripts to {args.labels_out}")
    return 0


def cmd_pretrain(args) -> int:
    from .config import model_config, train_config
    from .report import render_loss_curve
    from .store import read_store
    from .text import Vocab
    from .train import pretrain

    cfg = _load_cfg(args)
    tc = train_config(cfg)
    mc = model_config(cfg)
    if args.seed is not None:
        tc.seed = args.seed
    vocab = Vocab.load(args.vocab) if args.vocab else None
    result = pretrain(read_store(args.store), tc, mc, out_dir=args.out,
                      vocab=vocab, resume_from=args.resume)
    render_loss_curve(result.metrics_path, os.path.join(args.out, "loss_curve.png"))
    final = result.metrics[-1] if result.metrics else {}
    print(f"finished at step {final.get('step', 0)}: total={final.get('total')}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_finetune(args) -> int:
    from .config import finetune_config
    from .finetune import finetune, save_finetuned
    from .text import read_records

    cfg = _load_cfg(args)
    fc = finetune_config(cfg)
    fc.task = args.task
    fc.validate()
    ft = finetune(args.checkpoint, read_records(args.train), fc, seed=args.seed)
    save_finetuned(ft, args.out)
    print(f"fine-tuned on task {args.task}; wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .config import finetune_config
    from .finetune import evaluate
    from .metrics import write_report
    from .report import render_report_figure, write_report_csv
    from .text import read_records

    cfg = _load_cfg(args)
    fc = finetune_config(cfg)
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    if not tasks:
        raise SystemExit(1)
    reports = evaluate(args.checkpoint, read_records(args.train),
                       read_records(args.test), tasks, fc)
    os.makedirs(args.out, exist_ok=True)
    for rep in reports:
        slug = rep.task.replace(":", "_")
        write_report(rep, os.path.join(args.out, f"report_{slug}.json"))
    write_report_csv(reports, os.path.join(args.out, "report.csv"))
    render_report_figure(reports, os.path.join(args.out, "report.png"))
    for rep in reports:
        for name, entry in sorted(rep.metrics.items()):
            mean = entry["mean"]
            std = entry["std"]
            shown = "undefined" if mean is None else f"{mean:.4f} +/- {std:.4f}"
            print(f"{rep.task} {name}: {shown}")
    return 0


def cmd_inspect_store(args) -> int:
    import numpy as np

    from .store import read_store

    s = read_store(args.path)
    print(f"store: {args.path}")
    print(f"d_t: {s.d_t}")
    print(f"count: {s.count}")
    if s.records:
        ids = [r.sample_id for r in s.records[:5]]
        print(f"ids: {', '.join(ids)}{', ...' if s.count > 5 else ''}")
        norms = np.linalg.norm(s.vectors(), axis=1)
        print(f"vector norms: min={norms.min():.4f} mean={norms.mean():.4f} max={norms.max():.4f}")
    return 0


_HANDLERS = {
    "build-vocab": cmd_build_vocab,
    "synth-teacher": cmd_synth_teacher,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "inspect-store": cmd_inspect_store,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # BLAS pools must be pinned before numpy is first imported
    if "--threads" in argv:
        i = argv.index("--threads")
        if i + 1 < len(argv):
            _set_threads(argv[i + 1])
    parser = build_parser()
    args = parser.parse_args(argv)

    from .errors import ConfigError, DataError, DimensionError, DivergenceError

    try:
        return _HANDLERS[args.command](args)
    except DivergenceError as exc:
        sys.stderr.write(f"alkd: divergence: {exc}\n")
        return 3
    except (DataError, ConfigError, DimensionError) as exc:
        sys.stderr.write(f"alkd: error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"alkd: i/o error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
