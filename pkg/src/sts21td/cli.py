"""Command line entry point: ``sts21td <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

CHECKPOINT_ENV = "STS21TD_CHECKPOINT"
MODES = {"tau7": "tau_eq_7", "tau3plus": "tau_ge_3", "full": "full"}

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    mode: str | None = None
    threads: int = 1
    checkpoint: Path | None = None
    inputs: tuple[Path, ...] = ()
    output: Path | None = None
    verbose: bool = False


def _log(cfg: RunConfig, msg: str) -> None:
    if cfg.verbose:
        print(msg, file=sys.stderr, flush=True)


def _points(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def _read_existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _writable(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_catalog(args, cfg: RunConfig) -> int:
    from .canonical import canonical_form
    from .catalog import Sts9Family, enumerate_td36_main_classes
    from .core import format_design

    if args.kind == "sts9":
        fam = Sts9Family.build(_points(args.support))
        blocks = [_points(b) for b in args.with_block or []]
        if len(blocks) > 3:
            raise UsageError("at most three --with-block triples")
        for b in blocks:
            if len(b) != 3 or not set(b) <= set(fam.support):
                raise UsageError(f"--with-block {b} is not a triple of the support")
        members = fam.with_blocks(*blocks) if blocks else fam.all
        print(f"{len(members)} labeled STS(9) on {list(fam.support)}", file=sys.stderr)
        if args.count:
            _emit(f"{len(members)}\n", cfg.output)
        else:
            _emit("".join(format_design(s) + "\n" for s in members), cfg.output)
        return EXIT_OK
    cat = enumerate_td36_main_classes()
    print(f"{len(cat.representatives)} main classes, {cat.total_squares()} latin squares", file=sys.stderr)
    parts = []
    for i, td in enumerate(cat.representatives):
        rec = canonical_form(td)
        parts.append(f"# class {i} aut={cat.aut_orders[i]} squares={cat.class_sizes[i]} "
                     f"partitions={len(cat.splittable[i] or ())} hash={rec.hash}\n" + format_design(td) + "\n")
    _emit("".join(parts), cfg.output)
    return EXIT_OK


def cmd_canon(args, cfg: RunConfig) -> int:
    from .canonical import canonical_form
    from .core import parse_designs

    designs = parse_designs(cfg.inputs[0].read_text())
    lines = []
    for d in designs:
        rec = canonical_form(d)
        lines.append(f"{rec.hash} aut={rec.aut_order}")
        if args.cert:
            lines.append(rec.certificate.decode().rstrip("\n"))
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK


def cmd_classify(args, cfg: RunConfig) -> int:
    from .assembler import run_pipeline, write_records

    start = time.time()
    res = run_pipeline(
        cfg.mode,
        cfg.threads,
        checkpoint_dir=cfg.checkpoint,
        check_lemmas=args.check_lemmas,
        resolve=not args.no_resolve,
        progress=lambda m: print(f"[{time.time() - start:8.1f}s] {m}", file=sys.stderr, flush=True),
    )
    if cfg.output is None:
        for r in res.records:
            sys.stdout.write(r.to_json() + "\n")
    else:
        write_records(cfg.output, res.records)
    st = res.stats
    print(f"{len(res.records)} classes from {st.candidates} candidates", file=sys.stderr)
    if args.check_lemmas:
        print(f"flower count vs predicted tau: {st.lemma_checked} checked, {len(st.lemma_failures)} mismatches; "
              f"flower counts {dict(sorted(st.tau_histogram.items()))}", file=sys.stderr)
        if st.lemma_failures or st.stratum_failures:
            return EXIT_MISMATCH
    return EXIT_OK


def cmd_resolve(args, cfg: RunConfig) -> int:
    from .analysis import is_resolvable
    from .core import TripleSystem, parse_designs

    designs = parse_designs(cfg.inputs[0].read_text())
    if len(designs) != 1 or not isinstance(designs[0], TripleSystem):
        raise UsageError("resolve expects exactly one triple system")
    try:
        ok, res = is_resolvable(designs[0])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit((res.to_text() + "\n") if ok else "NOT RESOLVABLE\n", cfg.output)
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    from .analysis import check_structure_theorems, table_report
    from .assembler import read_records

    records = read_records(cfg.inputs[0])
    rep = table_report(records)
    _emit((rep.to_json() if args.json else rep.text()) + "\n", cfg.output)
    if args.check_theorems:
        bad = 0
        for r in records:
            sr = check_structure_theorems(r.system())
            if not sr.ok or sr.tau6 != r.tau6 or sr.sigma9 != r.sigma9:
                bad += 1
                print(f"{r.cert_hash}: {sr.violations or 'census differs from record'}", file=sys.stderr)
        print(f"structure checks: {len(records) - bad}/{len(records)} records pass", file=sys.stderr)
        if bad:
            return EXIT_MISMATCH
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    from .assembler import read_records
    from .validate import partial_consistency, total_pairs_formula, weighted_class_sum

    records = read_records(cfg.inputs[0])
    rep = partial_consistency(records, args.stratum)
    out = [rep.text(), f"weighted class sum {weighted_class_sum(records)}",
           f"pairs formula      {total_pairs_formula()}"]
    _emit("\n".join(out) + "\n", cfg.output)
    return EXIT_OK if rep.ok else EXIT_MISMATCH


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sts21td", description="STS(21) with a sub-TD(3,6): catalogs, classification, checks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("catalog", help="list labeled STS(9) or the TD(3,6) main classes")
    c.add_argument("kind", choices=["sts9", "td36"])
    c.add_argument("--support", default="0..8", help="STS(9) support, e.g. 0..8 or 0,1,2,9,10,11,12,13,14")
    c.add_argument("--with-block", action="append", metavar="A,B,C", help="required block (repeatable)")
    c.add_argument("--count", action="store_true", help="print only the number of systems")
    c.add_argument("--out")

    c = sub.add_parser("canon", help="certificate hash and |Aut| of each design in a file")
    c.add_argument("file")
    c.add_argument("--cert", action="store_true", help="also print the full certificate")
    c.add_argument("--out")

    c = sub.add_parser("classify", help="run the isomorph-free classification")
    c.add_argument("--mode", required=True, choices=sorted(MODES))
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--checkpoint", help=f"checkpoint directory (default: ${CHECKPOINT_ENV})")
    c.add_argument("--out")
    c.add_argument("--check-lemmas", action="store_true",
                   help="compare flower counts with the predicted tau on every candidate")
    c.add_argument("--no-resolve", action="store_true", help="skip the resolvability test")

    c = sub.add_parser("resolve", help="find a resolution of one STS or report none")
    c.add_argument("file")
    c.add_argument("--out")

    c = sub.add_parser("report", help="census table of a JSONL record file")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--check-theorems", action="store_true")
    c.add_argument("--json", action="store_true")
    c.add_argument("--out")

    c = sub.add_parser("validate", help="compare a JSONL record file with the published census")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--stratum", required=True, choices=["tau7", "tau3plus", "full"])
    c.add_argument("--out")
    return p


COMMANDS = {"catalog": cmd_catalog, "canon": cmd_canon, "classify": cmd_classify,
            "resolve": cmd_resolve, "report": cmd_report, "validate": cmd_validate}


def _config(args) -> RunConfig:
    cfg = RunConfig(args.command, verbose=args.verbose, output=_writable(getattr(args, "out", None)))
    if args.command == "classify":
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        cfg.mode = MODES[args.mode]
        cfg.threads = args.threads
        ck = args.checkpoint or os.environ.get(CHECKPOINT_ENV)
        cfg.checkpoint = Path(ck) if ck else None
        if cfg.checkpoint is not None and cfg.checkpoint.exists() and not cfg.checkpoint.is_dir():
            raise UsageError(f"checkpoint path is not a directory: {cfg.checkpoint}")
    path = getattr(args, "file", None) or getattr(args, "input", None)
    if path is not None:
        cfg.inputs = (_read_existing(path),)
    return cfg


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"sts21td: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"sts21td: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
