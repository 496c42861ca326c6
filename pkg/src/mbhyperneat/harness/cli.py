"""Command-line front end: ``evolve``, ``replay``, ``stats`` and ``calibrate``.

Exit codes: 0 success, 1 configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .. import genome as G
from ..domains import environment as envfile
from ..domains.calibrate import calibrate
from ..domains.config import DOMAINS
from ..domains.evaluate import write_trace
from ..evolve import METHODS, evaluate_genome, run_experiment
from ..stats import format_table, pairwise_table
from ..substrate import ConfigurationError
from . import manifest as mf

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

FAMILY_METHOD = {"single": "1M", "spg": "SPG", "multitask": "MT", "preference": "MM(D)"}


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _manifest_keys():
    keys = [k for k, _ in mf.ExperimentManifest().as_items()]
    return keys + [k for k in mf.DOMAIN_KEYS if k not in keys]


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mbhyperneat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evolve", help="run one evolutionary experiment")
    ev.add_argument("--manifest", help="key=value manifest file; flags override its values")
    for key in _manifest_keys():
        ev.add_argument(_flag(key), dest=key, default=None, metavar="VALUE")

    rp = sub.add_parser("replay", help="evaluate a genome once and write its trace")
    rp.add_argument("genome")
    rp.add_argument("--domain", required=True)
    rp.add_argument("--method", help="decoding method (default: inferred from the genome family)")
    rp.add_argument("--seed", type=int, default=0, help="accepted for symmetry; evaluations are deterministic")
    rp.add_argument("--environment", help="environment file (default: built-in arena)")
    rp.add_argument("--trace", default="trace.csv")

    st = sub.add_parser("stats", help="compare methods from per-run champion scores")
    st.add_argument("files", nargs="+",
                    help="CSV files with one column per method (header row of method names)")

    ca = sub.add_parser("calibrate", help="check kinematics against the time budgets")
    ca.add_argument("--domain", choices=DOMAINS)
    return p


def _load_envs(path, domain):
    if not path:
        return None
    try:
        return envfile.load(path)
    except OSError as exc:
        raise CLIError(f"cannot read environment file {path}: {exc.strerror or exc}", EXIT_IO)
    except envfile.EnvironmentFormatError as exc:
        raise CLIError(f"{path}: {exc}", EXIT_IO)


def cmd_evolve(args) -> int:
    values = {}
    if args.manifest:
        try:
            base = mf.load(args.manifest)
        except OSError as exc:
            raise CLIError(f"cannot read manifest {args.manifest}: {exc.strerror or exc}", EXIT_IO)
        values = dict(base.as_items())
        values.update(base.domain)
    for key in _manifest_keys():
        text = getattr(args, key, None)
        if text is not None:
            values[key] = mf.parse_value(key, text)
    manifest = mf.from_values(values).validate()
    evo = manifest.evolution
    envs = _load_envs(manifest.environment, evo.domain)
    out = Path(manifest.output_dir)

    def progress(rec):
        logging.getLogger("mbhyperneat").info(
            "gen %d champion %.6f mean %.6f species %d", rec["generation"],
            rec["champion_fitness"], rec["mean_fitness"], rec["species"])

    try:
        out.mkdir(parents=True, exist_ok=True)
        mf.save(manifest, out / "manifest.txt")
        result = run_experiment(evo, out, envs, manifest.domain_config(), progress)
    except OSError as exc:
        raise CLIError(str(exc), EXIT_IO)
    print(f"champion_fitness={result.champion_fitness!r} generations={result.log[-1]['generation']} "
          f"output_dir={out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    if args.domain not in DOMAINS:
        raise CLIError(f"domain: unknown domain {args.domain!r}; expected one of {list(DOMAINS)}",
                       EXIT_CONFIG)
    try:
        text = Path(args.genome).read_text()
    except OSError as exc:
        raise CLIError(f"cannot read genome file {args.genome}: {exc.strerror or exc}", EXIT_IO)
    try:
        genome = G.loads(text)
    except G.GenomeError as exc:
        raise CLIError(f"{args.genome}: {exc}", EXIT_IO)
    method = args.method or FAMILY_METHOD[genome.family]
    if method not in METHODS:
        raise CLIError(f"method: unknown method {method!r}", EXIT_CONFIG)
    envs = _load_envs(args.environment, args.domain)
    result = evaluate_genome(genome, method, args.domain, envs)
    try:
        write_trace(result.trace, args.trace)
    except OSError as exc:
        raise CLIError(f"cannot write trace {args.trace}: {exc.strerror or exc}", EXIT_IO)
    print(f"fitness={result.fitness!r}")
    print(f"brains_used={result.brains_used}")
    return EXIT_OK


def read_score_columns(paths) -> dict[str, list[float]]:
    """Merge score columns from CSV files; empty cells allow ragged columns."""
    columns: dict[str, list[float]] = {}
    for path in paths:
        try:
            with open(path, newline="") as fh:
                rows = [r for r in csv.reader(fh) if r]
        except OSError as exc:
            raise CLIError(f"cannot read score file {path}: {exc.strerror or exc}", EXIT_IO)
        if not rows:
            raise CLIError(f"{path}: empty score file", EXIT_IO)
        header = [h.strip() for h in rows[0]]
        for name in header:
            if name in columns:
                raise CLIError(f"{path}: duplicate method column {name!r}", EXIT_CONFIG)
            columns[name] = []
        for lineno, row in enumerate(rows[1:], start=2):
            for name, cell in zip(header, row):
                cell = cell.strip()
                if not cell:
                    continue
                try:
                    columns[name].append(float(cell))
                except ValueError:
                    raise CLIError(f"{path}: line {lineno}: bad score {cell!r}", EXIT_IO) from None
    return columns


def cmd_stats(args) -> int:
    columns = read_score_columns(args.files)
    if len(columns) < 2:
        raise CLIError(f"stats needs at least 2 method columns, got {len(columns)}", EXIT_CONFIG)
    empty = [k for k, v in columns.items() if not v]
    if empty:
        raise CLIError(f"method column {empty[0]!r} has no scores", EXIT_CONFIG)
    kw, table = pairwise_table(columns)
    sys.stdout.write(format_table(kw, table, list(columns)))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    for d in ([args.domain] if args.domain else DOMAINS):
        r = calibrate(d)
        print(f"{d}: steps={r['steps']} longest_leg={r['longest_leg']:.1f} "
              f"({r['longest_leg_steps']:.0f} steps) needed={r['needed_steps']:.0f} "
              f"ratio={r['ratio']:.2f}")
    return EXIT_OK


COMMANDS = {"evolve": cmd_evolve, "replay": cmd_replay, "stats": cmd_stats,
            "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
