# =====================================================
# CONSENSUS CF TRACKER - MAIN CLI
# =====================================================
#
# This is the main entry point for the application.
# It ties together all our modules:
#
# CORE MODULES:
#   - spectral.py   - DFTs, shifts, crop/embed operators
#   - features.py   - patches -> feature channels
#   - solver.py     - ADMM filter learning
#   - tracker.py    - detection, consensus, gated updates
#   - evaluation.py - one-pass evaluation and metrics
#
# SUPPORT MODULES:
#   - sequences.py  - loading and rendering sequences
#   - run_config.py - the key=value run-config file
#   - selftest.py   - oracle suites
#   - benchmark.py  - timing of the hot paths
#
# Run with:
#   python main.py track  <sequence_dir> [more dirs...] [--out DIR]
#   python main.py synth  [--out DIR] [--seed N]
#   python main.py selftest
#   python main.py bench  [--sizes 16,32,64]
#   python main.py defaults
#
# Exit codes: 0 ok, 1 config error, 2 data error,
#             3 solver diverged, 4 self-test failure
#
# =====================================================

import argparse
import logging
import sys
from pathlib import Path

from config import LOG_LEVEL

from src.benchmark import format_benchmark_csv, run_benchmark
from src.errors import ConfigError, DataError, SelfTestFailure, SolverDivergedError, TrackerError
from src.evaluation import headline, run_batch, run_ope, write_outputs
from src.run_config import RunConfig, dump_run_config, load_run_config
from src.selftest import run_selftest
from src.sequences import generate_synthetic, load_sequence, write_sequence

logger = logging.getLogger("cftrack")

EXIT_CODES = [
    (ConfigError, 1),
    (DataError, 2),
    (SolverDivergedError, 3),
    (SelfTestFailure, 4),
]


class TrackerCLI:
    """
    The command-line front end.

    Each cmd_* method runs one command and returns an exit code;
    run() dispatches and turns package errors into exit codes
    with a one-line diagnostic.

    USAGE:
    ------
    >>> args = build_parser().parse_args(["synth", "--out", "seq"])
    >>> TrackerCLI(args).run()
    0
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: RunConfig | None = None

    # -------------------------------------------------
    # HELPERS
    # -------------------------------------------------

    def load_config(self) -> RunConfig:
        """Config file + --set overrides + --seed / --trace flags."""
        overrides = {}
        for item in self.args.set or []:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects key=value, got {item!r}", key=key)
            overrides[key.strip()] = value.strip()
        if self.args.seed is not None:
            overrides["run.seed"] = str(self.args.seed)
        if self.args.trace:
            overrides["run.trace"] = "true"
        self.config = load_run_config(self.args.config, overrides)
        return self.config

    def output_dir(self) -> Path:
        return Path(self.args.out or self.config.run.output_dir)

    def banner(self, title: str):
        print("\n" + "=" * 60)
        print(title)
        print("=" * 60)

    # -------------------------------------------------
    # COMMANDS
    # -------------------------------------------------

    def cmd_track(self) -> int:
        """
        Run OPE on one or more sequences.

        One sequence writes boxes.csv, decisions.csv, metrics.json,
        curves.csv and run_config.env straight into the output
        directory. Several get a subdirectory each plus summary.json.
        """
        config = self.load_config()
        tracker_config = config.tracker_config()
        out_dir = self.output_dir()

        directories = list(self.args.sequences or [])
        if not directories and config.run.sequence_dir:
            directories = [config.run.sequence_dir]

        if self.args.synthetic:
            sequence = generate_synthetic(config.synthetic, config.run.seed)
        elif len(directories) == 1:
            sequence = load_sequence(directories[0])
        elif directories:
            sequence = None
        else:
            raise ConfigError("no sequence given (pass a directory, --synthetic or run.sequence_dir)",
                              key="run.sequence_dir")

        out_dir.mkdir(parents=True, exist_ok=True)
        dump_run_config(config, out_dir / "run_config.env")

        if sequence is None:
            self.banner(f"TRACKING {len(directories)} SEQUENCES")
            summaries = run_batch(directories, tracker_config, out_dir, jobs=self.args.jobs)
            for s in summaries:
                print(f"  {s['name']:<24} precision@20 {s['precision_at_20']:.3f}  AUC {s['auc']:.3f}")
            print(f"\nSummary written to {out_dir / 'summary.json'}")
            return 0

        self.banner(f"TRACKING {sequence.name} ({len(sequence)} frames)")
        result, metrics = run_ope(sequence, tracker_config)
        write_outputs(result, metrics, out_dir, trace=config.run.trace)

        summary = headline(sequence.name, result, metrics)
        print(f"  Precision @ 20px:  {summary['precision_at_20']:.3f}")
        print(f"  Success AUC:       {summary['auc']:.3f}")
        print(f"  Success rate @0.5: {summary['success_rate_50']:.3f}")
        print(f"  Mean CLE:          {metrics['mean_cle']:.2f} px")
        if result.lost_frames:
            print(f"  Lost frames:       {result.lost_frames}")
        print(f"\nResults written to {out_dir}")
        return 0

    def cmd_synth(self) -> int:
        """Render the configured synthetic sequence to disk."""
        config = self.load_config()
        out_dir = self.output_dir()

        self.banner("RENDERING SYNTHETIC SEQUENCE")
        sequence = generate_synthetic(config.synthetic, config.run.seed)
        truth_path = write_sequence(sequence, out_dir)

        print(f"  Frames:      {len(sequence)}")
        print(f"  Seed:        {config.run.seed}")
        if sequence.occluded_frames:
            print(f"  Occluded:    {', '.join(str(i) for i in sequence.occluded_frames)}")
        print(f"  Truth file:  {truth_path}")
        return 0

    def cmd_selftest(self) -> int:
        """Run the oracle suites; exit 4 if any fails."""
        config = self.load_config()
        self.banner("SELF-TEST")

        results = run_selftest(config.run.seed, self.args.suite or None)
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            print(f"  [{status}] {r.name:<24} {r.checks:>5} checks  {r.seconds:6.2f}s")
            for failure in r.failures[:3]:
                print(f"         - {failure}")

        failed = [r.name for r in results if not r.passed]
        print("-" * 60)
        if failed:
            raise SelfTestFailure(f"failed suites: {', '.join(failed)}")
        print(f"  All {len(results)} suites passed")
        return 0

    def cmd_bench(self) -> int:
        """Time train and detect; print (and save) the CSV."""
        config = self.load_config()
        try:
            sizes = [int(s) for s in self.args.sizes.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--sizes must be comma-separated integers, got {self.args.sizes!r}",
                              key="bench.sizes") from None

        rows = run_benchmark(
            sizes,
            channels=self.args.channels,
            repeats=self.args.repeats,
            solver=config.solver,
            scale=config.scale,
            cell_size=config.features.cell_size,
            seed=config.run.seed,
        )
        text = format_benchmark_csv(rows)
        print(text, end="")
        if self.args.out:
            out_dir = Path(self.args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "bench.csv").write_text(text)
        return 0

    def cmd_defaults(self) -> int:
        """Print the effective configuration."""
        print(dump_run_config(self.load_config()), end="")
        return 0

    # -------------------------------------------------
    # DISPATCH
    # -------------------------------------------------

    def run(self) -> int:
        commands = {
            "track": self.cmd_track,
            "synth": self.cmd_synth,
            "selftest": self.cmd_selftest,
            "bench": self.cmd_bench,
            "defaults": self.cmd_defaults,
        }
        try:
            return commands[self.args.command]()
        except TrackerError as e:
            logger.debug("%s failed", self.args.command, exc_info=True)
            for kind, code in EXIT_CODES:
                if isinstance(e, kind):
                    print(f"error: {e}", file=sys.stderr)
                    return code
            print(f"error: {e}", file=sys.stderr)
            return 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value run-config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--trace", action="store_true", help="write solver_trace.csv")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Consensus correlation-filter tracker",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", parents=[common], help="run one-pass evaluation")
    track.add_argument("sequences", nargs="*", help="sequence directories")
    track.add_argument("--synthetic", action="store_true", help="track the configured synthetic sequence")
    track.add_argument("--jobs", type=int, default=1, help="parallel sequences")

    sub.add_parser("synth", parents=[common], help="render a synthetic sequence")

    selftest = sub.add_parser("selftest", parents=[common], help="run the oracle suites")
    selftest.add_argument("--suite", action="append", help="run only this suite (repeatable)")

    bench = sub.add_parser("bench", parents=[common], help="time train and detect")
    bench.add_argument("--sizes", default="16,32,64", help="comma-separated grid sides")
    bench.add_argument("--channels", type=int, default=9)
    bench.add_argument("--repeats", type=int, default=5)

    sub.add_parser("defaults", parents=[common], help="print the effective config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else LOG_LEVEL.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return TrackerCLI(args).run()


if __name__ == "__main__":
    sys.exit(main())
