"""Command line front-end: ``run``, ``compare`` and ``validate`` on a JSON config."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load
from .distributions import HypothesisError, QuadratureError, SamplingError
from .experiment import compare, run, validation_lines


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="path to a JSON config, or the name of a shipped one")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="Monte Carlo seed (overrides mc.seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo")
    common.add_argument(
        "--override-unbounded",
        action="store_true",
        help="proceed even if A is unbounded or takes negative values",
    )
    p = argparse.ArgumentParser(
        prog="randlegendre",
        description="Moments of the random Legendre equation by truncated random power series.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="write moment tables and a manifest")
    sub.add_parser("compare", parents=[common], help="compare engine moments with Monte Carlo")
    sub.add_parser("validate", parents=[common], help="check the model hypotheses")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg.mc.seed = args.seed
        if args.override_unbounded:
            cfg.override_unbounded = True
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")

        if args.command == "validate":
            ok, lines = validation_lines(cfg)
            print("\n".join(lines))
            return 0 if ok else 1

        if args.command == "run":
            result = run(cfg, out_dir=args.out, workers=args.threads)
            for path in result.written:
                print(f"wrote {path}")
            bad = result.table.unconverged()
            if bad:
                print(f"warning: {len(bad)} cells did not converge under quadrature refinement")
            return 0

        if not cfg.mc.enabled:
            print("error: compare needs Monte Carlo; set mc.enabled to true", file=sys.stderr)
            return 2
        comp = compare(cfg, out_dir=args.out, workers=args.threads)
        print(comp.to_markdown(f"({cfg.name})"), end="")
        return 0
    except HypothesisError as exc:
        print(f"error: model violates the hypotheses: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, QuadratureError, SamplingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
