"""Command line entry point: ``scriptwatch <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .pipeline import (DataError, NetworkError, RunConfig, cmd_analyze, cmd_audit,
                       cmd_crawl, cmd_poll, cmd_report, cmd_train)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NETWORK = 0, 1, 2, 3

# flag dest -> config key
_FLAG_KEYS = {
    "workspace": "workspace", "seeds": "seeds", "seed": "seed",
    "timeout": "timeout_seconds", "workers": "workers", "retries": "retries",
    "max_redirects": "max_redirects", "per_host_cap": "per_host_cap",
    "host_delay": "host_delay_seconds", "user_agent": "user_agent", "proxy": "proxy",
    "top_k": "top_k", "filter_list": "filter_list", "max_depth": "max_depth",
    "folds": "folds", "repetitions": "repetitions", "min_leaf": "min_leaf",
    "poll_interval": "poll_interval_hours", "trust_env": "trust_env",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _common_options() -> argparse.ArgumentParser:
    # accepted before or after the command name; unset flags stay absent
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("global options")
    g.add_argument("--workspace", type=Path, help="workspace directory (default ./workspace)")
    g.add_argument("--config", type=Path, help="JSON file with any of these options")
    g.add_argument("--seed", type=int, help="random seed for under-sampling and folds")
    g.add_argument("--timeout", type=_positive_float, help="seconds per GET (default 30)")
    g.add_argument("--workers", type=_positive_int, help="parallel fetches (default 16)")
    g.add_argument("--retries", type=int, help="retries on dns/connect/timeout (default 1)")
    g.add_argument("--max-redirects", type=int, help="default 10")
    g.add_argument("--per-host-cap", type=_positive_int, help="concurrent GETs per host (default 4)")
    g.add_argument("--host-delay", type=float, help="seconds between GETs to one host (default 0.1)")
    g.add_argument("--user-agent")
    g.add_argument("--proxy", help="HTTP proxy URL for every request")
    g.add_argument("--no-env-proxy", dest="trust_env", action="store_const", const=False,
                   help="ignore HTTP(S)_PROXY environment variables")
    g.add_argument("--top-k", type=_positive_int, help="top second-level domain dummies (default 15)")
    g.add_argument("--filter-list", type=Path, help="Adblock Plus style list file")
    g.add_argument("--max-depth", type=_positive_int, help="tree depth limit (default 15)")
    g.add_argument("--folds", type=_positive_int, help="cross-validation folds (default 10)")
    g.add_argument("--repetitions", type=_positive_int, help="under-sampled repetitions (default 100)")
    g.add_argument("--min-leaf", type=_positive_int, help="minimum rows per leaf (default 1)")
    g.add_argument("--poll-interval", type=_positive_float, help="hours between rounds (default 24)")
    g.add_argument("--seeds", type=Path, help="file of seed domains, one per line")
    g.add_argument("--json", action="store_true", help="machine-readable output")
    g.add_argument("-v", "--verbose", action="count")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    p = _Parser(prog="scriptwatch", parents=[common],
                description="Monitor the temporal integrity of cross-origin scripts.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, text in [
        ("crawl", "fetch seed pages and build the polling pool"),
        ("poll", "run the next polling round (cron-friendly)"),
        ("analyze", "summaries, feature matrix and report"),
        ("report", "regenerate the report directory"),
        ("train", "cross-validate the decision tree"),
    ]:
        sub.add_parser(name, help=text, parents=[common])
    audit = sub.add_parser("audit", help="check one page's cross-origin scripts for SRI",
                           parents=[common])
    audit.add_argument("url")
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError(f"config {config_path} must hold a JSON object")
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            data[key] = str(value) if isinstance(value, Path) else value
    try:
        return RunConfig.from_mapping(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _print_audit(items, as_json: bool) -> None:
    if as_json:
        print(json.dumps([i.to_json() for i in items], indent=2, sort_keys=True))
        return
    if not items:
        print("no cross-origin scripts found")
    for item in items:
        status = "pass" if not item.findings else "; ".join(item.findings)
        print(f"{item.script_url}: {status}")
        if item.suggested_integrity:
            print(f"    suggested: integrity=\"{item.suggested_integrity}\" crossorigin=\"anonymous\"")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(getattr(args, "verbose", 0) or 0, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    as_json = getattr(args, "json", False)
    try:
        config = load_config(args)
        if args.command == "audit":
            _print_audit(cmd_audit(args.url, config.fetch), as_json)
            return EXIT_OK
        command = {"crawl": cmd_crawl, "poll": cmd_poll, "analyze": cmd_analyze,
                   "report": cmd_report, "train": cmd_train}[args.command]
        result = command(config)
    except UsageError as exc:
        print(f"scriptwatch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"scriptwatch: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NetworkError as exc:
        print(f"scriptwatch: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    if as_json:
        print(json.dumps(result, sort_keys=True))
    else:
        for key, value in result.items():
            print(f"{key}: {value}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
