"""Command-line entry point.

Exit status: 0 success, 1 configuration error, 2 transport error,
3 protocol error. ``SDQC_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from .blocks import StreamMismatchError
from .client import ServerError, TransportError
from .pipelines import (
    DEFAULT_PAIRS,
    ConfigError,
    RunConfig,
    run_rx,
    run_server,
    run_sim,
    run_sweep,
    run_tx,
)
from .protocol import DEFAULT_PORT
from .quantum import MeasurementModel

EXIT_OK, EXIT_CONFIG, EXIT_TRANSPORT, EXIT_PROTOCOL = 0, 1, 2, 3

log = logging.getLogger("sdqc")


def _grid(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sweep grid {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdqc", description="Super-dense coding over an emulated qubit-management server.")
    ap.add_argument("--mode", required=True, choices=["server", "tx", "rx", "sim", "sweep"])
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=DEFAULT_PORT)
    ap.add_argument("--p", type=float, default=0.0, help="depolarizing probability")
    ap.add_argument("--model", choices=["complete", "lo"], default="complete",
                    help="Bell-state measurement: complete or linear-optical")
    ap.add_argument("--seed", type=int, default=0)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--payload", metavar="FILE", help="message file to send / compare against")
    src.add_argument("--random-bytes", type=int, metavar="N", help="use N seeded random bytes as the message")
    ap.add_argument("--window", type=int, default=200, help="BER window in bits")
    ap.add_argument("--sweep", type=_grid, metavar="P1,P2,...", help="noise grid for sweep mode")
    ap.add_argument("--pairs", type=int, default=DEFAULT_PAIRS, help="bit pairs per run when no payload is given")
    ap.add_argument("--out", metavar="PATH")
    ap.add_argument("--event-log", metavar="PATH", help="write detection events as timestamp,channel lines")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    kw = dict(
        mode=args.mode, host=args.host, port=args.port, p=args.p,
        model=MeasurementModel.parse(args.model), seed=args.seed,
        payload_path=args.payload, random_bytes=args.random_bytes,
        window=args.window, pairs=args.pairs, out=args.out, event_log=args.event_log,
    )
    if args.sweep is not None:
        kw["sweep"] = tuple(args.sweep)
    return RunConfig(**kw)


def _setup_logging() -> None:
    level = os.environ.get("SDQC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if config.mode == "server":
            run_server(config)
        elif config.mode == "tx":
            res = run_tx(config)
            print(f"sent {res.requests} encode requests")
        elif config.mode == "rx":
            res = run_rx(config)
            print(f"received {res.stats.pairs} pairs: ber={res.stats.ber:.6f} "
                  f"erasure_rate={res.stats.erasure_rate:.6f} payload_match={res.sink.payload == res.reference}")
        elif config.mode == "sim":
            res = run_sim(config)
            hist = " ".join(f"{k.name}={v}" for k, v in res.histogram.items())
            print(f"pairs={res.stats.pairs} ber={res.stats.ber:.6f} erasure_rate={res.stats.erasure_rate:.6f} "
                  f"payload_match={res.payload_match} errors: {hist}")
        else:
            text = run_sweep(config)
            if not config.out:
                sys.stdout.write(text)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ServerError, StreamMismatchError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
