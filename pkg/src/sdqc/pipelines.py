"""Transmitter, receiver and simulation flow graphs, and the runs built on them."""

from __future__ import annotations

import asyncio
import contextlib
import csv
import io
import logging
import math
import signal
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence


from .blocks import (
    BerMeter,
    BerStats,
    Coincidence,
    MessageSink,
    MessageSource,
    QmChannel,
    QmEncodeSink,
    QmEventSource,
    SdcDecode,
    SdcEncode,
    SinkReport,
)
from .client import QmClient
from .detector import ClockModel
from .flowgraph import DEFAULT_CAPACITY, FlowGraph, RunReport, run
from .protocol import DEFAULT_PORT, Role
from .quantum import ChannelPauli, MeasurementModel, check_probability
from .seeds import random_payload
from .server import QmServer, QubitManager, ServerConfig

log = logging.getLogger(__name__)

DEFAULT_SWEEP = tuple(round(0.02 * k, 2) for k in range(1, 16))
DEFAULT_PAIRS = 100_000


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "sim"
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    p: float = 0.0
    model: MeasurementModel = MeasurementModel.COMPLETE
    seed: int = 0
    payload_path: Optional[str] = None
    random_bytes: Optional[int] = None
    window: int = 200
    sweep: Sequence[float] = DEFAULT_SWEEP
    pairs: int = DEFAULT_PAIRS
    out: Optional[str] = None
    event_log: Optional[str] = None
    clock: ClockModel = field(default_factory=ClockModel)
    capacity: int = DEFAULT_CAPACITY
    threaded: bool = False

    def __post_init__(self):
        try:
            check_probability(self.p)
            for p in self.sweep:
                check_probability(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.window < 1:
            raise ConfigError("window must be positive")
        if self.pairs < 1:
            raise ConfigError("pairs must be positive")
        if self.random_bytes is not None and self.random_bytes < 0:
            raise ConfigError("random byte count must be non-negative")
        if not self.sweep:
            raise ConfigError("sweep grid is empty")
        self.model = MeasurementModel(self.model)

    def server_config(self, p: Optional[float] = None) -> ServerConfig:
        return ServerConfig(p=self.p if p is None else p, model=self.model, seed=self.seed,
                            clock=self.clock, host=self.host, port=self.port)

    def load_payload(self, point: int = 0) -> bytes:
        if self.payload_path is not None:
            try:
                return Path(self.payload_path).read_bytes()
            except OSError as exc:
                raise ConfigError(f"cannot read payload {self.payload_path}: {exc}") from None
        if self.random_bytes is not None:
            return random_payload(self.seed, self.random_bytes, point)
        return random_payload(self.seed, math.ceil(self.pairs / 4), point)


@dataclass
class SimResult:
    p: float
    model: MeasurementModel
    payload: bytes
    stats: BerStats
    sink: SinkReport
    histogram: Dict[ChannelPauli, int]
    run: RunReport
    invalid: int = 0

    @property
    def payload_match(self) -> bool:
        return self.sink.payload == self.payload


# --- graphs --------------------------------------------------------------

def build_tx_graph(payload: bytes, client, capacity: int = DEFAULT_CAPACITY) -> FlowGraph:
    g = FlowGraph(capacity)
    g.chain(MessageSource(payload), SdcEncode(), QmEncodeSink(client, name="QmServer"))
    return g


def _receiver_tail(g: FlowGraph, upstream, reference: bytes, clock: ClockModel, model, window: int, event_log=None):
    coinc = Coincidence(clock, model, event_log=event_log)
    decode = SdcDecode()
    sink = MessageSink()
    meter = BerMeter(window)
    ref = MessageSource(reference, name="ReferenceSource")
    g.chain(upstream, coinc, decode, sink)
    g.connect(decode, "out", meter, "received")
    g.connect(ref, "out", meter, "sent")
    return coinc, sink, meter


def build_rx_graph(client, reference: bytes, clock: ClockModel, model, window: int,
                   capacity: int = DEFAULT_CAPACITY, event_log=None):
    g = FlowGraph(capacity)
    source = QmEventSource(client, expected=4 * len(reference), name="QmServer")
    coinc, sink, meter = _receiver_tail(g, source, reference, clock, model, window, event_log)
    return g, sink, meter


def build_sim_graph(payload: bytes, manager: QubitManager, window: int,
                    capacity: int = DEFAULT_CAPACITY, event_log=None):
    """Full loop: source -> encode -> QM server -> coincidence -> decode -> sink, plus BER."""
    g = FlowGraph(capacity)
    source = MessageSource(payload)
    channel = QmChannel(manager, name="QmServer")
    g.chain(source, SdcEncode(), channel)
    cfg = manager.config
    coinc, sink, meter = _receiver_tail(g, channel, payload, cfg.clock, cfg.model, window, event_log)
    return g, coinc, sink, meter


# --- runs ----------------------------------------------------------------

def simulate(payload: bytes, server_config: ServerConfig, window: int = 200, point: int = 0,
             capacity: int = DEFAULT_CAPACITY, threaded: bool = False, event_log=None) -> SimResult:
    manager = QubitManager(server_config, point=point)
    g, coinc, sink, meter = build_sim_graph(payload, manager, window, capacity, event_log)
    report = run(g, threaded=threaded)
    if meter.mismatch is not None:
        raise meter.mismatch
    return SimResult(server_config.p, server_config.model, payload, meter.stats, sink.report,
                     manager.error_histogram(), report, coinc.invalid)


def _open_event_log(path: Optional[str]):
    if path is None:
        return contextlib.nullcontext(None)
    return open(path, "w", newline="")


def run_sim(config: RunConfig) -> SimResult:
    payload = config.load_payload()
    with _open_event_log(config.event_log) as elog:
        result = simulate(payload, config.server_config(), config.window, capacity=config.capacity,
                          threaded=config.threaded, event_log=elog)
    if config.out:
        write_report(config.out, report_rows(config, result.stats, result.sink, result.payload,
                                             histogram=result.histogram))
        write_windows(_sibling(config.out, ".windows.csv"), result.stats)
    return result


def run_sweep(config: RunConfig) -> str:
    """Sweep the noise grid; returns (and optionally writes) the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "ber", "analytic_ber", "erasure_rate", "pairs"])
    for point, p in enumerate(config.sweep):
        payload = config.load_payload(point)
        res = simulate(payload, config.server_config(p), config.window, point=point,
                       capacity=config.capacity, threaded=config.threaded)
        w.writerow([f"{p:g}", f"{res.stats.ber:.6f}", f"{2 * p / 3:.6f}",
                    f"{res.stats.erasure_rate:.6f}", res.stats.pairs])
        log.info("p=%g ber=%.5f pairs=%d (%.2fs)", p, res.stats.ber, res.stats.pairs, res.run.elapsed)
    text = buf.getvalue()
    if config.out:
        Path(config.out).write_text(text)
    return text


@dataclass
class TxResult:
    requests: int
    qubit_ids: List[int]
    run: RunReport


def run_tx(config: RunConfig) -> TxResult:
    payload = config.load_payload()
    with QmClient(config.host, config.port, Role.TX) as client:
        log.info("TX banner: %s", client.banner)
        g = build_tx_graph(payload, client, config.capacity)
        sink = g.blocks[-1]
        report = run(g, threaded=config.threaded)
    return TxResult(len(sink.qubit_ids), sink.qubit_ids, report)


@dataclass
class RxResult:
    stats: BerStats
    sink: SinkReport
    reference: bytes
    run: RunReport
    empty_polls: int


def run_rx(config: RunConfig, poll_interval: float = 0.01) -> RxResult:
    reference = config.load_payload()
    with QmClient(config.host, config.port, Role.RX) as client, _open_event_log(config.event_log) as elog:
        log.info("RX banner: %s", client.banner)
        model = MeasurementModel(client.banner.model)
        g, sink, meter = build_rx_graph(client, reference, config.clock, model, config.window,
                                        config.capacity, elog)
        source = g.blocks[0]
        source.poll_interval = poll_interval
        report = run(g, threaded=config.threaded)
    if meter.mismatch is not None:
        raise meter.mismatch
    if config.out:
        Path(config.out).write_bytes(sink.report.payload)
        write_report(_sibling(config.out, ".report.csv"),
                     report_rows(config, meter.stats, sink.report, reference))
        write_windows(_sibling(config.out, ".windows.csv"), meter.stats)
    return RxResult(meter.stats, sink.report, reference, report, source.empty_polls)


def run_server(config: RunConfig) -> Dict[ChannelPauli, int]:
    """Serve until SIGINT/SIGTERM; returns the session's applied-error histogram."""
    server = QmServer(config.server_config())

    async def main():
        await server.start()
        print(f"listening on {config.host}:{server.port}", flush=True)
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        await stop.wait()
        await server.close()

    asyncio.run(main())
    hist = server.manager.error_histogram()
    log.info("session closed: %d qubits, errors %s", server.manager.created,
             {k.name: v for k, v in hist.items()})
    if config.out:
        write_report(config.out, [("qubits", server.manager.created)] +
                     [(f"error_{k.name}", v) for k, v in hist.items()])
    return hist


# --- output --------------------------------------------------------------

def _sibling(path: str, suffix: str) -> str:
    return str(path) + suffix


def report_rows(config: RunConfig, stats: BerStats, sink: SinkReport, reference: bytes,
                histogram: Optional[Dict[ChannelPauli, int]] = None):
    zero = sum(1 for k in stats.window_errors if k == 0)
    rows = [
        ("mode", config.mode),
        ("p", f"{config.p:g}"),
        ("model", config.model.name.lower()),
        ("seed", config.seed),
        ("pairs", stats.pairs),
        ("bits_compared", stats.bits_compared),
        ("bit_errors", stats.bit_errors),
        ("ber", f"{stats.ber:.6f}"),
        ("erasures", stats.erasures),
        ("erasure_rate", f"{stats.erasure_rate:.6f}"),
        ("window", stats.window_size),
        ("windows", len(stats.window_errors)),
        ("zero_windows", zero),
        ("payload_match", int(sink.payload == reference)),
        ("partial_trailing_bits", sink.partial_trailing_bits),
    ]
    if histogram is not None:
        rows += [(f"error_{k.name}", v) for k, v in histogram.items()]
    return rows


def write_report(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerows(rows)


def write_windows(path: str, stats: BerStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "bit_errors", "ber"])
        for i, k in enumerate(stats.window_errors):
            w.writerow([i, k, f"{k / stats.window_size:.6f}"])
