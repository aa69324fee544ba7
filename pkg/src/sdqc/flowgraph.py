"""A small stream-processing runtime in the style of a radio flow graph.

Blocks exchange numpy arrays of items over bounded FIFO edges. Every
non-source block is synchronous: it is handed ``n`` items on each input and
must return ``n`` items on each output. End-of-stream travels in band; a block
finishes once an input is exhausted, and the end marker is forwarded to all of
its outputs.

Graphs run either round-robin on the calling thread or with one thread per
block. Block outputs depend only on their input items, so both schedules give
identical results.
"""

from __future__ import annotations

import collections
import threading
import time
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

DEFAULT_CAPACITY = 1024


class GraphError(ValueError):
    """Invalid graph construction: type mismatch, cycle or dangling input."""


class Block:
    """Base class for processing blocks.

    Subclasses declare ``inputs`` and ``outputs`` as ``(port, item_type)``
    pairs and implement :meth:`work`.
    """

    inputs: Sequence[Tuple[str, str]] = ()
    outputs: Sequence[Tuple[str, str]] = ()

    def __init__(self, name: Optional[str] = None):
        self.name = name or type(self).__name__

    @property
    def is_source(self) -> bool:
        return not self.inputs

    def work(self, inputs: List[np.ndarray], max_items: int) -> Optional[List[np.ndarray]]:
        """Process one chunk.

        Sources get no inputs and return up to ``max_items`` items per output
        (at least one), or ``None`` when exhausted. Other blocks get ``n`` items
        per input and return exactly ``n`` per output.
        """
        raise NotImplementedError

    def stop(self, leftovers: List[np.ndarray]) -> None:
        """Called once at end of stream with any unconsumed input items."""

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name!r}>"


class Edge:
    """Bounded single-producer single-consumer FIFO of array chunks."""

    def __init__(self, item_type: str, capacity: int):
        self.item_type = item_type
        self.capacity = capacity
        self._chunks: Deque[np.ndarray] = collections.deque()
        self._count = 0
        self._eos = False
        self._closed = False
        self.peak = 0
        self.dropped = 0

    def available(self) -> int:
        return self._count

    def space(self) -> int:
        if self._closed:
            return self.capacity
        return 0 if self._eos else self.capacity - self._count

    def exhausted(self) -> bool:
        return self._eos and self._count == 0

    def close(self) -> None:
        """Consumer has finished; later writes are counted as dropped."""
        self._closed = True

    def write(self, items: np.ndarray) -> None:
        if self._closed:
            self.dropped += len(items)
            return
        if len(items) > self.space():
            raise RuntimeError("edge overflow")
        if len(items):
            self._chunks.append(items)
            self._count += len(items)
            self.peak = max(self.peak, self._count)

    def write_eos(self) -> None:
        self._eos = True

    def read(self, n: int) -> np.ndarray:
        parts = []
        need = n
        while need:
            head = self._chunks[0]
            if len(head) <= need:
                parts.append(self._chunks.popleft())
                need -= len(head)
            else:
                parts.append(head[:need])
                self._chunks[0] = head[need:]
                need = 0
        self._count -= n
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def drain(self) -> np.ndarray:
        if not self._count:
            return np.empty(0)
        return self.read(self._count)


@dataclass
class RunReport:
    items: Dict[str, int]
    reason: str
    elapsed: float
    peak_fill: Dict[str, int] = field(default_factory=dict)
    dropped: Dict[str, int] = field(default_factory=dict)


class FlowGraph:
    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise GraphError("edge capacity must be positive")
        self.capacity = capacity
        self.blocks: List[Block] = []
        self._in_edges: Dict[Tuple[int, str], Edge] = {}
        self._out_edges: Dict[Tuple[int, str], List[Edge]] = collections.defaultdict(list)
        self._links: List[Tuple[Block, str, Block, str]] = []

    def add(self, *blocks: Block) -> "FlowGraph":
        for b in blocks:
            if not any(b is x for x in self.blocks):
                if any(b.name == x.name for x in self.blocks):
                    raise GraphError(f"duplicate block name {b.name!r}")
                self.blocks.append(b)
        return self

    def connect(self, src: Block, src_port: str, dst: Block, dst_port: str, capacity: Optional[int] = None) -> Edge:
        self.add(src, dst)
        out_types = dict(src.outputs)
        in_types = dict(dst.inputs)
        if src_port not in out_types:
            raise GraphError(f"{src.name} has no output port {src_port!r}")
        if dst_port not in in_types:
            raise GraphError(f"{dst.name} has no input port {dst_port!r}")
        if out_types[src_port] != in_types[dst_port]:
            raise GraphError(
                f"type mismatch: {src.name}.{src_port} ({out_types[src_port]}) -> "
                f"{dst.name}.{dst_port} ({in_types[dst_port]})"
            )
        key = (id(dst), dst_port)
        if key in self._in_edges:
            raise GraphError(f"{dst.name}.{dst_port} already has an upstream edge")
        edge = Edge(in_types[dst_port], capacity or self.capacity)
        self._in_edges[key] = edge
        self._out_edges[(id(src), src_port)].append(edge)
        self._links.append((src, src_port, dst, dst_port))
        return edge

    def chain(self, *blocks: Block) -> "FlowGraph":
        """Connect single-port blocks in sequence (first output to first input)."""
        for a, b in zip(blocks, blocks[1:]):
            self.connect(a, a.outputs[0][0], b, b.inputs[0][0])
        return self

    def topological_order(self) -> List[Block]:
        indeg = {id(b): 0 for b in self.blocks}
        succ: Dict[int, List[Block]] = collections.defaultdict(list)
        for src, _, dst, _ in self._links:
            indeg[id(dst)] += 1
            succ[id(src)].append(dst)
        ready = [b for b in self.blocks if indeg[id(b)] == 0]
        order = []
        while ready:
            b = ready.pop(0)
            order.append(b)
            for d in succ[id(b)]:
                indeg[id(d)] -= 1
                if indeg[id(d)] == 0:
                    ready.append(d)
        if len(order) != len(self.blocks):
            stuck = sorted(b.name for b in self.blocks if indeg[id(b)] > 0)
            raise GraphError(f"graph has a cycle through {stuck}")
        return order

    def validate(self) -> List[Block]:
        if not self.blocks:
            raise GraphError("empty graph")
        for b in self.blocks:
            for port, _ in b.inputs:
                if (id(b), port) not in self._in_edges:
                    raise GraphError(f"dangling input {b.name}.{port}")
        return self.topological_order()

    def inputs_of(self, b: Block) -> List[Edge]:
        return [self._in_edges[(id(b), p)] for p, _ in b.inputs]

    def outputs_of(self, b: Block) -> List[List[Edge]]:
        return [self._out_edges.get((id(b), p), []) for p, _ in b.outputs]


class _Runner:
    def __init__(self, graph: FlowGraph, chunk: Optional[int]):
        self.order = graph.validate()
        self.graph = graph
        self.chunk = chunk or graph.capacity
        self.ins = {id(b): graph.inputs_of(b) for b in self.order}
        self.outs = {id(b): graph.outputs_of(b) for b in self.order}
        self.items = {b.name: 0 for b in self.order}
        self.done = set()
        self.leftovers = {id(b): [[] for _ in b.inputs] for b in self.order}

    def space(self, b: Block) -> int:
        spaces = [e.space() for port in self.outs[id(b)] for e in port]
        return min(spaces) if spaces else self.chunk

    def plan(self, b: Block) -> Tuple[str, int]:
        """Decide what ``b`` can do now: ('work', n), ('finish', 0) or ('wait', 0)."""
        space = min(self.space(b), self.chunk)
        if b.is_source:
            return ("work", space) if space > 0 else ("wait", 0)
        ins = self.ins[id(b)]
        n = min(e.available() for e in ins)
        if n == 0:
            if all(e.exhausted() for e in ins):
                return "finish", 0
            if any(e.exhausted() for e in ins):
                # unpairable from now on; keep draining so upstream never stalls
                if any(e.available() for e in ins):
                    return "drain", 0
            return "wait", 0
        n = min(n, space)
        return ("work", n) if n > 0 else ("wait", 0)

    def take(self, b: Block, n: int) -> List[np.ndarray]:
        return [e.read(n) for e in self.ins[id(b)]]

    def call(self, b: Block, inputs: List[np.ndarray], n: int) -> Optional[List[np.ndarray]]:
        out = b.work(inputs, n)
        if out is None:
            if not b.is_source:
                raise RuntimeError(f"{b.name}: only sources may signal end of stream")
            return None
        if len(out) != len(b.outputs):
            raise RuntimeError(f"{b.name}: returned {len(out)} outputs, declared {len(b.outputs)}")
        for arr in out:
            if b.is_source:
                if not 0 < len(arr) <= n or len(arr) != len(out[0]):
                    raise RuntimeError(f"{b.name}: source produced {len(arr)} items (limit {n})")
            elif len(arr) != n:
                raise RuntimeError(f"{b.name}: consumed {n} items but produced {len(arr)}")
        return out

    def emit(self, b: Block, out: List[np.ndarray]) -> None:
        for arr, edges in zip(out, self.outs[id(b)]):
            for e in edges:
                e.write(arr)
        if b.is_source:
            self.items[b.name] += len(out[0]) if out else 0

    def drain(self, b: Block) -> None:
        for parts, e in zip(self.leftovers[id(b)], self.ins[id(b)]):
            if e.available():
                parts.append(e.drain())

    def finish(self, b: Block) -> None:
        self.drain(b)
        leftovers = [np.concatenate(p) if p else np.empty(0) for p in self.leftovers[id(b)]]
        for e in self.ins[id(b)]:
            e.close()
        b.stop(leftovers)
        for edges in self.outs[id(b)]:
            for e in edges:
                e.write_eos()
        self.done.add(id(b))

    def edge_stats(self, attr: str) -> Dict[str, int]:
        return {f"{src.name}.{sp}->{dst.name}.{dp}": getattr(self.graph._in_edges[(id(dst), dp)], attr)
                for src, sp, dst, dp in self.graph._links}

    def run_serial(self) -> None:
        while len(self.done) < len(self.order):
            progress = False
            for b in self.order:
                if id(b) in self.done:
                    continue
                action, n = self.plan(b)
                if action == "finish":
                    self.finish(b)
                elif action == "drain":
                    self.drain(b)
                elif action == "work":
                    inputs = self.take(b, n) if not b.is_source else []
                    if not b.is_source:
                        self.items[b.name] += n
                    out = self.call(b, inputs, n)
                    if out is None:
                        self.finish(b)
                    else:
                        self.emit(b, out)
                else:
                    continue
                progress = True
            if not progress:
                raise RuntimeError("flow graph stalled")

    def run_threaded(self) -> None:
        cond = threading.Condition()
        errors: List[BaseException] = []

        def loop(b: Block) -> None:
            try:
                while True:
                    with cond:
                        while True:
                            if errors:
                                return
                            action, n = self.plan(b)
                            if action != "wait":
                                break
                            cond.wait()
                        if action == "finish":
                            self.finish(b)
                            cond.notify_all()
                            return
                        if action == "drain":
                            self.drain(b)
                            cond.notify_all()
                            continue
                        inputs = self.take(b, n) if not b.is_source else []
                        if not b.is_source:
                            self.items[b.name] += n
                        cond.notify_all()
                    out = self.call(b, inputs, n)
                    with cond:
                        if out is None:
                            self.finish(b)
                            cond.notify_all()
                            return
                        self.emit(b, out)
                        cond.notify_all()
            except BaseException as exc:  # surfaced by run()
                with cond:
                    errors.append(exc)
                    cond.notify_all()

        threads = [threading.Thread(target=loop, args=(b,), name=f"block-{b.name}", daemon=True) for b in self.order]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]


def run(graph: FlowGraph, threaded: bool = False, chunk: Optional[int] = None) -> RunReport:
    """Run ``graph`` until every source is exhausted and all items are drained.

    Returns per-block item counts (items consumed, or produced for sources).
    Validation problems raise :class:`GraphError` before any block runs.
    """
    runner = _Runner(graph, chunk)
    t0 = time.perf_counter()
    if threaded:
        runner.run_threaded()
    else:
        runner.run_serial()
    return RunReport(
        items=dict(runner.items),
        reason="sources exhausted",
        elapsed=time.perf_counter() - t0,
        peak_fill=runner.edge_stats("peak"),
        dropped={k: v for k, v in runner.edge_stats("dropped").items() if v},
    )
