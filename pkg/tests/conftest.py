import os
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from sdqc.server import ServerConfig, ServerThread

ROOT = Path(__file__).resolve().parents[1]


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def server():
    with ServerThread(ServerConfig(p=0.0, port=0, seed=7)) as srv:
        yield srv


@pytest.fixture
def make_server():
    started = []

    def _make(**kw):
        kw.setdefault("port", 0)
        srv = ServerThread(ServerConfig(**kw)).start()
        started.append(srv)
        return srv

    yield _make
    for srv in started:
        srv.stop()


def cli_cmd(*args):
    return [sys.executable, "-m", "sdqc", *map(str, args)]


def cli_env():
    env = dict(os.environ)
    env["PYTHONPATH"] = str(ROOT / "src") + os.pathsep + env.get("PYTHONPATH", "")
    return env


def spawn_server(port: int, *extra) -> subprocess.Popen:
    proc = subprocess.Popen(
        cli_cmd("--mode", "server", "--port", port, *extra),
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, env=cli_env(), text=True,
    )
    line = proc.stdout.readline()
    assert line.startswith("listening"), (line, proc.stderr.read() if proc.poll() is not None else "")
    return proc


def wait_exit(proc: subprocess.Popen, timeout: float = 30.0) -> int:
    try:
        return proc.wait(timeout)
    finally:
        if proc.poll() is None:
            proc.kill()


@pytest.fixture
def port():
    return free_port()


@pytest.fixture
def timer():
    t0 = time.perf_counter()
    return lambda: time.perf_counter() - t0
