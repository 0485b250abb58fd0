"""End-to-end: the pipeline's own client talking to a live server socket."""

from __future__ import annotations

import socket
import threading
import time

import httpx
import pytest
import uvicorn

from cskb_model_server.app import create_app
from cskb_model_server.generator import BundledGenerator
from cskb_model_server.scorer import BundledScorer

from cskb_distill.core import parse_triple_file
from cskb_distill.critic import RemoteCritic
from cskb_distill.data import mini_cskb_path
from cskb_distill.distill import Distiller, LoopConfig
from cskb_distill.gateway import Gateway, GenParams, RemoteBackend


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def server_url():
    port = _free_port()
    config = uvicorn.Config(
        create_app(BundledGenerator(seed=3), BundledScorer(seed=3)),
        host="127.0.0.1",
        port=port,
        log_level="warning",
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        try:
            if httpx.get(f"{url}/healthz", timeout=1.0).status_code == 200:
                break
        except httpx.TransportError:
            time.sleep(0.05)
    else:
        raise RuntimeError("server did not come up")
    yield url
    server.should_exit = True
    thread.join(timeout=5)


def test_full_round_through_the_wire(server_url):
    with open(mini_cskb_path(), "rb") as fh:
        entries, errors = parse_triple_file(fh, "tsv")
    assert not errors
    seeds = [(t, m) for t, m in entries if m is not None][:8]

    backend = RemoteBackend(f"{server_url}/v1/chat/completions", model_name="bundled-tiny")
    gateway = Gateway(backend)
    critic = RemoteCritic(server_url)
    cfg = LoopConfig(
        rounds=1,
        n_c=6,
        tau=0.5,
        conceptualization_params=GenParams.conceptualization_profile(seed=3),
        instantiation_params=GenParams.instantiation_profile(seed=3),
        max_in_flight=4,
    )
    distiller = Distiller(gateway, gateway, critic, cfg)
    store = distiller.run_loop(seeds)

    # No schema errors: every failure would have landed in the error ledger.
    schema_failures = [e for e in store.errors if "malformed" in e.message or "ScoreProtocolError" in e.message]
    assert schema_failures == []
    assert store.round_stats[0].concepts_generated > 0
    assert store.concept_records, "no concepts survived; scorer distribution is off"
    for record in store.concept_records + store.instantiation_records:
        assert record.score is not None and 0.0 <= record.score <= 1.0
        assert record.generator_id == "remote-bundled-tiny"


def test_rerun_is_deterministic_through_the_wire(server_url):
    with open(mini_cskb_path(), "rb") as fh:
        entries, _ = parse_triple_file(fh, "tsv")
    seeds = [(t, m) for t, m in entries if m is not None][:4]

    def run():
        backend = RemoteBackend(f"{server_url}/v1/chat/completions")
        critic = RemoteCritic(server_url)
        cfg = LoopConfig(
            rounds=1,
            n_c=5,
            tau=0.5,
            conceptualization_params=GenParams.conceptualization_profile(seed=3),
            instantiation_params=GenParams.instantiation_profile(seed=3),
        )
        gateway = Gateway(backend)
        store = Distiller(gateway, gateway, critic, cfg).run_loop(seeds)
        return [(r.id, r.concept, r.score) for r in store.concept_records]

    assert run() == run()
