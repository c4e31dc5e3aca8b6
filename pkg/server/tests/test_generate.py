import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from laca_server.sampling import BuiltinSampler, UpstreamProxy, apply_stop_and_budget, top_p_filter
from laca_server.service_errors import ServiceError


class TestTopPFilter:
    def test_keeps_smallest_nucleus(self):
        probs = np.array([0.5, 0.3, 0.15, 0.05])
        filtered = top_p_filter(probs, 0.8)
        assert filtered[2] == 0 and filtered[3] == 0
        assert abs(filtered.sum() - 1.0) < 1e-12
        assert filtered[0] == pytest.approx(0.5 / 0.8)

    def test_p_one_keeps_all(self):
        probs = np.array([0.25, 0.25, 0.25, 0.25])
        assert np.allclose(top_p_filter(probs, 1.0), probs)

    def test_always_keeps_top_token(self):
        probs = np.array([0.9, 0.1])
        filtered = top_p_filter(probs, 0.1)
        assert filtered[0] == 1.0 and filtered[1] == 0.0

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            top_p_filter(np.array([1.0]), 0.0)


class TestBuiltinSampler:
    def test_temperature_zero_echoes_prompt(self):
        sampler = BuiltinSampler()
        prompt = "hello world this is a prompt"
        got = sampler.complete(prompt, {"temperature": 0.0, "max_tokens": 128}, [], None)
        assert got == prompt

    def test_stop_sequence_truncates(self):
        sampler = BuiltinSampler()
        got = sampler.complete(
            "alpha beta STOP gamma", {"temperature": 0.0, "max_tokens": 128}, ["STOP"], None
        )
        assert got == "alpha beta "

    def test_max_tokens_one(self):
        sampler = BuiltinSampler()
        got = sampler.complete("a b c d", {"temperature": 0.0, "max_tokens": 1}, [], None)
        assert got.split() == ["a"]
        sampled = sampler.complete("a b c d", {"temperature": 0.8, "top_p": 0.9, "max_tokens": 1}, [], 3)
        assert len(sampled.split()) <= 1

    def test_seeded_sampling_deterministic(self):
        sampler = BuiltinSampler()
        sampling = {"temperature": 0.8, "top_p": 0.8, "max_tokens": 16}
        a = sampler.complete("x y z x y x", sampling, [], 42)
        b = sampler.complete("x y z x y x", sampling, [], 42)
        c = sampler.complete("x y z x y x", sampling, [], 43)
        assert a == b
        assert a != c  # overwhelmingly likely with 16 draws over 3 tokens

    def test_nucleus_excludes_rare_tokens(self):
        sampler = BuiltinSampler()
        # 'rare' has prob 1/12 at T=1; top_p=0.8 keeps only the frequent token
        prompt = " ".join(["common"] * 11 + ["rare"])
        got = sampler.complete(prompt, {"temperature": 1.0, "top_p": 0.8, "max_tokens": 50}, [], 7)
        assert set(got.split()) == {"common"}

    def test_empty_prompt(self):
        assert BuiltinSampler().complete("", {"temperature": 0.0, "max_tokens": 4}, [], None) == ""


class TestStopBudget:
    def test_earliest_stop_wins(self):
        assert apply_stop_and_budget("a B c D e", ["D", "B"], 100) == "a "

    def test_budget_counts_words(self):
        assert apply_stop_and_budget("a b c d", [], 2) == "a b"


class _Upstream(BaseHTTPRequestHandler):
    behaviour = "ok"

    def log_message(self, *args):
        pass

    def do_POST(self):
        import json

        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.behaviour == "ok":
            reply = json.dumps({"text": f"upstream:{body['prompt']}"}).encode()
            self.send_response(200)
        else:
            reply = b'{"error": "boom"}'
            self.send_response(500)
        self.send_header("Content-Length", str(len(reply)))
        self.end_headers()
        self.wfile.write(reply)


class TestUpstreamProxy:
    @pytest.fixture
    def upstream(self):
        server = ThreadingHTTPServer(("127.0.0.1", 0), _Upstream)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        yield server
        server.shutdown()

    def test_forwards_and_returns_text(self, upstream):
        _Upstream.behaviour = "ok"
        proxy = UpstreamProxy(f"http://127.0.0.1:{upstream.server_address[1]}")
        assert proxy.complete("ping", {"temperature": 0.0}, [], 1) == "upstream:ping"

    def test_upstream_failure_is_502(self, upstream):
        _Upstream.behaviour = "fail"
        proxy = UpstreamProxy(f"http://127.0.0.1:{upstream.server_address[1]}")
        with pytest.raises(ServiceError) as err:
            proxy.complete("ping", {}, [], None)
        assert err.value.status == 502

    def test_unreachable_upstream_is_502(self):
        proxy = UpstreamProxy("http://127.0.0.1:9", timeout_s=0.2)
        with pytest.raises(ServiceError) as err:
            proxy.complete("ping", {}, [], None)
        assert err.value.status == 502
