"""Protocol tests for the adapter loop, with a stub in place of mT5."""

import io
import json

from mt5_adapter import PROTOCOL_VERSION, serve


class Stub:
    name = "stub"

    def __init__(self):
        self.seen = []
        self.saved = None

    def fit_step(self, batch, lr):
        self.seen.extend(b["target"] for b in batch)
        return 0.5 * lr

    def generate(self, inputs):
        if "boom" in inputs:
            raise RuntimeError("boom")
        return [self.seen[-1] if self.seen else "literal" for _ in inputs]

    def save(self, path):
        self.saved = path

    def load(self, path):
        assert path == self.saved


def run(model, *requests):
    stdin = io.StringIO("".join(json.dumps(r) + "\n" for r in requests))
    stdout = io.StringIO()
    serve(model, stdin, stdout)
    return [json.loads(line) for line in stdout.getvalue().splitlines()]


def test_round_trip():
    example = {
        "input": "x",
        "target": "figurative",
        "label": "figurative",
        "task": {"figure": "idiom", "language": "en", "template": "A"},
        "example_id": "e1",
    }
    out = run(
        Stub(),
        {"op": "hello", "version": PROTOCOL_VERSION},
        {"op": "fit_step", "batch": [example], "lr": 0.2},
        {"op": "generate", "inputs": ["a", "b"]},
        {"op": "save", "path": "/tmp/x"},
        {"op": "load", "path": "/tmp/x"},
        {"op": "shutdown"},
        {"op": "generate", "inputs": ["never read"]},
    )
    assert out[0] == {"ok": True, "version": 1, "backend": "stub"}
    assert out[1] == {"ok": True, "loss": 0.1}
    assert out[2] == {"ok": True, "outputs": ["figurative", "figurative"], "errors": [None, None]}
    assert [r["ok"] for r in out[3:]] == [True, True, True]
    assert len(out) == 6


def test_failures_are_reported_not_raised():
    out = run(
        Stub(),
        {"op": "hello", "version": 2},
        {"op": "frobnicate"},
        {"op": "generate", "inputs": ["ok", "boom"]},
    )
    assert not out[0]["ok"] and "version" in out[0]["error"]
    assert not out[1]["ok"]
    assert out[2]["outputs"] == ["literal", None]
    assert out[2]["errors"][0] is None and "boom" in out[2]["errors"][1]
