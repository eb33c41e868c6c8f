#!/usr/bin/env python3
"""mT5 adapter for `figdetect train --backend external`.

Speaks the line protocol in docs/adapter-protocol.md on stdin/stdout and
logs to stderr. The Rust side owns batching, the learning-rate schedule,
early stopping and evaluation; this process only runs the network.

    figdetect train --preset prompt_multitask \
        --adapter "python3 adapters/mt5_adapter.py --model google/mt5-base"
"""

import argparse
import json
import logging
import os
import sys

PROTOCOL_VERSION = 1

log = logging.getLogger("mt5_adapter")


class Mt5:
    """Seq2seq model with an AdamW optimizer whose rate the caller sets."""

    def __init__(self, model_name, device, max_input_len, max_new_tokens, seed):
        import torch
        from transformers import AutoTokenizer, MT5ForConditionalGeneration

        torch.manual_seed(seed)
        self.torch = torch
        self.device = torch.device(device)
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = MT5ForConditionalGeneration.from_pretrained(model_name).to(self.device)
        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=0.0)
        self.max_input_len = max_input_len
        self.max_new_tokens = max_new_tokens
        self.name = "mt5:" + model_name

    def _encode(self, texts, max_len):
        return self.tokenizer(
            texts, max_length=max_len, truncation=True, padding=True, return_tensors="pt"
        ).to(self.device)

    def fit_step(self, batch, lr):
        self.model.train()
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        enc = self._encode([b["input"] for b in batch], self.max_input_len)
        labels = self._encode([b["target"] for b in batch], 16).input_ids
        labels[labels == self.tokenizer.pad_token_id] = -100
        loss = self.model(**enc, labels=labels).loss
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return float(loss.item())

    def generate(self, inputs):
        self.model.eval()
        with self.torch.no_grad():
            enc = self._encode(inputs, self.max_input_len)
            out = self.model.generate(**enc, max_new_tokens=self.max_new_tokens, num_beams=1, do_sample=False)
        return self.tokenizer.batch_decode(out, skip_special_tokens=True)

    def save(self, path):
        os.makedirs(path, exist_ok=True)
        self.model.save_pretrained(path)
        self.tokenizer.save_pretrained(path)
        self.torch.save(self.optimizer.state_dict(), os.path.join(path, "optimizer.pt"))

    def load(self, path):
        from transformers import MT5ForConditionalGeneration

        self.model = MT5ForConditionalGeneration.from_pretrained(path).to(self.device)
        self.optimizer = self.torch.optim.AdamW(self.model.parameters(), lr=0.0)
        opt = os.path.join(path, "optimizer.pt")
        if os.path.exists(opt):
            self.optimizer.load_state_dict(self.torch.load(opt, map_location=self.device))


def handle(model, req):
    op = req.get("op")
    if op == "hello":
        if req.get("version") != PROTOCOL_VERSION:
            return {"ok": False, "error": "unsupported protocol version %r" % req.get("version")}
        return {"ok": True, "version": PROTOCOL_VERSION, "backend": model.name}
    if op == "fit_step":
        return {"ok": True, "loss": model.fit_step(req["batch"], float(req["lr"]))}
    if op == "generate":
        inputs = req["inputs"]
        if not inputs:
            return {"ok": True, "outputs": [], "errors": []}
        try:
            return {"ok": True, "outputs": model.generate(inputs), "errors": [None] * len(inputs)}
        except Exception as e:
            # Fall back to one input at a time so a bad input only fails itself.
            outputs, errors = [], []
            for text in inputs:
                try:
                    outputs.append(model.generate([text])[0])
                    errors.append(None)
                except Exception as inner:
                    outputs.append(None)
                    errors.append(str(inner) or str(e))
            return {"ok": True, "outputs": outputs, "errors": errors}
    if op == "save":
        model.save(req["path"])
        return {"ok": True}
    if op == "load":
        model.load(req["path"])
        return {"ok": True}
    if op == "shutdown":
        return {"ok": True}
    return {"ok": False, "error": "unknown op %r" % op}


def serve(model, stdin, stdout):
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except ValueError as e:
            resp = {"ok": False, "error": "malformed request: %s" % e}
            req = {}
        else:
            try:
                resp = handle(model, req)
            except Exception as e:
                log.exception("%s failed", req.get("op"))
                resp = {"ok": False, "error": "%s: %s" % (type(e).__name__, e)}
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()
        if req.get("op") == "shutdown":
            break


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model", default="google/mt5-base")
    p.add_argument("--device", default="cuda" if _cuda() else "cpu")
    p.add_argument("--max-input-len", type=int, default=512)
    p.add_argument("--max-new-tokens", type=int, default=8)
    p.add_argument("--seed", type=int, default=42)
    args = p.parse_args()
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="[mt5_adapter] %(message)s")
    log.info("loading %s on %s", args.model, args.device)
    model = Mt5(args.model, args.device, args.max_input_len, args.max_new_tokens, args.seed)
    serve(model, sys.stdin, sys.stdout)


def _cuda():
    try:
        import torch

        return torch.cuda.is_available()
    except ImportError:
        return False


if __name__ == "__main__":
    main()
