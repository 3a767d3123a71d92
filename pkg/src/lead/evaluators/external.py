"""Evaluators running in a child process, spoken to over line-delimited JSON.

Request (one line on the child's stdin)::

    {"request_id": 7, "sequence": "ACDE", "ca_coords": [[x, y, z], ...],
     "orientations": [[r00, r01, ..., r22], ...]}

Response (one line on stdout), in request order::

    {"request_id": 7, "score": -1.25}
    {"request_id": 7, "error": "message"}

Scores are lower-is-better properties; the returned reward is ``-score``.
"""
from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading

import numpy as np

from ..diffusion import CdrState
from .base import Evaluator, EvaluatorError


class ExternalEvaluatorError(EvaluatorError):
    pass


class EvaluatorTimeout(ExternalEvaluatorError):
    pass


class MalformedResponse(ExternalEvaluatorError):
    pass


class ProtocolError(ExternalEvaluatorError):
    """Response id did not match the outstanding request."""


class ProcessExited(ExternalEvaluatorError):
    pass


class RemoteError(ExternalEvaluatorError):
    """The child answered with an ``error`` field."""


def encode_request(request_id: int, a: CdrState) -> str:
    payload = {
        "request_id": int(request_id),
        "sequence": a.sequence,
        "ca_coords": [[float(v) for v in row] for row in np.asarray(a.coords)],
        "orientations": [[float(v) for v in r.ravel()] for r in np.asarray(a.orients)],
    }
    # json uses repr() for floats, which round-trips exactly
    return json.dumps(payload, separators=(",", ":"))


def decode_response(line: str, request_id: int) -> float:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"response is not JSON: {line[:200]!r}") from exc
    if not isinstance(msg, dict) or "request_id" not in msg:
        raise MalformedResponse(f"response lacks request_id: {line[:200]!r}")
    if msg["request_id"] != request_id:
        raise ProtocolError(f"expected request_id {request_id}, got {msg['request_id']!r}")
    if "error" in msg:
        raise RemoteError(str(msg["error"]))
    score = msg.get("score")
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
        raise MalformedResponse(f"response has no finite score: {line[:200]!r}")
    return float(score)


class ExternalEvaluatorHandle:
    """One child process; requests are serialized (single in flight)."""

    def __init__(self, command, timeout: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._next_id = 0
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True, encoding="utf-8", bufsize=1)
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, a: CdrState) -> float:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            if self._proc.poll() is not None:
                raise ProcessExited(f"evaluator exited with code {self._proc.returncode}")
            try:
                self._proc.stdin.write(encode_request(rid, a) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProcessExited(f"evaluator pipe closed: {exc}") from exc
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise EvaluatorTimeout(
                    f"no response to request {rid} within {self.timeout} s") from None
            if line is None:
                code = self._proc.wait(timeout=5)
                raise ProcessExited(f"evaluator exited with code {code}")
            return decode_response(line, rid)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_evaluate(handle: ExternalEvaluatorHandle, a: CdrState) -> float:
    return -handle.request(a)


class ExternalEvaluator(Evaluator):
    """Reward from an external property predictor (e.g. a ddG model)."""

    def __init__(self, command, timeout: float = 30.0, name: str = "external"):
        super().__init__()
        self.command = command
        self.timeout = timeout
        self.name = name
        self._handle = None

    @property
    def handle(self) -> ExternalEvaluatorHandle:
        if self._handle is None:
            self._handle = ExternalEvaluatorHandle(self.command, self.timeout)
        return self._handle

    def _score(self, a):
        return external_evaluate(self.handle, a)

    def close(self):
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __getstate__(self):
        state = super().__getstate__()
        state["_handle"] = None
        return state
