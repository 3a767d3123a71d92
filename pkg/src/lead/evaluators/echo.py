"""Test double for the external evaluator protocol.

Run as ``python -m lead.evaluators.echo --mode MODE``:

* ``zero``      score 0.0 for every request
* ``length``    score = sequence length
* ``malformed`` reply with a line that is not JSON
* ``mismatch``  reply with ``request_id + 1``
* ``hang``      read requests but never reply
* ``crash``     exit with status 3 on the first request
* ``error``     reply with an ``error`` field
"""
from __future__ import annotations

import argparse
import json
import sys
import time


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lead-echo-evaluator")
    ap.add_argument("--mode", default="zero",
                    choices=["zero", "length", "malformed", "mismatch", "hang", "crash", "error"])
    args = ap.parse_args(argv)
    for line in sys.stdin:
        req = json.loads(line)
        rid = req["request_id"]
        if args.mode == "hang":
            time.sleep(3600)
            continue
        if args.mode == "crash":
            return 3
        if args.mode == "malformed":
            out = "this is not json"
        elif args.mode == "mismatch":
            out = json.dumps({"request_id": rid + 1, "score": 0.0})
        elif args.mode == "error":
            out = json.dumps({"request_id": rid, "error": "cannot score"})
        elif args.mode == "length":
            out = json.dumps({"request_id": rid, "score": float(len(req["sequence"]))})
        else:
            out = json.dumps({"request_id": rid, "score": 0.0})
        sys.stdout.write(out + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
