"""Stdio predictor stub for transport tests.

Speaks the JSON-lines protocol: class "1" iff the first feature exceeds
120. A --mode flag switches in various misbehaviors so the client's
error paths can be exercised.
"""

import argparse
import json
import sys


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", default="ok",
                        choices=("ok", "silent", "wrong-id", "die-after-handshake",
                                 "bad-json", "no-classes", "alien-label"))
    mode = parser.parse_args().mode

    for line in sys.stdin:
        msg = json.loads(line)
        if msg.get("handshake"):
            if mode == "no-classes":
                print(json.dumps({"classes": []}), flush=True)
            else:
                print(json.dumps({"classes": ["0", "1"]}), flush=True)
            if mode == "die-after-handshake":
                return
            continue
        if mode == "silent":
            continue
        if mode == "bad-json":
            print("not json at all", flush=True)
            continue
        labels = ["1" if inst[0] > 120.0 else "0" for inst in msg["instances"]]
        if mode == "alien-label":
            labels = ["2" for _ in labels]
        reply_id = msg["id"] + 1 if mode == "wrong-id" else msg["id"]
        print(json.dumps({"id": reply_id, "labels": labels}), flush=True)


if __name__ == "__main__":
    main()
