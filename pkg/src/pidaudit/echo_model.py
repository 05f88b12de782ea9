"""Reference external model for the line-delimited JSON oracle protocol.

Run as ``python -m pidaudit.echo_model --rule xor``. Requests are read
from stdin and answered on stdout. ``--batch N`` buffers up to N requests
and answers them in reverse order, exercising out-of-order handling; a
partial batch is flushed once stdin goes idle.

Rules (features taken in request order):

  echo   decision = first feature (identity model)
  first  same as echo
  diff   first minus second
  sum    sum of features
  xor    sum of features mod 2
"""
import argparse
import json
import os
import select
import sys


def decide(rule, values):
    if rule in ("echo", "first"):
        return values[0]
    if rule == "diff":
        return values[0] - values[1]
    if rule == "sum":
        return sum(values)
    if rule == "xor":
        return sum(values) % 2
    raise SystemExit(f"unknown rule {rule!r}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rule", default="echo")
    parser.add_argument("--batch", type=int, default=1)
    args = parser.parse_args(argv)
    held = []

    def flush():
        for resp in reversed(held):
            sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
        held.clear()

    # own line buffer on the raw descriptor, so select() sees every pending byte
    fd = sys.stdin.fileno()
    buf = b""
    while True:
        while b"\n" not in buf:
            if held and not select.select([fd], [], [], 0.05)[0]:
                flush()
            chunk = os.read(fd, 65536)
            if not chunk:
                break
            buf += chunk
        if b"\n" not in buf:
            line, buf = buf, b""
            if not line.strip():
                break
        else:
            line, buf = buf.split(b"\n", 1)
        if not line.strip():
            continue
        req = json.loads(line)
        values = list(req["features"].values())
        held.append({"id": req["id"], "decision": decide(args.rule, values)})
        if len(held) >= args.batch:
            flush()
    flush()


if __name__ == "__main__":
    main()
