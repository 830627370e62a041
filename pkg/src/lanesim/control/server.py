"""Controller-side helper for the external protocol.

``serve(predict)`` runs the message loop on stdin/stdout. Running this
module starts a reference server::

    python -m lanesim.control.server --constant 0.1
    python -m lanesim.control.server --vision
"""
from __future__ import annotations

import argparse
import sys
import time
from typing import Callable

import numpy as np

from lanesim.control import protocol
from lanesim.errors import ControllerError
from lanesim.geometry import ProjectionSpec


def serve(
    predict: Callable[[np.ndarray, float, ProjectionSpec], float],
    stdin=None,
    stdout=None,
) -> int:
    """Answer requests until BYE or EOF. Returns the number of replies sent."""
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    spec = None
    replies = 0
    while True:
        msg = protocol.read_message_blocking(stdin)
        if msg is None or isinstance(msg, protocol.Bye):
            return replies
        if isinstance(msg, protocol.Hello):
            spec = ProjectionSpec.from_dict(msg.spec) if msg.spec else ProjectionSpec()
            stdout.write(protocol.encode_hello_ack())
        elif isinstance(msg, protocol.Request):
            if spec is None:
                raise ControllerError("REQUEST before HELLO")
            angle = predict(msg.pixels, msg.speed, spec)
            stdout.write(protocol.encode_reply(msg.seq, angle))
            replies += 1
        else:
            raise ControllerError(f"unexpected {type(msg).__name__} from simulator")
        stdout.flush()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Reference external steering controller.")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--constant", type=float, default=0.0, help="reply with this angle (rad)")
    mode.add_argument("--vision", action="store_true", help="run the built-in vision controller")
    ap.add_argument("--delay", type=float, default=0.0, help="sleep this long before each reply (s)")
    ap.add_argument("--delay-after", type=int, default=0, help="only delay from this request on")
    args = ap.parse_args(argv)

    vision = {}
    count = [0]

    def predict(pixels, speed, spec):
        count[0] += 1
        if args.delay and count[0] > args.delay_after:
            time.sleep(args.delay)
        if not args.vision:
            return args.constant
        from lanesim.control.controllers import VisionController
        from lanesim.geometry import CylImage

        ctl = vision.setdefault("ctl", VisionController(spec))
        return ctl.predict(CylImage(pixels, spec), speed, None)

    serve(predict)
    return 0


if __name__ == "__main__":
    sys.exit(main())
