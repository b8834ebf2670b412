"""Subprocess entry serving the wire protocol with a stub in place of the model.

Lets integration tests exercise the real serve loop over pipes without model
weights. `--fail-on PATH` makes requests for that image fail.
"""

import argparse
import sys

from owl_bridge.server import serve


class StubDetector:
    def __init__(self, fail_on=()):
        self.fail_on = set(fail_on)

    def detect(self, image_path, prompts):
        if image_path in self.fail_on:
            raise RuntimeError(f"cannot read {image_path}")
        return [{"box": [0.4, 0.6, 0.2, 0.3], "score": 0.8, "label": prompts[0]}]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--fail-on", action="append", default=[])
    args = parser.parse_args()
    return serve(StubDetector(fail_on=args.fail_on))


if __name__ == "__main__":
    sys.exit(main())
