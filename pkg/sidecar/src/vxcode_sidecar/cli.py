"""Sidecar entry point: register detectors, then serve stdin/stdout.

The mock detector is configured from a JSON file:

    {
      "weights": [[0, 0.5], [1, 0.3]],
      "box": [0.0, 0.0, 30.0, 10.0],
      "target_class": 0,
      "classes": 3
    }

Wrappers around real models register the same way: build a callable with the
server's detector signature and add it to the registry before serving.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .mock import make_mock
from .server import serve


def load_mock_config(path) -> dict:
    data = json.loads(Path(path).read_text())
    weights = {int(idx): float(w) for idx, w in data["weights"]}
    return {
        "weights": weights,
        "box": data["box"],
        "target_class": int(data.get("target_class", 0)),
        "classes": int(data.get("classes", 1)),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vxcode-sidecar")
    parser.add_argument(
        "--mock-config", required=True,
        help="JSON file configuring the deterministic mock detector",
    )
    parser.add_argument(
        "--name", default="mock", help="registry name for the mock detector"
    )
    args = parser.parse_args(argv)

    cfg = load_mock_config(args.mock_config)
    registry = {
        args.name: make_mock(
            cfg["weights"], cfg["box"], cfg["target_class"], cfg["classes"]
        )
    }
    serve(sys.stdin, sys.stdout, registry)
    return 0


if __name__ == "__main__":
    sys.exit(main())
