"""Run-output plumbing: deterministic summaries and reproduction manifests.

Result artifacts (CSV series, snapshots, summary JSON) are byte-stable for
a given seed; the manifest carries wall-clock timings and library versions
and is therefore the one output file excluded from byte-for-byte
reproducibility checks.
"""

from __future__ import annotations

import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

PACKAGE_VERSION = "0.1.0"


def dump_deterministic_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def write_summary(out_dir, summary: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "summary.json"
    path.write_text(dump_deterministic_json(summary))
    return path


def write_manifest(out_dir, config: dict, timings: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config,
        "timings_seconds": {k: round(v, 4) for k, v in timings.items()},
        "written_at_unix": time.time(),
        "versions": {
            "plsom_lab": PACKAGE_VERSION,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
