"""Line-delimited JSON serve loop for the detector wire protocol.

One request per line on stdin, one response per line on stdout, in order.
Per-request failures become an error line and the loop keeps serving; only a
closed input stream ends the process. Timing for each request goes to the log
stream so prompt-cache reuse is observable.
"""

from __future__ import annotations

import json
import sys
import time


def handle_request(detector, line: str) -> dict:
    """Serve one raw request line. Never raises; failures become error objects."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return {"error": f"unparseable request line: {line.strip()[:200]!r}"}
    if not isinstance(obj, dict):
        return {"error": "request must be a JSON object"}

    frame = obj.get("frame")
    image_path = obj.get("image_path")
    prompts = obj.get("prompts")
    if not isinstance(frame, int):
        return {"error": "request field 'frame' must be an integer"}
    if not isinstance(image_path, str) or not image_path:
        return {"error": "request field 'image_path' must be a non-empty string"}
    if (
        not isinstance(prompts, list)
        or not prompts
        or not all(isinstance(p, str) and p for p in prompts)
    ):
        return {"error": "request field 'prompts' must be a non-empty list of strings"}

    try:
        detections = detector.detect(image_path, prompts)
    except Exception as exc:
        return {"error": f"detection failed for frame {frame}: {exc}"}
    return {"frame": frame, "detections": detections}


def serve(detector, stream_in=None, stream_out=None, log=None) -> int:
    """Run the request loop until the input stream closes. Returns 0."""
    stream_in = stream_in if stream_in is not None else sys.stdin
    stream_out = stream_out if stream_out is not None else sys.stdout
    log = log if log is not None else sys.stderr

    for line in stream_in:
        if not line.strip():
            continue
        start = time.monotonic()
        response = handle_request(detector, line)
        elapsed_ms = (time.monotonic() - start) * 1000.0
        stream_out.write(json.dumps(response) + "\n")
        stream_out.flush()
        status = "error" if "error" in response else f"{len(response['detections'])} det"
        cache = getattr(detector, "text_cache", None)
        cache_note = ""
        if cache is not None:
            cache_note = f" cache_hits={cache.hits} cache_misses={cache.misses}"
        log.write(f"request served in {elapsed_ms:.1f} ms ({status}){cache_note}\n")
        log.flush()
    return 0
