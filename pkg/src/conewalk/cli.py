"""Thin command-line client for the experiment service.

Reads a config file, applies CONEWALK_-prefixed environment overrides,
sends the run to the service (in-process by default, or a remote server
named by CONEWALK_SERVER), and writes the returned files into the output
directory.  Exit status mirrors the runner: 0 iff all in-run assertions
passed.
"""

from __future__ import annotations

import argparse
import os
import sys

import httpx

ENV_PREFIX = "CONEWALK_"
# env names reserved for client behavior, not config keys
_CLIENT_VARS = {"SERVER"}


def _apply_env_overrides(text: str, environ=None) -> str:
    """Override or append config keys from CONEWALK_<KEY>=value variables."""
    environ = os.environ if environ is None else environ
    overrides = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):]
        if key in _CLIENT_VARS:
            continue
        overrides[key.lower()] = value
    if not overrides:
        return text
    lines = []
    seen = set()
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#") and "=" in stripped:
            key = stripped.partition("=")[0].strip()
            if key in overrides:
                lines.append(f"{key} = {overrides[key]}")
                seen.add(key)
                continue
        lines.append(line)
    for key in sorted(overrides):
        if key not in seen:
            lines.append(f"{key} = {overrides[key]}")
    return "\n".join(lines) + "\n"


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

    from .service import app
    return TestClient(app)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="conewalk",
        description="run a configured cone-walk experiment and collect its outputs")
    parser.add_argument("--config", required=True, help="path to a key = value config file")
    parser.add_argument("--workers", type=int, default=1, help="simulation worker threads")
    parser.add_argument("--out", default=None,
                        help="output directory (default: out_dir from the config, else .)")
    args = parser.parse_args(argv)

    with open(args.config, encoding="utf-8") as fh:
        text = fh.read()
    text = _apply_env_overrides(text)

    server = os.environ.get(ENV_PREFIX + "SERVER")
    with _client(server) as client:
        resp = client.post("/run", json={"config_text": text, "workers": args.workers})
    if resp.status_code != 200:
        print(f"service error: HTTP {resp.status_code}: {resp.text}", file=sys.stderr)
        return 2
    payload = resp.json()
    for err in payload.get("errors", []):
        print(f"config error: {err}", file=sys.stderr)
    out_dir = args.out
    if out_dir is None:
        out_dir = "."
        for line in text.splitlines():
            if line.strip().startswith("out_dir"):
                out_dir = line.partition("=")[2].strip().strip('"').strip("'")
    os.makedirs(out_dir, exist_ok=True)
    for name, content in sorted(payload["files"].items()):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(content)
        print(os.path.join(out_dir, name))
    return int(payload["exit_status"])


if __name__ == "__main__":
    sys.exit(main())
