"""HTTP service exposing the experiment runner.

POST /run takes a config document plus a worker count, executes the
experiment in a scratch directory, and returns the manifest, the exit
status, and the produced files inline so a thin client can materialize
them anywhere.  GET /health reports the package version.
"""

from __future__ import annotations

import os
import tempfile

from fastapi import FastAPI
from pydantic import BaseModel

from . import __version__, runner
from .config import ConfigError, parse_config

__all__ = ["app", "RunRequest", "RunResponse"]


class RunRequest(BaseModel):
    config_text: str
    workers: int = 1


class RunResponse(BaseModel):
    exit_status: int
    files: dict  # file name -> text content
    errors: list = []


app = FastAPI(title="conewalk", version=__version__)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=RunResponse)
def run_experiment(req: RunRequest) -> RunResponse:
    try:
        cfg = parse_config(req.config_text)
    except ConfigError as exc:
        return RunResponse(exit_status=2, files={}, errors=exc.errors)
    with tempfile.TemporaryDirectory(prefix="conewalk-") as work:
        status = runner.run(cfg, workers=req.workers, out_dir=work)
        files = {}
        for name in sorted(os.listdir(work)):
            with open(os.path.join(work, name), encoding="utf-8") as fh:
                files[name] = fh.read()
    return RunResponse(exit_status=status, files=files)
