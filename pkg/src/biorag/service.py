"""HTTP front end: POST /v1/ask, GET /v1/health."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import Engine
from .errors import BioRagError
from .orchestrator import AblationFlags

logger = logging.getLogger(__name__)


class ValidationFailed(ValueError):
    pass


class EngineNotReady(RuntimeError):
    pass


@dataclass
class AskRequest:
    question: str
    max_iterations: Optional[int] = None
    ablation: Optional[AblationFlags] = None


@dataclass
class AskResponse:
    answer: str
    iterations: int
    exhausted: bool
    trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "answer": self.answer,
            "iterations": self.iterations,
            "exhausted": self.exhausted,
            "trace": self.trace,
        }


def handle_ask(req: AskRequest, engine: Engine) -> AskResponse:
    if not req.question or not req.question.strip():
        raise ValidationFailed("question must be nonempty")
    if req.max_iterations is not None and req.max_iterations < 1:
        raise ValidationFailed("max_iterations must be positive")
    if not engine.ready:
        raise EngineNotReady("engine is not initialized")
    answer = engine.ask(req.question, max_iterations=req.max_iterations, ablation=req.ablation)
    trace = [
        {"iteration": s.iteration, "phase": s.phase, "input_digest": s.input_digest,
         "output_digest": s.output_digest, "warnings": list(s.warnings)}
        for s in answer.trace
    ]
    return AskResponse(answer.text, answer.iterations_used, answer.exhausted, trace)


class _AblationBody(BaseModel):
    disable_retriever: list[str] = Field(default_factory=list)
    disable_mesh_filter: bool = False
    disable_rewrite: bool = False
    disable_self_eval: bool = False


class _AskBody(BaseModel):
    question: str
    max_iterations: Optional[int] = None
    ablation: Optional[_AblationBody] = None


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="biorag")

    @app.exception_handler(RequestValidationError)
    async def _invalid(_request: Request, exc: RequestValidationError):
        return _error(400, str(exc.errors()))

    @app.get("/v1/health")
    def health():
        if not engine.ready:
            return _error(503, "engine is not initialized")
        return {"status": "ok"}

    # sync handler: FastAPI runs it in a worker thread, so sessions proceed concurrently
    @app.post("/v1/ask")
    def ask(body: _AskBody):
        try:
            ablation = AblationFlags.from_dict(body.ablation.model_dump()) if body.ablation else None
        except ValueError as exc:
            return _error(400, str(exc))
        try:
            resp = handle_ask(AskRequest(body.question, body.max_iterations, ablation), engine)
        except ValidationFailed as exc:
            return _error(400, str(exc))
        except EngineNotReady as exc:
            return _error(503, str(exc))
        except BioRagError as exc:
            logger.exception("session failed")
            return _error(500, f"{type(exc).__name__}: {exc}")
        return resp.to_dict()

    return app


def serve(engine: Engine, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(engine), host=host, port=port)
