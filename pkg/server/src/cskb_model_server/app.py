"""FastAPI application exposing the generation and scoring wire contracts.

Endpoints:
  POST /v1/chat/completions  chat-completion generation
  POST /score                single-statement scoring
  POST /score_batch          batch scoring, order-preserving
  GET  /healthz              liveness probe
"""

from __future__ import annotations

import uuid

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .generator import BundledGenerator, Generator
from .scorer import BundledScorer, Scorer


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatCompletionRequest(BaseModel):
    model: str = "bundled-tiny"
    messages: list[ChatMessage] = Field(min_length=1)
    temperature: float = Field(default=1.0, ge=0.0)
    max_tokens: int = Field(default=200, ge=1)
    n: int = Field(default=1, ge=1)
    top_k: int | None = Field(default=None, ge=1)


class ScoreRequest(BaseModel):
    statement: str


class ScoreBatchRequest(BaseModel):
    statements: list[str]


def create_app(generator: Generator | None = None, scorer: Scorer | None = None) -> FastAPI:
    generator = generator or BundledGenerator()
    scorer = scorer or BundledScorer()
    app = FastAPI(title="cskb-model-server")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "generator": generator.model_id, "scorer": scorer.scorer_id}

    @app.post("/v1/chat/completions")
    def chat_completions(request: ChatCompletionRequest) -> dict:
        prompt = "\n".join(m.content for m in request.messages if m.content)
        if not prompt.strip():
            raise HTTPException(status_code=400, detail="messages carry no content")
        completions = generator.complete(
            prompt,
            n=request.n,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            top_k=request.top_k,
        )
        return {
            "id": f"chatcmpl-{uuid.uuid4().hex[:12]}",
            "object": "chat.completion",
            "model": generator.model_id,
            "choices": [
                {
                    "index": index,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop",
                }
                for index, content in enumerate(completions)
            ],
            "usage": {
                "prompt_tokens": len(prompt.split()),
                "completion_tokens": sum(len(c.split()) for c in completions),
            },
            "capabilities": {"top_k": generator.supports_top_k},
        }

    def _score_one(statement: str) -> float:
        if not statement.strip():
            raise HTTPException(status_code=400, detail="statement must be non-empty")
        return scorer.score(statement)

    @app.post("/score")
    def score(request: ScoreRequest) -> dict:
        return {"score": _score_one(request.statement)}

    @app.post("/score_batch")
    def score_batch(request: ScoreBatchRequest) -> dict:
        return {"scores": [_score_one(s) for s in request.statements]}

    return app
