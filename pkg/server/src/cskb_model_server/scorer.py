"""Statement plausibility scorers behind the /score endpoints.

Scores always land in [0, 1].  The bundled scorer is a deterministic
lexical stand-in: useful for exercising the wire contract and threshold
machinery, not a judgment of commonsense plausibility.  Wrap a trained
classifier checkpoint for real filtering.
"""

from __future__ import annotations

import hashlib


class Scorer:
    scorer_id: str = "scorer"

    def score(self, statement: str) -> float:
        raise NotImplementedError


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


class BundledScorer(Scorer):
    """Deterministic lexical scorer: a pure function of (seed, statement)."""

    scorer_id = "bundled-lexical"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, statement: str) -> float:
        normalized = " ".join(statement.split())
        digest = hashlib.sha256(f"{self.seed}|{normalized}".encode("utf-8")).digest()
        noise = int.from_bytes(digest[:8], "big") / float(1 << 64)
        words = len(normalized.split())
        length_penalty = 0.03 * max(0, words - 22)
        shape_bonus = 0.05 if normalized.endswith(".") else 0.0
        return _clamp01(0.60 + 0.35 * noise + shape_bonus - length_penalty)


class TransformersScorer(Scorer):
    """Wraps a local sequence-classification checkpoint via transformers.

    The probability of the highest-index class is reported, which matches
    the common convention of binary plausibility heads (label 1 = good).
    """

    def __init__(self, model_path: str, device: str = "cpu"):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise RuntimeError("transformers is not installed; install the [models] extra") from exc
        try:
            self._pipe = pipeline("text-classification", model=model_path, device=device, top_k=None)
        except Exception as exc:
            raise RuntimeError(f"could not load scorer model {model_path!r}: {exc}") from exc
        self.scorer_id = model_path

    def score(self, statement: str) -> float:
        results = self._pipe(statement)[0]
        best = max(results, key=lambda r: r["label"])
        return _clamp01(float(best["score"]))
