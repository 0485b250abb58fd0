"""Text generators behind the chat-completion endpoint.

The bundled generator understands the pipeline's prompt shape (numbered
events ending in a "can be conceptualized as" / "can be instantiated as"
cue) and emits plausible short phrases deterministically, so the service
runs with zero model downloads.  Point the server at an instruction-tuned
checkpoint to serve real generations instead.
"""

from __future__ import annotations

import hashlib
import re


class Generator:
    model_id: str = "generator"
    supports_top_k: bool = False

    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int, top_k: int | None) -> list[str]:
        raise NotImplementedError


_BRACKETED = re.compile(r"\[([^\[\]]+)\]")

_CONCEPT_MODIFIERS = (
    "everyday",
    "communal",
    "recreational",
    "practical",
    "seasonal",
    "familiar",
    "shared",
    "quiet",
    "lively",
    "useful",
)
_CONCEPT_CATEGORIES = (
    "activity",
    "place",
    "object",
    "routine",
    "gathering",
    "practice",
    "item",
    "setting",
    "occasion",
    "resource",
)
_INSTANCE_ADJECTIVES = (
    "wooden",
    "borrowed",
    "freshly painted",
    "secondhand",
    "homemade",
    "neighborhood",
    "weekend",
    "morning",
    "favorite",
    "local",
)
_INSTANCE_NOUNS = (
    "workshop",
    "bookshop",
    "footbridge",
    "greenhouse",
    "courtyard",
    "toolbox",
    "notebook",
    "staircase",
    "billboard",
    "fountain",
)
_EVENT_VERBS = (
    "organizes",
    "repaints",
    "borrows",
    "visits",
    "rearranges",
    "photographs",
    "sketches",
    "sweeps",
    "measures",
    "decorates",
)


def _unit(*parts: object) -> float:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / float(1 << 64)


def _pick(options: tuple[str, ...], *parts: object) -> str:
    return options[int(_unit(*parts) * len(options)) % len(options)]


class BundledGenerator(Generator):
    """Deterministic rule-driven generator for offline serving."""

    model_id = "bundled-tiny"
    supports_top_k = False

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _query_parts(self, prompt: str) -> tuple[str, str, bool]:
        """(mode cue, focus span, whole-head-is-span) from the final query line."""
        last_line = prompt.rstrip().rsplit("\n", 1)[-1]
        spans = _BRACKETED.findall(last_line)
        span = spans[-1] if spans else "thing"
        instantiation = "can be instantiated as" in last_line
        # "Event <k>: [span], <connective>, ..." means the head event is
        # nothing but the focus span.
        body = last_line.split(":", 1)[-1].strip()
        whole_head = body.startswith(f"[{span}],")
        return ("instantiation" if instantiation else "conceptualization", span, whole_head)

    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int, top_k: int | None) -> list[str]:
        mode, span, whole_head = self._query_parts(prompt)
        completions = []
        for index in range(n):
            if mode == "conceptualization":
                phrase = (
                    f"{_pick(_CONCEPT_MODIFIERS, self.seed, span, index, 'm')} "
                    f"{_pick(_CONCEPT_CATEGORIES, self.seed, span, index, 'c')}"
                )
            elif whole_head:
                phrase = (
                    f"PersonX {_pick(_EVENT_VERBS, self.seed, span, index, 'v')} the "
                    f"{_pick(_INSTANCE_NOUNS, self.seed, span, index, 'n')}"
                )
            else:
                phrase = (
                    f"{_pick(_INSTANCE_ADJECTIVES, self.seed, span, index, 'a')} "
                    f"{_pick(_INSTANCE_NOUNS, self.seed, span, index, 'n')}"
                )
            completions.append(phrase)
        return completions


class TransformersGenerator(Generator):
    """Wraps a local instruction-tuned checkpoint via transformers."""

    supports_top_k = True

    def __init__(self, model_path: str, device: str = "cpu"):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise RuntimeError("transformers is not installed; install the [models] extra") from exc
        try:
            self._pipe = pipeline("text-generation", model=model_path, device=device)
        except Exception as exc:
            raise RuntimeError(f"could not load generator model {model_path!r}: {exc}") from exc
        self.model_id = model_path

    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int, top_k: int | None) -> list[str]:
        kwargs = {
            "num_return_sequences": n,
            "max_new_tokens": max_tokens,
            "do_sample": temperature > 0,
            "temperature": max(temperature, 1e-5),
            "return_full_text": False,
        }
        if top_k is not None:
            kwargs["top_k"] = top_k
        outputs = self._pipe(prompt, **kwargs)
        return [out["generated_text"] for out in outputs]
