"""Conceptualization/instantiation distillation toolkit for CSKBs.

A pipeline for turning a commonsense knowledge base of (head, relation,
tail) triples into a much larger one by asking a language model to
abstract instance spans into concepts, ground those concepts back into
new instances, filter both stages with a plausibility critic, and feed
the surviving triples back in as fresh input.
"""

__version__ = "0.1.0"
