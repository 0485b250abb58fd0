"""Reference microservice for the distillation pipeline.

Serves the chat-completion generation contract and the statement-scoring
contract over local models, so the pipeline can run end to end without
any hosted API.  A bundled deterministic generator and scorer keep the
server usable on machines with no model checkpoints at all.
"""

__version__ = "0.1.0"
