"""Multi-agent chat orchestration engine.

Routes user intents, drives hierarchical task agents under reflection
guardrails, executes resumable deterministic task workflows, and ships a
replay-based evaluation harness plus an HTTP chat service.
"""

__version__ = "0.1.0"
