"""codeloop: a code-first chat agent framework.

User requests are decomposed into a step plan, each step is turned into a
Python snippet (plugin calls plus free-form code), statically verified
against a policy, and executed in a per-session sandboxed worker process
that keeps state across rounds.
"""

__version__ = "0.1.0"
