"""Proof-of-stake roaming ledger simulator, security analysis and stake-pool game."""

__version__ = "0.1.0"
