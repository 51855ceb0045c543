"""Tax-auditable ledger simulator and Provisions-based tax proofs."""

__version__ = "0.1.0"
