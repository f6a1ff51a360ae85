"""Software-defined middlebox toolkit.

Two DSLs (action-graph scripts and packet programs), a trace-driven
pipeline runtime, a ring-based in-box service-chain runtime with
lossless reconfiguration, and a service-chain scheduler with LP
relaxation, progressive rounding, an online variant, and an
exhaustive oracle.
"""

__version__ = "0.1.0"
