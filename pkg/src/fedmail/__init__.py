"""Deterministic federated-learning simulator for phishing-email
classification: email ingestion, data partitioning, a from-scratch
differentiable classifier, the federated averaging protocol with
communication accounting, and metric/report emission.
"""

__version__ = "0.1.0"
