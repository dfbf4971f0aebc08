# Answering App
# Multi-Embodied Explorers Lab
# Independent per-agent Yes/No answers: heuristic, LLM and malicious backends

__version__ = '1.0.0'
