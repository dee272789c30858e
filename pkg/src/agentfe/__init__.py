"""Agent-driven feature extraction for tabular prediction."""
