"""System prompt templates, shipped as text assets and overridable per run."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Mapping

from ..dataset import Dataset, render_description

ROLES = ("scientist", "extractor", "tester")
PLACEHOLDER = "THE_DATASET_DESCRIPTION_IS_ENTERED_HERE"
# the shipped templates wrap the token in square brackets; the brackets go too
BRACKETED = f"[{PLACEHOLDER}]"


def load_template(role: str, overrides: Mapping[str, str | Path] | None = None) -> str:
    if role not in ROLES:
        raise ValueError(f"unknown agent role {role!r}")
    if overrides and role in overrides:
        return Path(overrides[role]).read_text(encoding="utf-8")
    return resources.files("agentfe.agents").joinpath("prompts", f"{role}.txt").read_text(encoding="utf-8")


def substitute(template: str, description: str) -> str:
    if BRACKETED in template:
        return template.replace(BRACKETED, description)
    if PLACEHOLDER not in template:
        raise ValueError(f"template lacks the {PLACEHOLDER} placeholder")
    return template.replace(PLACEHOLDER, description)


def render_system_prompt(role: str, dataset: Dataset,
                         overrides: Mapping[str, str | Path] | None = None) -> str:
    return substitute(load_template(role, overrides), render_description(dataset))
