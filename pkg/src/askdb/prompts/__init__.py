"""Prompt templates, shipped as text files and overridable via a directory."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

TEMPLATE_NAMES = (
    "rewrite_extract",
    "rewrite_transform",
    "rewrite_replace",
    "link_explain",
    "link_squeeze",
    "sql_generation",
    "sql_repair",
    "function_select",
    "python_generation",
    "script_repair",
)


def load_template(name: str, prompt_dir: str | Path | None = None) -> str:
    """Read a template by name, from ``prompt_dir`` when given, else the
    copies bundled with the package."""
    filename = name if name.endswith(".txt") else f"{name}.txt"
    if prompt_dir is not None:
        return (Path(prompt_dir) / filename).read_text(encoding="utf-8")
    return resources.files(__package__).joinpath(filename).read_text(encoding="utf-8")
