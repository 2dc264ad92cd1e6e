"""Example programs shipped with the package."""

from __future__ import annotations

from importlib import resources


def names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".lisp"))


def source(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.lisp").read_text(encoding="utf-8")


def load(name: str):
    from ..syntax import load as load_text
    return load_text(source(name))
