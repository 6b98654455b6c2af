"""Experiment files: ``key = value`` lines grouped in ``[sections]``.

A simulator file has a ``[sim]`` section, one ``[traffic.N]`` section per
traffic spec and a ``[reproducibility]`` block::

    [sim]
    n_sources = 10
    channel_p = 0.9, 0.3

    [traffic.0]
    kind = poisson
    rate_hz = 5000.0

    [reproducibility]
    seed = 7
    git_describe = v0.1-3-gabc123
    config_hash = 1f2e3d4c5b6a

A harness file uses ``[harness]`` instead of ``[sim]``/``[traffic.N]``.
``#`` and ``;`` start comment lines. Values are written as Python literals
for numbers, ``true``/``false``, ``none``, and comma lists for tuples.
"""
from __future__ import annotations

import subprocess
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional, Union

from .harness.config import HarnessConfig
from .sim.config import SimConfig, TrafficSpec


class ExpFileError(ValueError):
    def __init__(self, path: str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class ExperimentFile:
    config: Union[SimConfig, HarnessConfig]
    git_describe: str = "unknown"
    recorded_hash: Optional[str] = None

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def hash_matches(self) -> bool:
        return self.recorded_hash is None or self.recorded_hash == self.config.config_hash()


def git_describe(cwd: Optional[str] = None) -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=cwd, capture_output=True, text=True, timeout=5
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


# -- value conversion -------------------------------------------------

def _render_value(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_render_value(x) for x in v)
    return str(v)


def _scalar(text: str, typ) -> Any:
    if typ is bool:
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    return text


def _parse_value(text: str, annotation) -> Any:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if text.lower() == "none":
            return None
        return _parse_value(text, inner[0])
    if origin is tuple:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(_scalar(p, args[0]) for p in parts)
    return _scalar(text, annotation)


# -- raw reader -------------------------------------------------------

def _read_sections(text: str, path: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: Optional[dict] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ExpFileError(path, lineno, f"malformed section header {line!r}")
            name = line[1:-1].strip()
            if name in sections:
                raise ExpFileError(path, lineno, f"duplicate section [{name}]")
            current = sections[name] = {"__line__": ("", lineno)}
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ExpFileError(path, lineno, f"expected 'key = value', got {line!r}")
        if current is None:
            raise ExpFileError(path, lineno, "key outside of any section")
        key = key.strip()
        if key in current:
            raise ExpFileError(path, lineno, f"duplicate key {key!r}")
        current[key] = (value.strip(), lineno)
    return sections


def _build(cls, entries: dict[str, tuple[str, int]], path: str, exclude=()) -> dict[str, Any]:
    hints = typing.get_type_hints(cls)
    allowed = {f.name for f in fields(cls)} - set(exclude)
    out = {}
    for key, (value, lineno) in entries.items():
        if key == "__line__":
            continue
        if key not in allowed:
            raise ExpFileError(path, lineno, f"unknown key {key!r}")
        try:
            out[key] = _parse_value(value, hints[key])
        except ValueError as exc:
            raise ExpFileError(path, lineno, f"{key}: {exc}") from None
    return out


# -- public API -------------------------------------------------------

def render(config: Union[SimConfig, HarnessConfig], git: Optional[str] = None) -> str:
    lines = []
    if isinstance(config, SimConfig):
        lines.append("[sim]")
        for f in fields(SimConfig):
            if f.name in ("traffic", "seed"):
                continue
            lines.append(f"{f.name} = {_render_value(getattr(config, f.name))}")
        for i, spec in enumerate(config.traffic):
            lines += ["", f"[traffic.{i}]"]
            for f in fields(TrafficSpec):
                lines.append(f"{f.name} = {_render_value(getattr(spec, f.name))}")
    else:
        lines.append("[harness]")
        for f in fields(HarnessConfig):
            if f.name == "seed":
                continue
            lines.append(f"{f.name} = {_render_value(getattr(config, f.name))}")
    lines += [
        "",
        "[reproducibility]",
        f"seed = {config.seed}",
        f"git_describe = {git if git is not None else git_describe()}",
        f"config_hash = {config.config_hash()}",
    ]
    return "\n".join(lines) + "\n"


def parse(text: str, path: str = "<string>") -> ExperimentFile:
    sections = _read_sections(text, path)
    repro = sections.pop("reproducibility", {"__line__": ("", 0)})
    seed = None
    git = "unknown"
    recorded = None
    for key, (value, lineno) in repro.items():
        if key == "__line__":
            continue
        if key == "seed":
            try:
                seed = int(value)
            except ValueError:
                raise ExpFileError(path, lineno, f"seed: expected an integer, got {value!r}") from None
        elif key == "git_describe":
            git = value
        elif key == "config_hash":
            recorded = value
        else:
            raise ExpFileError(path, lineno, f"unknown key {key!r}")
    if "harness" in sections:
        extra = [s for s in sections if s != "harness"]
        if extra:
            raise ExpFileError(path, sections[extra[0]]["__line__"][1], f"unexpected section [{extra[0]}]")
        values = _build(HarnessConfig, sections["harness"], path, exclude=("seed",))
        if seed is not None:
            values["seed"] = seed
        return ExperimentFile(HarnessConfig(**values), git, recorded)
    if "sim" not in sections:
        raise ExpFileError(path, 1, "missing [sim] or [harness] section")
    values = _build(SimConfig, sections.pop("sim"), path, exclude=("traffic", "seed"))
    traffic = []
    for name in sorted(sections, key=lambda s: sections[s]["__line__"][1]):
        head = sections[name]["__line__"][1]
        prefix, dot, index = name.partition(".")
        if prefix != "traffic" or not dot or not index.isdigit():
            raise ExpFileError(path, head, f"unexpected section [{name}]")
        traffic.append((int(index), TrafficSpec(**_build(TrafficSpec, sections[name], path))))
    if traffic:
        traffic.sort()
        indices = [i for i, _ in traffic]
        if indices != list(range(len(indices))):
            raise ExpFileError(path, 1, f"traffic sections must be numbered 0..{len(indices) - 1}")
        values["traffic"] = tuple(t for _, t in traffic)
    if seed is not None:
        values["seed"] = seed
    return ExperimentFile(SimConfig(**values), git, recorded)


def load(path: Union[str, Path]) -> ExperimentFile:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ExpFileError(path, 0, f"cannot read: {exc.strerror}") from None
    return parse(text, path)
