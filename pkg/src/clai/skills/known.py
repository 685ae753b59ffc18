"""The session's known-command set: a PATH scan plus commands seen in history."""

from __future__ import annotations

import os
from pathlib import Path

# Shell builtins and aliases never show up on PATH but are valid first tokens.
SHELL_BUILTINS = frozenset(
    "cd export exit alias unalias source history pwd set unset jobs fg bg type ulimit umask".split()
)


def scan_path_commands(path_env: str | None = None) -> set[str]:
    """Names of executable files on the search path. One bounded scan."""
    commands: set[str] = set()
    path_env = path_env if path_env is not None else os.environ.get("PATH", "")
    for raw_dir in path_env.split(os.pathsep):
        if not raw_dir:
            continue
        try:
            entries = os.scandir(raw_dir)
        except OSError:
            continue
        with entries:
            for entry in entries:
                try:
                    if entry.is_file() and os.access(entry.path, os.X_OK):
                        commands.add(entry.name)
                except OSError:
                    continue
    return commands


class KnownCommands:
    """Known first tokens, computed once per session and grown from history."""

    def __init__(self, seed: set[str] | None = None, scan: bool = True,
                 include_builtins: bool = True):
        self._commands: set[str] = set(SHELL_BUILTINS) if include_builtins else set()
        if seed is not None:
            self._commands |= seed
        self._needs_scan = scan

    def _ensure(self) -> None:
        if self._needs_scan:
            self._commands |= scan_path_commands()
            self._needs_scan = False

    def __contains__(self, name: str) -> bool:
        self._ensure()
        return name in self._commands

    def add(self, name: str) -> None:
        if name:
            self._commands.add(name)

    def all(self) -> list[str]:
        self._ensure()
        return sorted(self._commands)
