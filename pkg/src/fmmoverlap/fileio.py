"""Plain-text particle, velocity, trace and curve files."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .quadtree import Particles


class ParticleFileError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def parse_particles(lines, source="<input>") -> Particles:
    """Rows ``x,y,gamma``; blank lines and ``#`` comments are skipped."""
    xs, ys, gs = [], [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise ParticleFileError(source, lineno,
                                    f"expected 3 fields x,y,gamma, got {len(fields)}")
        try:
            x, y, g = (float(f) for f in fields)
        except ValueError:
            raise ParticleFileError(source, lineno, f"non-numeric field in {line!r}") from None
        if not all(math.isfinite(v) for v in (x, y, g)):
            raise ParticleFileError(source, lineno, "non-finite value")
        xs.append(x)
        ys.append(y)
        gs.append(g)
    return Particles(np.array(xs) + 1j * np.array(ys), np.array(gs))


def read_particles(path) -> Particles:
    with open(path, encoding="utf-8") as fh:
        return parse_particles(fh, source=str(path))


def write_particles(path, particles: Particles):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# x,y,gamma\n")
        for z, g in zip(particles.z, particles.gamma):
            fh.write(f"{float(z.real)!r},{float(z.imag)!r},{float(g)!r}\n")


def velocity_rows(velocities) -> list[str]:
    return [f"{i},{float(v.real)!r},{float(v.imag)!r}" for i, v in enumerate(velocities)]


def write_velocities(path, velocities):
    Path(path).write_text("\n".join(["# index,u,v"] + velocity_rows(velocities)) + "\n",
                          encoding="utf-8")


def read_velocities(path) -> np.ndarray:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        _, u, v = line.split(",")
        out.append(float(u) + 1j * float(v))
    return np.array(out, dtype=np.complex128)


def write_trace(path, trace):
    Path(path).write_text(
        "\n".join(["# stage,box,worker,start_ns,end_ns"] + trace.rows()) + "\n",
        encoding="utf-8")


def read_trace_rows(path) -> list[tuple[int, str, int, int, int]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        stage, box, worker, start, end = line.split(",")
        rows.append((int(stage), box, int(worker), int(start), int(end)))
    return rows


def write_curve(path, curve):
    lines = ["# P,min_N_per_P"] + [f"{int(p)},{v!r}" for p, v in curve]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def dumps(document: dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"
