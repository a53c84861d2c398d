"""Snapshot files, flat key=value configs and reports, CSV emission.

Snapshot layout (little endian): magic ``DBL1``, u32 version 1, u64 Nx,
u64 Ny, f64 Lx, Ly, t, epsilon, i32 n, i32 sigma, then ``Nx*Ny`` f64
samples row-major with x fastest.
"""

import csv
import hashlib
import math
import os
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import SnapshotFormatError
from .spectral import GridSpec, SpectralField

MAGIC = b"DBL1"
VERSION = 1
HEADER = struct.Struct("<4sIQQddddii")


@dataclass
class Snapshot:
    field: SpectralField
    t: float
    epsilon: float = 0.0
    n: int = 1
    sigma: int = 1

    @property
    def grid(self):
        return self.field.grid


def write_snapshot(path, fld, t, epsilon=0.0, n=1, sigma=1):
    """Write one field; the file is written to a temporary name and renamed."""
    g = fld.grid
    data = np.ascontiguousarray(fld.values, dtype="<f8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, g.Nx, g.Ny, g.Lx, g.Ly, float(t), float(epsilon), int(n), int(sigma)))
        fh.write(data.tobytes())
    os.replace(tmp, path)
    return path


def read_snapshot(path, expect_grid=None):
    """Read a snapshot; raises :class:`SnapshotFormatError` on any inconsistency."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, nx, ny, lx, ly, t, eps, n, sigma = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    expected = HEADER.size + 8 * nx * ny
    if len(raw) != expected:
        raise SnapshotFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    try:
        grid = GridSpec(int(nx), int(ny), lx, ly)
    except ValueError as exc:
        raise SnapshotFormatError(f"{path}: invalid grid in header: {exc}") from None
    if expect_grid is not None and (grid.Nx, grid.Ny) != (expect_grid.Nx, expect_grid.Ny):
        raise SnapshotFormatError(f"{path}: grid {grid.Nx}x{grid.Ny} does not match the configured "
                                  f"{expect_grid.Nx}x{expect_grid.Ny}")
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(ny, nx).astype(float)
    return Snapshot(SpectralField(grid, values=values), t, eps, n, sigma)


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- key=value text --------------------------------------------------------

def format_value(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def dump_kv(d):
    return "".join(f"{k}={format_value(v)}\n" for k, v in d.items())


def parse_kv(text):
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ValueError(f"line {lineno}: empty key")
        out[k] = v.strip()
    return out


def write_kv(path, d):
    with open(path, "w") as fh:
        fh.write(dump_kv(d))
    return path


def read_kv(path):
    with open(path) as fh:
        return parse_kv(fh.read())


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return path


# -- run configuration -----------------------------------------------------

@dataclass
class RunConfig:
    equation: str = "dkp"
    n: int = 1
    sigma: int = 1
    epsilon: float = 0.1
    Nx: int = 512
    Ny: int = 2048
    Lx: float = 4.0
    Ly: float = 4.0
    Nt: int = 1000
    t_end: float = 0.32
    initial_data: str = "sym"
    initial_scale: float = 1.0
    snapshot_times: tuple = ()
    filter_threshold: float = 1e-10
    output_dir: str = "."
    projection: str = "weighted"
    levels: int = 2
    refine_steps: int = 1000
    next_critical: int = 0
    pi2_L: float = 0.0  # 0 selects the default half-width policy
    pi2_N: int = 8192
    pi2_T_min: float = -10.0
    pi2_T_max: float = 2.0
    pi2_T_step: float = 0.01
    pi2_order: int = 12
    pi2_export_stride_x: int = 8
    pi2_export_stride_t: int = 10

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.equation not in ("gkp", "dkp"):
            raise ValueError(f"equation must be gkp or dkp, got {self.equation!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")
        for name in ("epsilon", "Lx", "Ly", "t_end", "initial_scale", "filter_threshold", "pi2_L",
                     "pi2_T_min", "pi2_T_max", "pi2_T_step"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (self.epsilon > 0 and self.Lx > 0 and self.Ly > 0 and self.t_end > 0):
            raise ValueError("epsilon, Lx, Ly and t_end must be positive")
        if self.Nt < 1 or self.levels < 0 or self.refine_steps < 1:
            raise ValueError("Nt and refine_steps must be positive, levels non-negative")
        if self.filter_threshold < 0:
            raise ValueError("filter_threshold must be non-negative")
        if self.projection not in ("weighted", "uniform"):
            raise ValueError("projection must be weighted or uniform")
        if any(not math.isfinite(t) or t < 0 or t > self.t_end for t in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, t_end]")
        GridSpec(self.Nx, self.Ny, self.Lx, self.Ly)
        from .initial import resolve

        resolve(self.initial_data).function()

    @property
    def grid(self):
        return GridSpec(self.Nx, self.Ny, self.Lx, self.Ly)

    def initial(self):
        from .initial import resolve

        d = resolve(self.initial_data)
        d.scale = self.initial_scale
        return d

    @classmethod
    def from_dict(cls, d):
        """Build from string values; unknown keys are an error."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for k, v in d.items():
            if k not in known:
                raise ValueError(f"unknown config key {k!r}")
            default = getattr(cls, k, None) if k != "snapshot_times" else ()
            if k == "snapshot_times":
                kwargs[k] = tuple(float(x) for x in str(v).split(",") if x.strip()) if isinstance(v, str) else tuple(v)
            elif isinstance(default, bool):
                kwargs[k] = bool(int(v))
            elif isinstance(default, int):
                kwargs[k] = int(float(v)) if isinstance(v, str) else int(v)
            elif isinstance(default, float):
                kwargs[k] = float(v)
            else:
                kwargs[k] = str(v)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text):
        return cls.from_dict(parse_kv(text))

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_dict(self):
        return asdict(self)

    def to_text(self):
        return dump_kv(self.to_dict())

    def hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


@dataclass
class PipelineReport:
    subcommand: str
    config: dict
    diagnostics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)  # (path, sha256)
    critical: dict = field(default_factory=dict)
    comparison: dict = field(default_factory=dict)

    def add_artifact(self, path):
        self.artifacts.append((str(path), sha256(path)))

    def to_dict(self):
        out = {"subcommand": self.subcommand}
        out.update({f"config.{k}": v for k, v in self.config.items()})
        out.update({f"diagnostics.{k}": v for k, v in self.diagnostics.items()})
        out.update({f"critical.{k}": v for k, v in self.critical.items()})
        out.update({f"comparison.{k}": v for k, v in self.comparison.items()})
        for i, (p, h) in enumerate(self.artifacts):
            out[f"artifact.{i}"] = f"{os.path.basename(p)}:{h}"
        return out

    def write(self, path):
        return write_kv(path, self.to_dict())


# -- checkpoints -----------------------------------------------------------

def checkpoint(path, fld, t, config=None, epsilon=0.0, n=1, sigma=1):
    """Snapshot plus a ``.meta`` sidecar holding the config hash and echo."""
    write_snapshot(path, fld, t, epsilon, n, sigma)
    if config is not None:
        meta = {"config_hash": config.hash()}
        meta.update({f"config.{k}": v for k, v in config.to_dict().items()})
        write_kv(f"{path}.meta", meta)
    return path


def restore(path, config=None):
    """Load a checkpoint, checking dimensions and the config hash when given."""
    expect = config.grid if config is not None else None
    snap = read_snapshot(path, expect_grid=expect)
    meta_path = f"{path}.meta"
    if config is not None and os.path.exists(meta_path):
        meta = read_kv(meta_path)
        if meta.get("config_hash") != config.hash():
            # only the physics must agree; output paths and schedules may differ
            mismatched = [k for k in ("equation", "n", "sigma", "epsilon", "Nx", "Ny", "Lx", "Ly", "Nt",
                                      "t_end", "initial_data", "initial_scale", "filter_threshold",
                                      "projection")
                          if meta.get(f"config.{k}") != format_value(getattr(config, k))]
            if mismatched:
                raise SnapshotFormatError(f"{path}: checkpoint config differs in {mismatched}")
    return snap


# -- PI2 tables ------------------------------------------------------------

def save_pi2(path, sol):
    c = sol.config
    with open(path, "wb") as fh:
        np.savez(fh, T=sol.T, X=sol.X, U=sol.U, U_T=sol.U_T, U_TT=sol.U_TT, residuals=sol.residuals,
                 iterations=sol.iterations,
                 config=np.array([c.L, c.N, c.T_min, c.T_max, c.T_step, c.newton_tol, c.max_newton_iters,
                                  c.order, c.floor_tol]))
    return path


def load_pi2(path):
    from .pi2 import Pi2Config, Pi2Solution

    with np.load(path) as z:
        L, N, tmin, tmax, dt, tol, iters, order, floor = z["config"]
        cfg = Pi2Config(L=float(L), N=int(N), T_min=float(tmin), T_max=float(tmax), T_step=float(dt),
                        newton_tol=float(tol), max_newton_iters=int(iters), order=int(order),
                        floor_tol=float(floor))
        return Pi2Solution(config=cfg, T=z["T"], X=z["X"], U=z["U"], U_T=z["U_T"], U_TT=z["U_TT"],
                           residuals=z["residuals"], iterations=z["iterations"])


def export_pi2_csv(path, sol, stride_x=1, stride_t=1):
    """Rows ``T,X,U`` for every ``stride_t``-th slice and ``stride_x``-th node."""
    X = sol.X[::stride_x]

    def rows():
        for j in range(0, sol.T.size, stride_t):
            T = sol.T[j]
            for x, u in zip(X, sol.U[j, ::stride_x]):
                yield (T, x, u)

    return write_csv(path, ["T", "X", "U"], rows())
