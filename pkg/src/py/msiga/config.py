#####################################################################################
# The MIT License (MIT)
#
# Copyright (c) 2024 The msiga developers. All rights reserved.
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in
# all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.  IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN
# THE SOFTWARE.
#####################################################################################
import dataclasses
import logging
import os
from typing import Optional, Tuple

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-3
DEFAULT_SOLVER_TOL = 1e-10
DEFAULT_BLOCK_SIZE = 64

_TRUE_VALUES = ("1", "enable", "enabled", "yes", "true")


def env_flag(name, default=False):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in _TRUE_VALUES


def env_int(name, default):
    value = os.environ.get(name)
    if value is None or value.strip() == "":
        return default
    try:
        return int(value)
    except ValueError:
        log.warning(f"ignoring {name}={value!r}: not an integer")
        return default


def default_cache_dir():
    value = os.environ.get("MSIGA_CACHE_DIR")
    if value:
        return value
    return os.path.join(os.path.expanduser("~"), ".cache", "msiga")


def parse_degrees(text, dim=None):
    """Parse "N" or "N,N,N" into a tuple of degrees."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        values = tuple(int(v) for v in text)
    elif isinstance(text, int):
        values = (text, )
    else:
        values = tuple(int(v) for v in str(text).split(","))
    if any(v < 0 for v in values):
        raise ValueError(f"projection degrees must be >= 0, got {values}")
    if dim is not None:
        if len(values) == 1:
            values = values * dim
        elif len(values) != dim:
            raise ValueError(
                f"expected 1 or {dim} projection degrees, got {len(values)}")
    return values


@dataclasses.dataclass
class AssemblyConfig:
    p_proj: Optional[Tuple[int, ...]] = None
    tol: Optional[float] = None
    tile_order: Optional[int] = None
    oracle_order: Optional[int] = None
    cache_dir: Optional[str] = None
    threads: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE
    solver: str = "direct"
    solver_tol: float = DEFAULT_SOLVER_TOL
    matrix_free: bool = False
    use_cache: bool = True

    @classmethod
    def from_env(cls, **overrides):
        cfg = cls(cache_dir=default_cache_dir(),
                  use_cache=not env_flag("MSIGA_DISABLE_CACHE"),
                  threads=max(1, env_int("MSIGA_THREADS", 1)),
                  block_size=max(1, env_int("MSIGA_BLOCK_SIZE",
                                            DEFAULT_BLOCK_SIZE)))
        return cfg.updated(**overrides)

    def updated(self, **overrides):
        values = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **values)

    def resolve(self, model):
        """
        Merge the settings stored in the model file under this config.
        Explicit config values win over the model file.
        """
        values = {}
        if self.p_proj is None and self.tol is None:
            values["p_proj"] = model.projection.degrees
            values["tol"] = model.projection.tol
        if self.tile_order is None:
            values["tile_order"] = model.quadrature.tile_order
        if self.oracle_order is None:
            values["oracle_order"] = model.quadrature.oracle_order
        cfg = self.updated(**values)
        if cfg.p_proj is not None:
            cfg = dataclasses.replace(cfg,
                                      p_proj=parse_degrees(cfg.p_proj, model.dim))
        elif cfg.tol is None:
            cfg = dataclasses.replace(cfg, tol=DEFAULT_TOL)
        return cfg
