"""
Closed-form per-cycle time budgets of the three network architectures.
"""

import configparser
import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostConstants:
    """
    Machine and problem constants of the cost model.

    solve: C_s, time per unknown of a subproblem solve
    update: C_u, time per unknown of an update
    connect: C_0c, connection setup time
    transmit: C_c, transmission time per unit of data
    M: subproblem dimension; n: number of subdomains
    l_bar: maximal neighbor count; L: number of servers
    """

    solve: float = 0.0
    update: float = 0.0
    connect: float = 0.0
    transmit: float = 0.0
    M: int = 400
    n: int = 400
    l_bar: int = 8
    L: int = 1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"cost constant '{f.name}' must be nonnegative")
        if self.L < 1:
            raise ConfigError(f"server count L must be >= 1, got {self.L}")


def cycle_time_master_slave(c: CostConstants) -> float:
    """T = 2(n+1)C_0c + C_c n(M+1) + C_s max(M, n) + C_u n(M+1)."""
    return (2 * (c.n + 1) * c.connect + c.transmit * c.n * (c.M + 1)
            + c.solve * max(c.M, c.n) + c.update * c.n * (c.M + 1))


def cycle_time_local(c: CostConstants) -> float:
    """T = 2 l_bar (C_0c + C_c M) + 2n(C_0c + C_c) + C_s max(M, n) + C_u M."""
    return (2 * c.l_bar * (c.connect + c.transmit * c.M) + 2 * c.n * (c.connect + c.transmit)
            + c.solve * max(c.M, c.n) + c.update * c.M)


def cycle_time_server_client(c: CostConstants) -> float:
    """
    T = 2(n/L)(C_0c + C_c M) + 2L(C_0c + C_c n/L) + C_s max(M, n) + C_u (M+1) n/L.

    Raises:
        ConfigError: If there are more servers than subdomains
    """
    if c.L > c.n:
        raise ConfigError(f"server count L={c.L} exceeds n={c.n}")
    per_server = c.n / c.L
    return (2 * per_server * (c.connect + c.transmit * c.M)
            + 2 * c.L * (c.connect + c.transmit * per_server)
            + c.solve * max(c.M, c.n) + c.update * (c.M + 1) * per_server)


def cycle_time_double_solve(c: CostConstants) -> float:
    """Local-communication budget without redundancy: a neighbor solves two subproblems."""
    return (2 * c.l_bar * (c.connect + c.transmit * c.M) + 2 * c.n * (c.connect + c.transmit)
            + c.solve * max(2 * c.M, c.n) + c.update * c.M)


def compare_architectures(c: CostConstants) -> Dict[str, float]:
    """Per-cycle budgets of all architectures (server-client only when L <= n)."""
    times = {
        'master-slave': cycle_time_master_slave(c),
        'local-communication': cycle_time_local(c),
    }
    if c.L <= c.n:
        times['server-client'] = cycle_time_server_client(c)
    return times


def compare_redundancy_strategies(c: CostConstants) -> Dict[str, object]:
    """
    Compare redundant data copies against solving a failed neighbor's
    subproblem in addition to one's own.

    Returns:
        Dict with both budgets and the name of the cheaper strategy
    """
    redundancy = cycle_time_local(c)
    double = cycle_time_double_solve(c)
    return {
        'redundancy': redundancy,
        'double-solve': double,
        'ratio': double / redundancy if redundancy > 0 else float('nan'),
        'cheaper': 'redundancy' if redundancy <= double else 'double-solve',
    }


def load_constants(path: str) -> CostConstants:
    """
    Read constants from the [constants] section of an INI file.

    Raises:
        ConfigError: On a missing file, unknown key or unparsable value
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path, encoding='utf-8'):
        raise ConfigError(f"cannot read constants file {path}")
    if not parser.has_section('constants'):
        raise ConfigError(f"{path} has no [constants] section")

    defaults = asdict(CostConstants())
    values = {}
    for key, raw in parser.items('constants'):
        if key not in defaults:
            raise ConfigError(f"unknown cost constant '{key}'")
        try:
            values[key] = int(float(raw)) if isinstance(defaults[key], int) else float(raw)
        except ValueError as e:
            raise ConfigError(f"invalid value for '{key}': {raw}") from e
    logger.debug("Loaded cost constants from %s: %s", path, values)
    return CostConstants(**values)
