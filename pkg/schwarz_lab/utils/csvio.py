"""
CSV writing with provenance header and round-trip float formatting.
"""

import os
from typing import Iterable, Mapping, Optional, Sequence


def format_value(value) -> str:
    """Format floats with 17 significant digits, everything else with str()."""
    if isinstance(value, float):
        return format(value, '.17g')
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence],
              provenance: Optional[Mapping[str, object]] = None) -> str:
    """
    Write a comma-separated file with LF line endings.

    The first line is a '#' comment carrying the provenance entries
    (config hash, seed), the second line the column header.

    Args:
        path: Output path; parent directories are created
        columns: Column names
        rows: Row sequences, one value per column
        provenance: Optional key/value pairs for the comment line

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    lines = []
    if provenance:
        lines.append('# ' + ', '.join(f"{k}={format_value(v)}" for k, v in provenance.items()))
    lines.append(','.join(columns))
    for row in rows:
        lines.append(','.join(format_value(v) for v in row))

    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    return path


def read_csv(path: str):
    """
    Read a file written by write_csv().

    Returns:
        Tuple (provenance dict, column names, list of row string lists)
    """
    provenance = {}
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line.rstrip('\n') for line in f if line.strip()]
    if lines and lines[0].startswith('#'):
        for item in lines[0][1:].split(','):
            if '=' in item:
                key, value = item.split('=', 1)
                provenance[key.strip()] = value.strip()
        lines = lines[1:]
    columns = lines[0].split(',') if lines else []
    rows = [line.split(',') for line in lines[1:]]
    return provenance, columns, rows
