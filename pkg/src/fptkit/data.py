"""Sample files and null-distribution specs for the goodness-of-fit test.

Null spec grammar::

    uniform                      uniform on (0, 1)
    uniform(a=0, b=2)
    normal(mu=0, sigma=1)
    exponential(lam=1)
    @path/to/table               two columns "x F(x)", linearly interpolated
"""

import re
from pathlib import Path

import numpy as np
from scipy import special

from .errors import DomainError


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def load_sample(path):
    """One value per line; '#' starts a comment, blank lines are skipped."""
    values = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise DomainError(f"{path}:{lineno}: not a number: {line!r}") from None
    if not values:
        raise DomainError(f"{path}: no observations")
    return np.array(values)


def _uniform(a=0.0, b=1.0):
    if not b > a:
        raise DomainError("uniform needs b > a")
    return lambda x: np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)


def _normal(mu=0.0, sigma=1.0):
    if not sigma > 0:
        raise DomainError("normal needs sigma > 0")
    return lambda x: special.ndtr((np.asarray(x, dtype=float) - mu) / sigma)


def _exponential(lam=1.0):
    if not lam > 0:
        raise DomainError("exponential needs lam > 0")
    return lambda x: -np.expm1(-lam * np.maximum(np.asarray(x, dtype=float), 0.0))


_FAMILIES = {
    "uniform": (_uniform, {"a", "b"}),
    "normal": (_normal, {"mu", "sigma"}),
    "exponential": (_exponential, {"lam"}),
}

_SPEC = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def load_quantile_table(path):
    """Piecewise-linear cdf through the (x, F) rows of a two-column text file."""
    xs, fs = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise DomainError(f"{path}:{lineno}: expected two columns")
        try:
            xs.append(float(parts[0]))
            fs.append(float(parts[1]))
        except ValueError:
            raise DomainError(f"{path}:{lineno}: not a number") from None
    xs = np.array(xs)
    fs = np.array(fs)
    if xs.size < 2:
        raise DomainError(f"{path}: need at least two rows")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(fs) < 0) or fs[0] < 0 or fs[-1] > 1:
        raise DomainError(f"{path}: x must increase and F must be a nondecreasing probability")
    return lambda x: np.interp(np.asarray(x, dtype=float), xs, fs, left=0.0, right=1.0)


def parse_null_spec(spec):
    """Turn a spec string into a vectorized cdf."""
    spec = spec.strip()
    if spec.startswith("@"):
        return load_quantile_table(spec[1:])
    match = _SPEC.match(spec)
    if not match or match.group(1) not in _FAMILIES:
        raise DomainError(f"unknown null distribution {spec!r}; use {', '.join(_FAMILIES)} or @table")
    factory, allowed = _FAMILIES[match.group(1)]
    params = {}
    body = (match.group(2) or "").strip()
    if body:
        for item in body.split(","):
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in allowed:
                raise DomainError(f"bad parameter {item.strip()!r} for {match.group(1)}")
            try:
                params[key] = float(value)
            except ValueError:
                raise DomainError(f"parameter {key} is not a number") from None
    return factory(**params)
