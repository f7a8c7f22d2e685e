"""Input validation helpers used by the estimators and operations."""

from numbers import Integral, Real

from .errors import ArgumentError


def check_lines(X, name="X"):
    """Coerce ``X`` to a list of strings.

    Accepts a corpus object (anything with a ``texts`` attribute), a single
    string is rejected because iterating it would silently yield characters.
    """
    if isinstance(X, (str, bytes)):
        raise ArgumentError(f"{name} must be a sequence of lines, not a single string")
    texts = getattr(X, "texts", None)
    if texts is not None:
        return list(texts)
    lines = []
    for i, line in enumerate(X):
        text = getattr(line, "text", line)
        if not isinstance(text, str):
            raise ArgumentError(f"{name}[{i}] is {type(text).__name__}, expected str")
        lines.append(text)
    return lines


def check_token_lists(X, name="X"):
    """Coerce ``X`` to a list of token lists; strings are split on whitespace."""
    if isinstance(X, (str, bytes)):
        raise ArgumentError(f"{name} must be a sequence of lines, not a single string")
    texts = getattr(X, "texts", None)
    if texts is not None:
        X = texts
    out = []
    for i, item in enumerate(X):
        item = getattr(item, "text", item)
        if isinstance(item, str):
            out.append(item.split())
        else:
            try:
                tokens = list(item)
            except TypeError:
                raise ArgumentError(f"{name}[{i}] is not a line or token list") from None
            out.append(tokens)
    return out


def check_int(value, name, min_value=None, max_value=None):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ArgumentError(f"{name} must be an integer, got {value!r}")
    if min_value is not None and value < min_value:
        raise ArgumentError(f"{name} must be >= {min_value}, got {value}")
    if max_value is not None and value > max_value:
        raise ArgumentError(f"{name} must be <= {max_value}, got {value}")
    return int(value)


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ArgumentError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if low is not None and (value < low or (low_open and value == low)):
        raise ArgumentError(f"{name}={value} is outside the allowed range")
    if high is not None and (value > high or (high_open and value == high)):
        raise ArgumentError(f"{name}={value} is outside the allowed range")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ArgumentError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
