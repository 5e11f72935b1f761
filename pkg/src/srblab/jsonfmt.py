"""Deterministic JSON text with 17-significant-digit floats."""

import json
import math

import numpy as np


def format_float(x):
    """Shortest-stable text for a float: 17 significant digits, ``null`` if non-finite."""
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if text in ("0", "-0"):
        return "0.0"
    if "e" not in text and "." not in text:
        text += ".0"
    return text


def _encode(obj, indent, level, out):
    pad = " " * (indent * (level + 1)) if indent else ""
    end = " " * (indent * level) if indent else ""
    sep = ",\n" if indent else ","
    nl = "\n" if indent else ""
    if isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{" + nl)
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(sep)
            out.append(pad + json.dumps(str(key)) + ": ")
            _encode(value, indent, level + 1, out)
        out.append(nl + end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        # short numeric rows stay on one line
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in items):
            parts = []
            for v in items:
                sub = []
                _encode(v, 0, 0, sub)
                parts.append("".join(sub))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[" + nl)
        for i, value in enumerate(items):
            if i:
                out.append(sep)
            out.append(pad)
            _encode(value, indent, level + 1, out)
        out.append(nl + end + "]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent=2):
    """Serialize ``obj``; floats use 17 significant digits, non-finite become null."""
    out = []
    _encode(obj, indent, 0, out)
    return "".join(out) + "\n"
