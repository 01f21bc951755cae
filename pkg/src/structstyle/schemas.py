"""JSON schemas for the ``--json`` output of every CLI subcommand."""

_num = {"type": "number"}
_str = {"type": "string"}
_int = {"type": "integer"}

_terms = {
    "type": "object",
    "properties": {k: _num for k in ("content", "texture", "structure", "tv")},
    "required": ["content", "texture", "structure", "tv"],
}

OUTPUT_SCHEMAS: dict[str, dict] = {
    "train": {
        "type": "object",
        "properties": {
            "command": {"const": "train"},
            "steps": _int,
            "initial_total": {"type": ["number", "null"]},
            "final_total": {"type": ["number", "null"]},
            "checkpoints": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {"step": _int, "path": _str, "elapsed": _num, "digest": _str},
                    "required": ["step", "path", "elapsed"],
                },
            },
            "report": _str,
            "log": _str,
            "figures": {"type": "array", "items": _str},
            "throughput": {"type": "object"},
        },
        "required": ["command", "steps", "checkpoints", "report", "log"],
    },
    "stylize": {
        "type": "object",
        "properties": {
            "command": {"const": "stylize"},
            "input": _str,
            "output": _str,
            "width": _int,
            "height": _int,
            "alpha": {"type": "boolean"},
            "model_digest": _str,
        },
        "required": ["command", "input", "output", "width", "height", "alpha"],
    },
    "optimize": {
        "type": "object",
        "properties": {
            "command": {"const": "optimize"},
            "output": _str,
            "iters": _int,
            "initial_total": _num,
            "final_total": _num,
            "final_terms": _terms,
            "rejected_steps": _int,
            "figures": {"type": "array", "items": _str},
        },
        "required": ["command", "output", "iters", "initial_total", "final_total", "final_terms"],
    },
    "restyle-assets": {
        "type": "object",
        "properties": {
            "command": {"const": "restyle-assets"},
            "counts": {
                "type": "object",
                "properties": {k: _int for k in ("restyled", "copied", "failed", "total")},
                "required": ["restyled", "copied", "failed", "total"],
            },
            "report": {"type": ["string", "null"]},
            "failed": {"type": "array", "items": {"type": "object"}},
        },
        "required": ["command", "counts"],
    },
    "benchmark": {
        "type": "object",
        "properties": {
            "command": {"const": "benchmark"},
            "runs": {"type": "integer", "minimum": 5},
            "rows": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "width": _int, "height": _int, "mean_ms": _num, "std_ms": _num,
                        "per_pixel_us": _num, "samples_ms": {"type": "array", "items": _num},
                    },
                    "required": ["width", "height", "mean_ms", "std_ms", "per_pixel_us", "samples_ms"],
                },
            },
            "per_pixel_us": _num,
            "hardware": _str,
            "load_seconds": {"type": ["number", "null"]},
            "reference": {"type": "object"},
            "figures": {"type": "array", "items": _str},
        },
        "required": ["command", "runs", "rows", "per_pixel_us", "hardware"],
    },
    "inspect": {
        "type": "object",
        "properties": {
            "command": {"const": "inspect"},
            "layers": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {"layer": _str, "height": _int, "width": _int, "mean": _num, "max": _num},
                    "required": ["layer", "height", "width", "mean", "max"],
                },
            },
            "figures": {"type": "array", "items": _str},
        },
        "required": ["command", "layers"],
    },
    "targets": {
        "type": "object",
        "properties": {
            "command": {"const": "targets"},
            "output": _str,
            "digest": _str,
            "style_id": _str,
            "grams": {"type": "object", "additionalProperties": _int},
            "cross_grams": {"type": "object", "additionalProperties": _int},
        },
        "required": ["command", "output", "digest", "grams", "cross_grams"],
    },
    "vgg-convert": {
        "type": "object",
        "properties": {"command": {"const": "vgg-convert"}, "output": _str, "digest": _str},
        "required": ["command", "output", "digest"],
    },
    "vgg-surrogate": {
        "type": "object",
        "properties": {"command": {"const": "vgg-surrogate"}, "output": _str, "digest": _str, "seed": _int},
        "required": ["command", "output", "digest"],
    },
}
