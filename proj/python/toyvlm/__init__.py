"""Python interface to the toyvlm C++ core."""

from toyvlm._toyvlm import (
    ConfigError,
    FormatError,
    InputError,
    IoError,
    Model,
    ParseError,
    Tokenizer,
    anls,
    denormalize_box,
    gen_document,
    inspect_checkpoint,
    iou,
    levenshtein,
    normalize_box,
    relaxed_accuracy,
    render_template,
    write_text_page,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "InputError",
    "IoError",
    "Model",
    "ParseError",
    "Tokenizer",
    "anls",
    "denormalize_box",
    "gen_document",
    "inspect_checkpoint",
    "iou",
    "levenshtein",
    "normalize_box",
    "relaxed_accuracy",
    "render_template",
    "write_text_page",
]
