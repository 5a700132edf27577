'''
@description:
- Writers for the artifacts the subcommands leave under the output directory:
  JSON reports, text listings and Jinja2-rendered summaries.
'''

import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path

from jinja2 import Template

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"


def ensure_out_dir(path: str) -> str:
    '''
    **Purpose:**
    - Create the output directory if needed.

    **Raises:**
    - ``ValueError``: If ``path`` exists and is not a directory, or cannot be created.
    '''

    if os.path.exists(path) and not os.path.isdir(path):
        raise ValueError(f"output path {path!r} exists and is not a directory")
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise ValueError(f"cannot create output directory {path!r}: {e}")
    return path


def timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def json_safe(value):
    '''Replace non-finite floats by their string form so the output is strict JSON.'''
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    return value


def write_json(data: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(json_safe(data), f, indent=2)
        f.write("\n")


def write_text(text: str, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def render_template(name: str, **context) -> str:
    '''
    **Purpose:**
    - Render a template shipped in ``deep_eprop/templates``.

    **Example:**
    ```python
    >>> text = render_template("verify_report.md.j2", passed=True, checks=[], generated_at="...")
    ```
    '''

    template = Template((TEMPLATES_DIR / name).read_text(encoding="utf-8"), keep_trailing_newline=True)
    return template.render(**context)
