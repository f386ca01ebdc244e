"""Label description generation: deterministic templates or an LLM endpoint.

Output format matches the classifier's description file: a JSON object
mapping each label to a list of strings. Template mode is byte-stable
across reruns, so the whole system is runnable offline; an LLM endpoint,
when given, is asked per label and any failure falls back to templates
with a warning.
"""

from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request

log = logging.getLogger("lgca_sidecar")

TEMPLATES = [
    "a photo of a {label}",
    "a photo of a {label}, which has a distinctive shape",
    "a photo of a {label}, which has characteristic colors",
    "a close-up photo of a {label}",
    "a photo of a {label} in its typical surroundings",
    "a photo of a {label}, which has a recognizable texture",
    "a photo of a {label} seen from a distance",
    "a cropped photo of a {label}",
    "a photo of a {label} in good lighting",
    "a photo of a {label}, which has notable proportions",
    "a detailed photo of a {label}",
    "a photo of one {label}",
]


def template_descriptions(label: str, count: int) -> list[str]:
    out = []
    for i in range(count):
        text = TEMPLATES[i % len(TEMPLATES)].format(label=label)
        if i >= len(TEMPLATES):
            text += f" (view {i // len(TEMPLATES) + 1})"
        out.append(text)
    return out


def llm_descriptions(endpoint: str, label: str, count: int, timeout: float = 30.0) -> list[str]:
    """POST {"label", "count"} and expect {"descriptions": [str, ...]}."""
    body = json.dumps({"label": label, "count": count}).encode("utf-8")
    request = urllib.request.Request(
        endpoint, data=body, headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(request, timeout=timeout) as response:
        reply = json.load(response)
    texts = reply.get("descriptions")
    if (
        not isinstance(texts, list)
        or len(texts) < count
        or not all(isinstance(t, str) and t for t in texts[:count])
    ):
        raise ValueError(f"endpoint returned unusable descriptions for {label!r}")
    return [t.strip() for t in texts[:count]]


def gen_descriptions(
    labels: list[str], count: int, endpoint: str | None = None
) -> dict[str, list[str]]:
    if count < 1:
        raise ValueError("count must be >= 1")
    if not labels:
        raise ValueError("labels must be non-empty")
    out: dict[str, list[str]] = {}
    for label in labels:
        if endpoint:
            try:
                out[label] = llm_descriptions(endpoint, label, count)
                continue
            except (urllib.error.URLError, ValueError, TimeoutError, OSError) as exc:
                log.warning("LLM endpoint failed for %r (%s); using templates", label, exc)
        out[label] = template_descriptions(label, count)
    return out


def read_labels(path: str) -> list[str]:
    """Labels from a text file (one per line) or a JSON list."""
    with open(path, "r", encoding="utf-8") as fh:
        content = fh.read()
    stripped = content.lstrip()
    if stripped.startswith("["):
        labels = json.loads(content)
        if not all(isinstance(l, str) for l in labels):
            raise ValueError("JSON labels file must hold a list of strings")
        return labels
    return [line.strip() for line in content.splitlines() if line.strip()]
