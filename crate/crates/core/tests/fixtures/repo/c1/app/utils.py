import re

SLUG_PATTERN = re.compile(r"[^a-z0-9]+")


def slugify(text: str) -> str:
    """Lowercase text and join words with dashes."""
    return SLUG_PATTERN.sub("-", text.lower()).strip("-")


def chunk(items, size=10):
    return [items[i:i + size] for i in range(0, len(items), size)]
