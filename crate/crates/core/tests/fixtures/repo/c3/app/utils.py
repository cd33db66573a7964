import re
import time

SLUG_PATTERN = re.compile(r"[^a-z0-9]+")


def slugify(text: str) -> str:
    """Lowercase text and join words with dashes."""
    return SLUG_PATTERN.sub("-", text.lower()).strip("-")


def chunk(items, size=10):
    return [items[i:i + size] for i in range(0, len(items), size)]


def retry(fn, attempts=3, delay=0.1):
    """Call fn until it succeeds or attempts run out."""
    for attempt in range(attempts):
        try:
            return fn()
        except Exception:
            if attempt == attempts - 1:
                raise
            time.sleep(delay)
