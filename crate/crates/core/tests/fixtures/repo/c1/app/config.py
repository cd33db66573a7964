import os

DEFAULT_PATH = "settings.toml"


def load_config(path=DEFAULT_PATH):
    """Read key=value pairs from a settings file."""
    values = {}
    if not os.path.exists(path):
        return values
    with open(path) as fh:
        for line in fh:
            if "=" in line and not line.startswith("#"):
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    return values
