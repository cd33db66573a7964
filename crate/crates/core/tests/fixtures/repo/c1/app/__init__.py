"""Tiny web application package."""
from .config import load_config
from .routes import register_routes

VERSION = "0.1.0"


def create_app(path="settings.toml"):
    """Build the application object."""
    config = load_config(path)
    app = {"config": config, "routes": []}
    register_routes(app)
    return app
