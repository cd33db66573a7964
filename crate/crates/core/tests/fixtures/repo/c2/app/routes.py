from functools import wraps

from .render import render_markdown

ROUTES = []


def route(pattern):
    def wrap(handler):
        @wraps(handler)
        def inner(*args, **kwargs):
            return handler(*args, **kwargs)

        ROUTES.append((pattern, inner))
        return inner

    return wrap


@route("/")
async def index():
    return "hello"


@route("/post/<slug>")
def post_page(slug, body: str) -> str:
    return render_markdown(body)


def register_routes(app):
    app["routes"].extend(ROUTES)
