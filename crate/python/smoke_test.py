"""Smoke test for the repograph extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
then run:
    python python/smoke_test.py
"""

import json
import os
import subprocess
import sys
import tempfile

import repograph

APP = '''\
def render_markdown(text):
    """Render markdown to html."""
    return escape(text)


def escape(text):
    return text.replace("<", "&lt;")
'''

CLI = '''\
from app import render_markdown


def main(argv):
    print(render_markdown(argv[0]))
'''


def git(repo, *args, env=None):
    subprocess.run(["git", "-C", repo, *args], check=True, capture_output=True, env=env)


def make_repo(root):
    repo = os.path.join(root, "repo")
    os.makedirs(repo)
    git(repo, "init", "-q")
    env = dict(os.environ, GIT_AUTHOR_NAME="Ada", GIT_AUTHOR_EMAIL="ada@example.com",
               GIT_COMMITTER_NAME="Ada", GIT_COMMITTER_EMAIL="ada@example.com",
               GIT_AUTHOR_DATE="2024-01-01T00:00:00Z", GIT_COMMITTER_DATE="2024-01-01T00:00:00Z")
    with open(os.path.join(repo, "app.py"), "w") as f:
        f.write(APP)
    git(repo, "add", "-A", env=env)
    git(repo, "commit", "-q", "-m", "Add markdown rendering", env=env)
    with open(os.path.join(repo, "cli.py"), "w") as f:
        f.write(CLI)
    git(repo, "add", "-A", env=env)
    git(repo, "commit", "-q", "-m", "Add command line entry point", env=env)
    return repo


def main():
    with tempfile.TemporaryDirectory() as tmp:
        g = repograph.Graph.from_repo(make_repo(tmp), repo_id="smoke")
        stats = g.stats()
        print("graph:", g, json.dumps(stats, sort_keys=True))
        assert len(g) > 0 and g.edge_count() > 0

        ids = g.node_ids()
        assert any(i.startswith("file:") or "app.py" in i for i in ids), ids
        node = g.node(ids[0])
        assert node["id"] == ids[0]
        try:
            g.node("no such node")
            raise AssertionError("expected KeyError")
        except KeyError:
            pass

        path = os.path.join(tmp, "graph.json")
        g.save(path)
        again = repograph.Graph.load(path)
        assert again.to_json() == g.to_json()
        g.export_graphml(os.path.join(tmp, "graph.graphml"))

        decision = repograph.classify("How many commits did each author make?")
        assert decision["query_type"] == "Aggregation", decision
        assert "hello" in repograph.render_prompt("hello")

        engine = repograph.Engine(g, embed=True)
        hits = engine.search("render markdown to html", k=3)
        print("search:", hits)
        assert len(hits) == 3
        assert hits[0][1] >= hits[-1][1]

        answer = engine.query("Find code related to markdown rendering", k=5)
        print("query:", answer["decision"]["backend"], [r["id"] for r in answer["ranked"]])
        assert answer["decision"]["backend"] == "Embedding"
        assert answer["ranked"]

        try:
            engine.query("   ")
            raise AssertionError("expected ValueError")
        except ValueError:
            pass
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
