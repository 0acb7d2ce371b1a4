"""HTTP service wrapping the estimation pipeline.

Runs are jobs: POST /runs starts one in a background thread and the
client polls its status, then fetches the report and rendered views.
"""

from .app import app, create_app

__all__ = ["app", "create_app"]
