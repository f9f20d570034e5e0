"""Python bindings for the pbm policy toolkit."""

from ._pbm import *  # noqa: F401,F403
