"""TensorFlow-backed trainer conforming to the detlab trainer wire protocol.

Deliberately standalone: talks to the orchestration server only through the
documented external interfaces (the line-delimited JSON protocol on
stdin/stdout and the neutral ``key = value`` config text), so it can live in
a different environment from the server.
"""

__version__ = "0.1.0"
