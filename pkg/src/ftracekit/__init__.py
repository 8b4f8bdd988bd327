"""ftracekit: ftrace function_graph traces to ML feature matrices and
detection experiments."""

__version__ = "0.1.0"
