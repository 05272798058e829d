"""Error hierarchy shared across the pipeline.

Every stage raises a subclass of TowerlabError for anticipated failures
(malformed input files, contract violations, numerical blowups).  The
CLI maps these to exit code 1 and prints the raising module so a failed
batch job can be attributed without a traceback.
"""


class TowerlabError(Exception):
    """Base class for anticipated pipeline errors."""
