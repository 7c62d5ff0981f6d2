"""Exception categories.

The command-line front end maps each category to a distinct exit code, so
library code should pick the class that names what actually went wrong:

* :class:`ParseError` — a file or config could not be read or violates its
  format (bad header, malformed row, unknown family name).
* :class:`PreconditionError` — inputs parsed fine but an operation's
  stated preconditions are violated (budget out of range, too few points).
* :class:`ConsistencyError` — two inputs disagree with each other
  (worksheet ids missing from the dataset, sampled unit without a loss).
"""


class ParseError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass
