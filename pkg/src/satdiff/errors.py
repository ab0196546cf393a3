"""Exception hierarchy shared by all satdiff modules."""


class SatDiffError(Exception):
    """Base class for every structured error raised by the package."""


class LatexError(SatDiffError, ValueError):
    """Raised when LaTeX text cannot be lexed or parsed."""


class UnknownCharacter(LatexError):
    def __init__(self, position, char=None):
        self.position = position
        self.char = char
        super().__init__(f"unknown character {char!r} at position {position}")


class UnknownCommand(LatexError):
    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        super().__init__(f"unknown command {name} at position {position}")


class UnbalancedBraces(LatexError):
    def __init__(self, position):
        self.position = position
        super().__init__(f"unbalanced braces at token {position}")


class DanglingScript(LatexError):
    def __init__(self, position, reason="script has no base or no argument"):
        self.position = position
        super().__init__(f"{reason} (token {position})")


class ArityError(LatexError):
    def __init__(self, command, position=None):
        self.command = command
        self.position = position
        super().__init__(f"{command} is missing an argument (token {position})")


class SatError(SatDiffError, ValueError):
    """Raised by symbol-aware tokenization and vocabulary handling."""


class DepthExceeded(SatError):
    def __init__(self, position, depth, max_depth):
        self.position = position
        self.depth = depth
        self.max_depth = max_depth
        super().__init__(f"leaf {position} at depth {depth} exceeds max depth {max_depth}")


class IncoherentStructure(SatError):
    def __init__(self, position, reason=""):
        self.position = position
        super().__init__(f"incoherent structure at token {position}: {reason}")


class EmptyCorpus(SatError):
    def __init__(self):
        super().__init__("corpus is empty")


class SequenceTooLong(SatError):
    def __init__(self, length, canvas_len):
        self.length = length
        self.canvas_len = canvas_len
        super().__init__(f"sequence length {length} exceeds canvas length {canvas_len}")


class OutOfVocabulary(SatError):
    def __init__(self, token):
        self.token = token
        super().__init__(f"token {token!r} is not in the vocabulary")


class SatFormatError(SatError):
    def __init__(self, item, reason=""):
        self.item = item
        super().__init__(f"malformed SAT item {item!r}: {reason}")


class InvalidTime(SatDiffError, ValueError):
    def __init__(self, t, T):
        self.t = t
        self.T = T
        super().__init__(f"invalid time index t={t} for horizon T={T}")


class MissingRow(SatDiffError, KeyError):
    def __init__(self, symbol):
        self.symbol = symbol
        super().__init__(f"confusion channel has no row for symbol {symbol!r}")


class ChannelConfigError(SatDiffError, ValueError):
    pass


class ShapeMismatch(SatDiffError, ValueError):
    pass


class NonFiniteLoss(SatDiffError, FloatingPointError):
    def __init__(self, step, detail=""):
        self.step = step
        super().__init__(f"non-finite loss at step {step}: {detail}")


class CheckpointMismatch(SatDiffError, ValueError):
    pass


class SizeMismatch(SatDiffError, ValueError):
    def __init__(self, n_ref, n_hyp):
        super().__init__(f"corpus sizes differ: {n_ref} references vs {n_hyp} hypotheses")


class UnevenRunCounts(SatDiffError, ValueError):
    pass


class MissingTruthAnnotation(SatDiffError, ValueError):
    pass


class BadRatios(SatDiffError, ValueError):
    pass
