"""Exception hierarchy shared by every module."""


class ResFeatsError(Exception):
    pass


class ShapeMismatch(ResFeatsError, ValueError):
    pass


class InvalidGeometry(ResFeatsError, ValueError):
    pass


class UnsupportedGeometry(ResFeatsError, ValueError):
    pass


class IndexOutOfRange(ResFeatsError, IndexError):
    pass


class InvalidConfig(ResFeatsError, ValueError):
    pass


class DegenerateData(ResFeatsError, ValueError):
    pass


class SingleClassData(ResFeatsError, ValueError):
    pass


class InsufficientClassSamples(ResFeatsError, ValueError):
    pass


class InsufficientSamples(ResFeatsError, ValueError):
    pass


# container / file errors
class CorruptFile(ResFeatsError, ValueError):
    pass


class MissingTensor(ResFeatsError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnexpectedTensor(ResFeatsError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MetaMismatch(ResFeatsError, ValueError):
    pass


# dataset errors
class NoClasses(ResFeatsError, ValueError):
    pass


class EmptyClass(ResFeatsError, ValueError):
    pass


class UnreadableImage(ResFeatsError, ValueError):
    pass
