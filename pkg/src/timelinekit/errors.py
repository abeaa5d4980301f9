"""Exception hierarchy shared by every stage of the toolkit."""


class TimelineKitError(Exception):
    pass


class MissingMask(TimelineKitError):
    pass


class MalformedRle(TimelineKitError):
    pass


class SchemaError(TimelineKitError):
    """A document failed validation; ``field`` names the offending location."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class InfeasibleConstraint(TimelineKitError):
    pass


class LayoutOverflow(TimelineKitError):
    pass


class TooFewMarks(TimelineKitError):
    pass


class NoElements(TimelineKitError):
    pass


class EmptyForeground(TimelineKitError):
    pass


class DegenerateInput(TimelineKitError):
    pass


class NotTextLike(TimelineKitError):
    pass


class NoEvents(TimelineKitError):
    pass


class DomainError(TimelineKitError):
    pass


class TemplateIncomplete(TimelineKitError):
    pass


class InsufficientSlots(TimelineKitError):
    pass


class NoGroundTruth(TimelineKitError):
    pass
