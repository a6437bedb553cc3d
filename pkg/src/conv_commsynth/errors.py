"""Exception hierarchy shared by all conv_commsynth modules."""


class CommSynthError(Exception):
    """Base class for all toolkit errors."""


class MemoryExceeded(CommSynthError):
    """A tile footprint does not fit in the per-processor fast memory."""


class PartitionInvalid(CommSynthError):
    """A work partition violates the iteration-space closure or its bounds."""


class ConstraintViolated(CommSynthError):
    """A simplified-cost evaluation point violates one of its constraints."""


class CapacityTooSmall(CommSynthError):
    """Memory capacity too small for the capacity-reduction formula."""


class Infeasible(CommSynthError):
    """No tile assignment fits the given capacity."""


class NoFeasibleInteger(CommSynthError):
    """Integer refinement found no plan satisfying the closure and memory."""


class SearchSpaceTooLarge(CommSynthError):
    """Exhaustive search would exceed the configured candidate budget."""


class NonDividingPartition(CommSynthError):
    """A work-partition extent does not divide its problem extent."""


class GridProductMismatch(CommSynthError):
    """Processor-grid dimensions do not multiply to the processor count."""


class SubSliceIndivisible(CommSynthError):
    """An ownership sub-slice split does not divide evenly."""


class GroupIndivisible(CommSynthError):
    """Broadcast steps cannot be split into whole rotation groups."""


class MemoryOverflow(CommSynthError):
    """A simulated processor exceeded its local memory capacity."""

    def __init__(self, processor, step, live, capacity):
        self.processor = processor
        self.step = step
        self.live = live
        self.capacity = capacity
        super().__init__(
            f"processor {processor} holds {live} elements at step {step}, "
            f"capacity is {capacity}"
        )


class DataMissing(CommSynthError):
    """A simulated tile read an element absent from local memory and buffers."""

    def __init__(self, processor, step, element, tensor):
        self.processor = processor
        self.step = step
        self.element = element
        self.tensor = tensor
        super().__init__(
            f"processor {processor} at step {step}: {tensor} element "
            f"{element} is neither owned nor delivered by the schedule"
        )


class ShapeMismatch(CommSynthError):
    """A tensor argument does not have the extents the layer implies."""


class ParseError(CommSynthError):
    """Malformed configuration text."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ValidationError(CommSynthError):
    """A configuration field is missing or out of range."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
