"""Exception hierarchy.

Every error carries the name of the module that raised it so the command
line front end can print module-qualified messages.
"""


class TaxoCompleteError(Exception):
    module = "taxocomplete"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


# taxonomy
class TaxonomyError(TaxoCompleteError):
    module = "taxonomy"


class CycleDetected(TaxonomyError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(map(str, self.cycle)))


class MultipleRoots(TaxonomyError):
    def __init__(self, roots):
        self.roots = list(roots)
        super().__init__(f"taxonomy has {len(self.roots)} roots: {self.roots}")


class NoRoot(TaxonomyError):
    def __init__(self, msg="taxonomy has no root"):
        super().__init__(msg)


class DuplicateName(TaxonomyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"duplicate label name {name!r}")


class UnknownLabel(TaxoCompleteError):
    module = "taxonomy"

    def __init__(self, label, doc_id=None):
        self.label = label
        self.doc_id = doc_id
        where = f" in document {doc_id!r}" if doc_id is not None else ""
        super().__init__(f"unknown label {label!r}{where}")


class InvalidEdge(TaxonomyError):
    pass


# tasks
class NotWeakSemilattice(TaxoCompleteError):
    module = "tasks"


class EmptyPath(TaxoCompleteError):
    module = "tasks"


# paths
class NotPathComplete(TaxoCompleteError):
    module = "paths"

    def __init__(self, label):
        self.label = label
        super().__init__(f"label {label!r} has no ancestor path inside the label set")


# numerics
class ShapeMismatch(TaxoCompleteError, ValueError):
    module = "autodiff"


class CheckpointError(TaxoCompleteError):
    module = "checkpoint"


# model
class ModelError(TaxoCompleteError):
    module = "model"


class EmbeddingDimMismatch(ModelError):
    pass


class SequenceTooLong(ModelError):
    pass


class PathTooLong(ModelError):
    pass


class UnknownTask(ModelError):
    def __init__(self, task_id):
        self.task_id = task_id
        super().__init__(f"unknown task {task_id!r}")


# loss
class TargetOutsideTask(TaxoCompleteError):
    module = "loss"


# metrics
class NoEligibleDocuments(TaxoCompleteError):
    module = "metrics"

    def __init__(self, k):
        self.k = k
        super().__init__(f"no document has at least {k} gold labels")


# experiment
class DivergenceDetected(TaxoCompleteError):
    module = "experiment"


# data io
class DataError(TaxoCompleteError):
    module = "data"


class MalformedJson(DataError):
    def __init__(self, line, detail=""):
        self.line = line
        super().__init__(f"malformed JSON on line {line}: {detail}")


class DuplicateDocId(DataError):
    def __init__(self, doc_id, line=None):
        self.doc_id = doc_id
        self.line = line
        super().__init__(f"duplicate doc_id {doc_id!r} (line {line})")


class DimMismatch(DataError):
    def __init__(self, line, got, expected):
        self.line = line
        super().__init__(f"line {line}: expected {expected} values, got {got}")


class ConfigError(DataError):
    pass
