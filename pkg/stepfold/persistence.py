"""
stepfold.persistence
====================

Checkpoint files for model bundles, run configs and metric reports.

Documents are written as canonical JSON: keys sorted, two-space
indentation, arrays of numbers on a single line and every float printed
with 17 significant digits. Loading and saving a file again therefore
reproduces it byte for byte. See ``docs/checkpoint-format.rst`` for the
bundle schema.

"""

import json
import logging
import numbers

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    ParseError,
    SchemaViolationError,
    VersionMismatchError,
)
from .net import EpsilonNet
from .schedule import AlphaSchedule, SubSequence
from .train import ModelBundle, TrainConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
BUNDLE_FIELDS = ("format_version", "kind", "T", "alpha", "phi", "net")
NET_FIELDS = (
    "input_dim",
    "time_embed_dim",
    "hidden_widths",
    "activation",
    "layers",
)


def format_float(value):
    """17 significant digits, always readable back as a float."""
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(
            "cannot serialize non-finite value {0}".format(value)
        )
    text = format(value, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _is_scalar(value):
    return value is None or isinstance(value, (str, bool, numbers.Number))


def _encode(value, level):
    pad = "  " * (level + 1)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            "{0}{1}: {2}".format(pad, json.dumps(key), _encode(v, level + 1))
            for key, v in sorted(
                ((str(k), v) for k, v in value.items()), key=lambda kv: kv[0]
            )
        ]
        return "{\n" + ",\n".join(items) + "\n" + "  " * level + "}"
    if isinstance(value, (list, tuple)):
        if all(_is_scalar(v) for v in value):
            return "[" + ", ".join(_encode(v, level) for v in value) + "]"
        items = [pad + _encode(v, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + "  " * level + "]"
    raise InvalidParameterError(
        "cannot serialize value of type {0}".format(type(value).__name__)
    )


def dumps_canonical(document):
    """Canonical JSON text of `document`, ending with a newline."""
    return _encode(document, 0) + "\n"


def _write(path, document):
    with open(path, "w", newline="\n") as f:
        f.write(dumps_canonical(document))


def read_document(path):
    """Parses a JSON file.

    Raises
    ------
    ParseError
        if the file is not valid JSON; the error carries the line number
    """
    with open(path) as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno)


def bundle_to_document(bundle):
    """The JSON-ready dictionary of a bundle."""
    net = bundle.net
    layers = [
        {"w": w.ravel().tolist(), "b": b.tolist()}
        for w, b in zip(net.weights, net.biases)
    ]
    return {
        "format_version": FORMAT_VERSION,
        "kind": bundle.kind,
        "T": bundle.schedule.T,
        "alpha": bundle.schedule.alpha.tolist(),
        "phi": [int(v) for v in bundle.phi.phi],
        "net": {
            "input_dim": net.input_dim,
            "time_embed_dim": net.time_embed_dim,
            "hidden_widths": list(net.hidden_widths),
            "activation": net.activation,
            "layers": layers,
        },
        "metadata": bundle.metadata,
    }


def _require(document, fields, where):
    if not isinstance(document, dict):
        raise SchemaViolationError("{0} must be a JSON object".format(where))
    missing = [f for f in fields if f not in document]
    if missing:
        raise SchemaViolationError(
            "{0} is missing field(s): {1}".format(where, ", ".join(missing))
        )


def check_version(document):
    """Raises VersionMismatchError unless format_version is supported."""
    _require(document, ("format_version",), "checkpoint")
    version = document["format_version"]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            "unsupported format_version {0!r}; expected {1}".format(
                version, FORMAT_VERSION
            )
        )


def schedule_from_document(document):
    """The validated schedule of a checkpoint document."""
    _require(document, ("T", "alpha"), "checkpoint")
    try:
        schedule = AlphaSchedule(document["alpha"])
    except (InvalidParameterError, TypeError, ValueError) as e:
        raise SchemaViolationError("alpha: {0}".format(e))
    if document["T"] != schedule.T:
        raise SchemaViolationError(
            "T={0} does not match the {1} alpha values".format(
                document["T"], schedule.T
            )
        )
    return schedule


def phi_from_document(document, schedule=None):
    """The validated sub-sequence of a checkpoint document."""
    _require(document, ("phi",), "checkpoint")
    try:
        phi = SubSequence(document["phi"])
    except (InvalidParameterError, TypeError, ValueError) as e:
        raise SchemaViolationError("phi: {0}".format(e))
    if schedule is not None and phi.T != schedule.T:
        raise SchemaViolationError(
            "phi must end at T={0} of the schedule, found phi_last={1}".format(
                schedule.T, phi.T
            )
        )
    return phi


def net_from_document(document):
    """The network of a checkpoint document, with every shape checked."""
    _require(document, ("net",), "checkpoint")
    net_doc = document["net"]
    _require(net_doc, NET_FIELDS, "net")
    try:
        sizes = (
            [net_doc["input_dim"] + net_doc["time_embed_dim"]]
            + list(net_doc["hidden_widths"])
            + [net_doc["input_dim"]]
        )
        if len(net_doc["layers"]) != len(sizes) - 1:
            raise DimensionMismatchError(
                "expected {0} layers, found {1}".format(
                    len(sizes) - 1, len(net_doc["layers"])
                )
            )
        weights, biases = [], []
        for i, layer in enumerate(net_doc["layers"]):
            _require(layer, ("w", "b"), "net.layers[{0}]".format(i))
            w = np.asarray(layer["w"], dtype=np.float64)
            if w.size != sizes[i + 1] * sizes[i]:
                raise DimensionMismatchError(
                    "layer {0}: w holds {1} values, expected {2}x{3}".format(
                        i, w.size, sizes[i + 1], sizes[i]
                    )
                )
            weights.append(w.reshape(sizes[i + 1], sizes[i]))
            biases.append(layer["b"])
        return EpsilonNet.from_parameters(
            net_doc["input_dim"],
            net_doc["hidden_widths"],
            net_doc["time_embed_dim"],
            net_doc["activation"],
            weights,
            biases,
        )
    except (InvalidParameterError, DimensionMismatchError, TypeError) as e:
        raise SchemaViolationError("net: {0}".format(e))


def bundle_from_document(document):
    """Rebuilds and re-validates a bundle from its dictionary.

    Raises
    ------
    VersionMismatchError
        if format_version is not 1
    SchemaViolationError
        if a field is missing or a value breaks an invariant; the message
        names the field and the invariant
    """
    check_version(document)
    _require(document, BUNDLE_FIELDS, "checkpoint")
    schedule = schedule_from_document(document)
    phi = phi_from_document(document, schedule)
    net = net_from_document(document)
    metadata = document.get("metadata") or {}
    try:
        return ModelBundle(document["kind"], schedule, phi, net, metadata)
    except InvalidParameterError as e:
        raise SchemaViolationError(str(e))


def save_bundle(bundle, path):
    """Writes `bundle` to `path` as a canonical JSON checkpoint."""
    _write(path, bundle_to_document(bundle))
    logger.info("wrote %s checkpoint %s", bundle.kind, path)


def load_bundle(path):
    """Reads and validates a checkpoint written by ``save_bundle``."""
    bundle = bundle_from_document(read_document(path))
    logger.debug("loaded %r from %s", bundle, path)
    return bundle


def save_config(config, path):
    _write(path, config.to_dict())


def load_config(path):
    """Reads a run config; unknown keys are rejected."""
    document = read_document(path)
    if not isinstance(document, dict):
        raise SchemaViolationError("config must be a JSON object")
    return TrainConfig.from_dict(document)


def write_report(report, path):
    """Writes a metrics report as canonical JSON."""
    _write(path, report)
    logger.info("wrote report %s", path)
