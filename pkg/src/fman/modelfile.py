"""Reading and writing TOML model files.

Layout (indices are 1-based)::

    [model]
    name = "twocomponent"
    coords = ["r1", "r2"]
    point = [0.0, 0.0]        # optional base point
    flow = "X"                # optional, name of the flow field

    [product]
    c.1.1.1 = "1"             # c^1_{11}; entries given for one ordering of
    c.2.2.2 = "1"             # (i, j) are mirrored to the other

    [unit]
    e = ["1", "1"]

    [field.X]
    components = ["1 - exp(-r2)", "1"]

    [metric]
    g.1.1 = "exp(2*r2)"

    [density.h1]
    expr = "r2"

    [data.w_e]
    kind = "e"                # or "tsarev"
    var = "t"
    exprs = ["t + t*exp(-t)", "1 + t"]   # or: series = [[...], [...]]
"""

from __future__ import annotations

from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .algebra import FModel, ModelData, ModelDimensionError, ModelError
from .expr import ExprError, ExprSyntaxError, parse_expression, to_string


class ModelParseError(ModelError):
    def __init__(self, message, location=None):
        where = f"{location}: " if location else ""
        super().__init__(where + message)
        self.location = location


class DuplicateKeyError(ModelError):
    pass


def _flatten(table, prefix, out, location):
    """Collect ``prefix.a.b.c = value`` entries from dotted or quoted keys."""
    for key, value in table.items():
        full = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, dict):
            _flatten(value, full, out, location)
        else:
            if full in out:
                raise DuplicateKeyError(f"{location}: duplicate key {full!r}")
            out[full] = value


def _parse(text, location):
    if not isinstance(text, str):
        raise ModelParseError(f"expected an expression string, got {text!r}", location)
    try:
        return parse_expression(text)
    except ExprSyntaxError as exc:
        raise ModelParseError(str(exc), location) from exc


def _indices(parts, n, key, location):
    try:
        idx = [int(p) for p in parts]
    except ValueError:
        raise ModelParseError(f"bad index in key {key!r}", location) from None
    for i in idx:
        if not 1 <= i <= n:
            raise ModelDimensionError(f"{location}: index {i} in {key!r} outside 1..{n}")
    return [i - 1 for i in idx]


def loads_model(text: str, source: str = "<string>") -> FModel:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        if "duplicate" in msg.lower() or "overwrite" in msg.lower() or "already" in msg.lower():
            raise DuplicateKeyError(f"{source}: {msg}") from exc
        raise ModelParseError(msg, source) from exc

    head = doc.get("model")
    if not isinstance(head, dict) or "coords" not in head:
        raise ModelParseError("missing [model] table with coords", source)
    coords = [str(c) for c in head["coords"]]
    n = len(coords)
    if "dim" in head and int(head["dim"]) != n:
        raise ModelDimensionError(f"{source}: dim = {head['dim']} but {n} coordinates declared")
    name = str(head.get("name", Path(source).stem))

    entries = {}
    _flatten(doc.get("product", {}), "", entries, f"{source} [product]")
    c = {}
    explicit = set()
    for key, value in entries.items():
        parts = key.split(".")
        if parts[0] != "c" or len(parts) != 4:
            raise ModelParseError(f"unexpected product key {key!r}", f"{source} [product]")
        k, i, j = _indices(parts[1:], n, key, f"{source} [product]")
        c[(k, i, j)] = _parse(value, f"{source} [product] {key}")
        explicit.add((k, i, j))
    for (k, i, j) in list(explicit):
        if (k, j, i) not in explicit:
            c[(k, j, i)] = c[(k, i, j)]

    unit = doc.get("unit", {})
    if "e" not in unit:
        raise ModelParseError("missing unit field e", f"{source} [unit]")
    e = [_parse(x, f"{source} [unit] e[{k + 1}]") for k, x in enumerate(unit["e"])]
    if len(e) != n:
        raise ModelDimensionError(f"{source}: unit field has {len(e)} components, expected {n}")

    fields = {}
    for fname, spec in doc.get("field", {}).items():
        comps = spec.get("components") if isinstance(spec, dict) else spec
        if comps is None:
            raise ModelParseError("field needs components", f"{source} [field.{fname}]")
        if len(comps) != n:
            raise ModelDimensionError(f"{source}: field {fname!r} has {len(comps)} components, expected {n}")
        fields[fname] = [_parse(x, f"{source} [field.{fname}] components[{k + 1}]") for k, x in enumerate(comps)]

    metric = None
    if "metric" in doc:
        flat = {}
        _flatten(doc["metric"], "", flat, f"{source} [metric]")
        g = [[None] * n for _ in range(n)]
        for key, value in flat.items():
            parts = key.split(".")
            if parts[0] != "g" or len(parts) != 3:
                raise ModelParseError(f"unexpected metric key {key!r}", f"{source} [metric]")
            i, j = _indices(parts[1:], n, key, f"{source} [metric]")
            g[i][j] = _parse(value, f"{source} [metric] {key}")
        for i in range(n):
            for j in range(n):
                if g[i][j] is None:
                    g[i][j] = g[j][i] if g[j][i] is not None else parse_expression("0")
        metric = g

    densities = {}
    for dname, spec in doc.get("density", {}).items():
        value = spec.get("expr") if isinstance(spec, dict) else spec
        densities[dname] = _parse(value, f"{source} [density.{dname}]")

    data = {}
    for dname, spec in doc.get("data", {}).items():
        loc = f"{source} [data.{dname}]"
        kind = spec.get("kind", "e")
        if kind not in ("e", "tsarev"):
            raise ModelParseError(f"unknown data kind {kind!r}", loc)
        if "series" in spec:
            series = spec["series"]
            if len(series) != n:
                raise ModelDimensionError(f"{loc}: {len(series)} series, expected {n}")
            data[dname] = ModelData(kind, series=tuple(tuple(float(v) for v in s) for s in series))
        elif "exprs" in spec:
            var = str(spec.get("var", "t"))
            exprs = tuple(_parse(x, f"{loc} exprs[{k + 1}]") for k, x in enumerate(spec["exprs"]))
            if len(exprs) != n:
                raise ModelDimensionError(f"{loc}: {len(exprs)} expressions, expected {n}")
            data[dname] = ModelData(kind, exprs=exprs, var=var)
        else:
            raise ModelParseError("data needs series or exprs", loc)

    try:
        return FModel(
            name,
            coords,
            c,
            e,
            fields=fields,
            flow=head.get("flow"),
            metric=metric,
            densities=densities,
            data=data,
            point=head.get("point"),
        )
    except ExprError as exc:
        raise ModelParseError(str(exc), source) from exc


def load_model(path) -> FModel:
    path = Path(path)
    return loads_model(path.read_text(encoding="utf-8"), str(path))


def _q(s):
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps_model(model: FModel) -> str:
    """TOML text that loads back to an equivalent model."""
    lines = ["[model]", f"name = {_q(model.name)}"]
    lines.append("coords = [" + ", ".join(_q(c) for c in model.coords) + "]")
    lines.append("point = [" + ", ".join(repr(p) for p in model.point) + "]")
    if model.flow:
        lines.append(f"flow = {_q(model.flow)}")
    lines += ["", "[product]"]
    for (k, i, j), ex in sorted(model.c.items()):
        lines.append(f"c.{k + 1}.{i + 1}.{j + 1} = {_q(to_string(ex))}")
    lines += ["", "[unit]", "e = [" + ", ".join(_q(to_string(x)) for x in model.e) + "]"]
    for fname, comps in model.fields.items():
        lines += ["", f"[field.{fname}]", "components = [" + ", ".join(_q(to_string(x)) for x in comps) + "]"]
    if model.metric is not None:
        lines += ["", "[metric]"]
        for i, row in enumerate(model.metric):
            for j, ex in enumerate(row):
                lines.append(f"g.{i + 1}.{j + 1} = {_q(to_string(ex))}")
    for dname, ex in model.densities.items():
        lines += ["", f"[density.{dname}]", f"expr = {_q(to_string(ex))}"]
    for dname, d in model.data.items():
        lines += ["", f"[data.{dname}]", f"kind = {_q(d.kind)}"]
        if d.series is not None:
            lines.append("series = [" + ", ".join("[" + ", ".join(repr(v) for v in s) + "]" for s in d.series) + "]")
        else:
            lines.append(f"var = {_q(d.var)}")
            lines.append("exprs = [" + ", ".join(_q(to_string(x)) for x in d.exprs) + "]")
    return "\n".join(lines) + "\n"
