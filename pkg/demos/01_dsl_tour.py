"""A short walk through the feature DSL: parse, format, evaluate, and what
happens to rows where a transformation is undefined."""

import numpy as np

from agentfe.dataset import from_arrays
from agentfe.dsl import DslSyntaxError, Transformation, evaluate, format_expr, free_columns, parse

ds = from_arrays(
    {"age": [34.0, 61.0, 47.0, np.nan], "weight": [70.0, 82.5, 0.0, 66.0],
     "smoker": ["no", "yes", "no", "yes"]},
    [0, 1, 1, 0], "classification", name="toy")

# parsing is total over the grammar; formatting gives back a canonical form
e = parse("age*weight / (1 + age)")
print(format_expr(e), sorted(free_columns(e)))

# division by zero and missing inputs become missing cells, never errors
print(evaluate(parse("age / weight"), ds))

# category flags and conditionals
print(evaluate(parse('smoker == "yes"'), ds))
print(evaluate(parse("if(age > 50, 1, 0)"), ds))

# a transformation is an expression plus the reasons for keeping it
t = Transformation.from_source("bmi_proxy", "weight / square(age / 10)",
                               "weight relative to age", "weight over squared decades of age")
print(t.name, "=", t.source_text)

try:
    parse("age * (weight")
except DslSyntaxError as exc:
    print("rejected at position", exc.position, ":", exc)
