# %% [markdown]
# # Elicitation without a network
#
# `elicit` accepts any `httpx.Client`, so a mock transport stands in for a
# real endpoint. The stub answers in prose, the way chat models often do
# when they ignore the JSON request.

# %%
import httpx

from llmprior import EndpointConfig, build_prompt
from llmprior.elicit import elicit
from llmprior.dataset import bundled_path, load_spec

spec = load_spec(bundled_path("heart_spec.json"))
print(build_prompt(spec)[:1200], "...")

# %%
answer = """
### Suggestion A: Moderately informative
* β0 (intercept): N(-3, 2^2)
""" + "".join(f"* β{j} ({n}): N(0.1, 0.5^2)\n" for j, n in enumerate(spec.predictor_names, 1)) + """
### Suggestion B: Weakly informative
* intercept: N(0, 5^2)
""" + "".join(f"* {n}: N(0, 2^2)\n" for n in spec.predictor_names) + """
Weighting: Suggestion A: 65%, Suggestion B: 35%
"""


def handler(request):
    return httpx.Response(200, json={"choices": [{"message": {"content": answer}}]})


# %%
record = elicit(spec, EndpointConfig("openai", "http://stub/v1", "stub-model"),
                client=httpx.Client(transport=httpx.MockTransport(handler)))
for s in record.parsed_sets:
    print(s.label, s.informativeness, s.confidence_weight, s.entries["age"])
