# %% [markdown]
# # What does a prior imply about the data?
#
# Draw coefficients from a prior set, simulate outcomes on the observed
# design, and compare with what was actually observed.

# %%
from llmprior import load_bundled, load_catalog, prior_predictive_sample
from llmprior.dataset import bundled_path

data = load_bundled("heart")
catalog = load_catalog(bundled_path("heart_example_catalog.json"))

# %%
for label in catalog.labels:
    pp = prior_predictive_sample(data.spec, catalog.get(label), data.design_matrix,
                                 reps=2000, seed=0)
    tail = pp.tail_probabilities(data.response)
    print(f"{label:>24s}  simulated prevalence {pp.summary['mean']:.3f} "
          f"(observed {data.response.mean():.3f}, P[sim <= obs] = {tail['mean']:.2f})")

# %% [markdown]
# A prior whose simulated prevalence piles up near 0 or 1 encodes effects
# far larger than anything the data can support.
