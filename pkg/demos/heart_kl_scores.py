# %% [markdown]
# # Scoring prior sets for the heart disease model
#
# Fit a logistic regression to the bundled Cleveland data, then measure how
# far each prior set in a catalog sits from the MLE distribution of every
# coefficient. Lower KL is better.

# %%
from llmprior import bootstrap_mle, fit_mle, kl_table, load_bundled, load_catalog
from llmprior.dataset import bundled_path

data = load_bundled("heart")
print(f"{data.n} complete rows ({data.dropped} dropped), prevalence {data.response.mean():.3f}")

# %%
fit = fit_mle(data)
for name, m in zip(fit.names, fit.marginals):
    print(f"{name:>10s}  {m.mean:+.4f}  (sd {m.sd:.4f})")

# %% [markdown]
# The example catalog holds hand-entered sets, so swap in the output of
# `llmprior elicit` to score real suggestions.

# %%
catalog = load_catalog(bundled_path("heart_example_catalog.json"))
report = kl_table(fit, catalog, data.spec)
print(report.to_text())

# %% [markdown]
# Replace the Fisher approximation with a case bootstrap and check the
# ranking holds.

# %%
boot = bootstrap_mle(data, reps=200, seed=0)
print(f"{boot.failed} failed replicates")
print(kl_table(boot, catalog, data.spec).to_text())
