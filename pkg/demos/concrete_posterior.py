# %% [markdown]
# # Prior, likelihood and posterior for concrete strength
#
# The linear model uses a conjugate update with the OLS noise variance
# plugged in. We compare the prior, the MLE and the posterior for a few
# coefficients, then cross-validate every prior set against plain OLS.

# %%
import numpy as np

from llmprior import (CVConfig, fit_mle, load_bundled, load_catalog, make_folds,
                      posterior, run_cv)
from llmprior.dataset import bundled_path

data = load_bundled("concrete")
catalog = load_catalog(bundled_path("concrete_example_catalog.json"))
mle = fit_mle(data)
print(f"sigma-hat = {np.sqrt(mle.noise_variance):.3f} MPa")

# %%
prior = catalog.get(catalog.labels[0])
post = posterior(data, prior)
for name, p, m, q in zip(data.coef_names, (prior.entries[n].dist for n in data.coef_names),
                         mle.marginals, post.marginals):
    print(f"{name:>18s}  prior {p.mean:+8.3f}±{p.sd:<7.3f} "
          f"MLE {m.mean:+8.3f}±{m.sd:<7.3f} post {q.mean:+8.3f}±{q.sd:.3f}")

# %% [markdown]
# With a thousand rows the data dominate, so the posterior hugs the MLE
# unless a prior is very narrow.

# %%
report = run_cv(data, catalog, make_folds(data, 5, seed=0), CVConfig(seed=0))
print(report.to_text())
