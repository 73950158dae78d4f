"""Eliciting Gaussian coefficient priors from LLMs and scoring them against data."""

from .bayes import (PosteriorFit, posterior, posterior_linear_conjugate,
                    posterior_logistic_laplace, predictive_binary, predictive_gaussian)
from .cv import CVConfig, CVReport, nb_ttest, run_cv
from .dataset import (BoundDataset, FoldPlan, ModelSpec, Predictor, bind, bundled_path,
                      load_bundled, load_csv, load_spec, make_folds)
from .elicit import (EndpointConfig, PromptTemplate, build_prompt, call_llm,
                     load_endpoint_config, parse_response)
from .evaluation import KLReport, kl_gaussian, kl_table, prior_predictive_sample
from .glm import (BootstrapResult, GaussianDist, MLEFit, bootstrap_mle, fit_linear_mle,
                  fit_logistic_mle, fit_mle)
from .priors import (PriorCatalog, PriorEntry, PriorSet, load_catalog, save_catalog,
                     validate_prior_set)

__version__ = "0.1.0"
