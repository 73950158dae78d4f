"""Prompting chat-completion endpoints for prior sets and parsing the answers."""

from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import httpx

from .dataset import INTERCEPT, ModelSpec
from .errors import (ArgumentError, AuthError, ConfigError, EmptyResponseError,
                     ParseError, SchemaError, TransportError)
from .priors import PriorCatalog, PriorEntry, PriorSet, validate_prior_set

log = logging.getLogger(__name__)

DEFAULT_PERSONA = ("You are an expert in applied statistics and in the subject area of "
                   "the model described below.")

_LIKELIHOOD_NAMES = {"logistic": "logistic regression", "linear": "multiple linear regression"}


@dataclass(frozen=True)
class PromptTemplate:
    """Editable prompt text. ``{placeholders}`` are filled by :func:`build_prompt`."""

    task: str = (
        "For the {model_name} model provided below, which predicts {outcome}, your task is "
        "to propose and justify suitable normally distributed prior distributions for all "
        "regression parameters (${first}, \\ldots, {last}$)."
    )
    instruction_blocks: tuple[str, ...] = (
        "1. **Leverage Knowledge & Simulate Tool Use**: Briefly state how you will use your "
        "existing knowledge of {knowledge} and {model_name} modelling (simulating the "
        "consultation of relevant literature or databases for effect sizes and typical "
        "parameter ranges) to inform your suggestions.",
        "2. **Propose Multiple Prior Sets**: Generate at least two distinct sets of prior "
        "distributions (e.g., \"Suggestion A: Moderately Informative Priors based on Domain "
        "Knowledge\" and \"Suggestion B: Weakly Informative / More Conservative Priors\").",
        "3. **Detailed Justification for Each Parameter**: For each parameter (${first}$ "
        "through ${last}$) within each suggested set, provide:\n"
        "    * The specific normal prior distribution: $N(\\text{{mean}}, "
        "\\text{{standard deviation}}^2)$. Clearly state the mean and standard deviation.\n"
        "    * The source of the knowledge behind the choice (studies, reviews or general "
        "domain knowledge) and the effect size it implies on the scale of the coefficient.\n"
        "    * The range of coefficient values you consider plausible and why the chosen "
        "standard deviation covers it.",
        "4. **Comparative Evaluation & Weighting**:\n"
        "    * Critically evaluate and compare the different sets of priors you have "
        "proposed, including their strengths, weaknesses and the risk of conflict with "
        "the data.\n"
        "    * Assign a relative weighting or confidence score to each set (e.g., "
        "Suggestion A: 60%, Suggestion B: 40%).",
    )
    output_contract: str = (
        "**Machine-readable summary:** End your answer with one fenced ```json code block "
        "that restates every proposed set in exactly this schema (standard deviations, not "
        "variances; confidence_weight as a fraction in [0, 1]; informativeness one of "
        "\"moderate\", \"weak\", \"custom\"):\n"
        "```json\n{schema}\n```\n"
        "The keys of \"entries\" must be exactly: {keys}."
    )


def _latex_name(name: str) -> str:
    return "\\text{" + name.replace("_", "\\_") + "}"


def _model_block(spec: ModelSpec, likelihood: str) -> str:
    betas = []
    if spec.intercept:
        betas.append("\\beta_0")
    for j, p in enumerate(spec.predictors, start=1):
        betas.append(f"\\beta_{{{j}}} {_latex_name(p.name)}")
    if likelihood == "logistic":
        resp = "Response: $y \\in \\{0,1\\}$"
        eta = "\\eta"
    else:
        resp = "Response: $y \\sim N(\\mu, \\sigma^2)$, continuous"
        eta = "\\mu"
    if spec.response_description:
        resp += f" ({spec.response_description})"
    lines = ["**Model Details:**", resp,
             f"Linear Predictor: ${eta} = " + " + ".join(betas) + "$",
             "Predictor Details:"]
    for p in spec.predictors:
        detail = p.unit
        if p.description:
            detail = f"{detail} ({p.description})" if detail else p.description
        lines.append(f"    * {p.name}: {detail}")
    return "\n".join(lines)


def _schema_example(spec: ModelSpec) -> str:
    entries = {n: {"mean": 0.0, "sd": 1.0, "justification": "..."} for n in spec.coef_names}
    example = {"model_spec_id": spec.id, "sets": [
        {"label": "<model>/moderate", "source": "<model>", "informativeness": "moderate",
         "confidence_weight": 0.6, "entries": entries}]}
    return json.dumps(example, indent=2)


def build_prompt(spec: ModelSpec, likelihood: str | None = None,
                 extra_context: str | None = None,
                 template: PromptTemplate | None = None) -> str:
    """Render the elicitation prompt. Deterministic in its arguments.

    ``extra_context`` defaults to the ModelSpec's own; pass ``""`` to leave it out.
    """
    if extra_context is None:
        extra_context = spec.extra_context
    if not spec.predictors:
        raise ArgumentError("model spec has no predictors")
    likelihood = likelihood or spec.likelihood
    if likelihood not in _LIKELIHOOD_NAMES:
        raise ArgumentError(f"likelihood must be 'logistic' or 'linear', got {likelihood!r}")
    template = template or PromptTemplate()
    p = len(spec.predictors)
    first = "\\beta_0" if spec.intercept else "\\beta_1"
    fill = {
        "model_name": _LIKELIHOOD_NAMES[likelihood],
        "outcome": spec.outcome or spec.response_name,
        "knowledge": spec.domain_knowledge or "the subject area",
        "first": first,
        "last": f"\\beta_{{{p}}}",
        "schema": _schema_example(spec),
        "keys": ", ".join(spec.coef_names),
    }
    parts = [(spec.persona or DEFAULT_PERSONA) + " " + template.task.format(**fill),
             _model_block(spec, likelihood)]
    if spec.intercept:
        parts.append(f"The parameter named \"{INTERCEPT}\" in the JSON summary is $\\beta_0$; "
                     "$\\beta_j$ belongs to the j-th predictor listed above.")
    parts.append("**Your Response Should:**\n"
                 + "\n".join(b.format(**fill) for b in template.instruction_blocks))
    parts.append(template.output_contract.format(**fill))
    if extra_context:
        parts.append(extra_context)
    return "\n\n".join(parts) + "\n"


# -- endpoint ----------------------------------------------------------------

@dataclass(frozen=True)
class EndpointConfig:
    provider: str
    base_url: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 8192
    api_key_env: str = ""
    timeout: float = 300.0
    max_attempts: int = 3
    backoff: float = 2.0
    system_prompt: str = ""

    def api_key(self) -> str:
        if not self.api_key_env:
            return ""
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set "
                              "(it should hold the API key)")
        return key


def load_endpoint_config(path: str | Path) -> EndpointConfig:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("provider", "base_url", "model"):
        if key not in d:
            raise SchemaError(f"endpoint config is missing {key!r}", field=key)
    if "api_key" in d:
        raise ConfigError("API keys are read from the environment; use api_key_env")
    known = set(EndpointConfig.__dataclass_fields__)
    return EndpointConfig(**{k: v for k, v in d.items() if k in known})


class OpenAIAdapter:
    """OpenAI-style ``/chat/completions`` (also vLLM, Ollama, OpenRouter, ...)."""

    path = "/chat/completions"

    def headers(self, key):
        h = {"Content-Type": "application/json"}
        if key:
            h["Authorization"] = f"Bearer {key}"
        return h

    def body(self, cfg: EndpointConfig, prompt: str):
        msgs = []
        if cfg.system_prompt:
            msgs.append({"role": "system", "content": cfg.system_prompt})
        msgs.append({"role": "user", "content": prompt})
        return {"model": cfg.model, "messages": msgs, "temperature": cfg.temperature,
                "max_tokens": cfg.max_tokens}

    def text(self, payload) -> str:
        choices = payload.get("choices") or []
        if not choices:
            return ""
        return (choices[0].get("message") or {}).get("content") or ""

    def usage(self, payload):
        return payload.get("usage")


class AnthropicAdapter:
    path = "/messages"

    def headers(self, key):
        return {"Content-Type": "application/json", "x-api-key": key,
                "anthropic-version": "2023-06-01"}

    def body(self, cfg: EndpointConfig, prompt: str):
        b = {"model": cfg.model, "max_tokens": cfg.max_tokens, "temperature": cfg.temperature,
             "messages": [{"role": "user", "content": prompt}]}
        if cfg.system_prompt:
            b["system"] = cfg.system_prompt
        return b

    def text(self, payload) -> str:
        return "".join(c.get("text", "") for c in payload.get("content") or []
                       if c.get("type") == "text")

    def usage(self, payload):
        return payload.get("usage")


ADAPTERS = {"openai": OpenAIAdapter, "ollama": OpenAIAdapter, "vllm": OpenAIAdapter,
            "anthropic": AnthropicAdapter}


@dataclass
class Completion:
    text: str
    request: dict
    response: dict
    usage: dict | None
    attempts: int


def _is_transient(status: int) -> bool:
    return status == 429 or status >= 500


def complete(prompt: str, config: EndpointConfig, client: httpx.Client | None = None,
             sleep=time.sleep) -> Completion:
    """Send one chat completion, retrying transient failures with backoff.

    Retries cover connection errors, timeouts, 429 and 5xx; waits are
    ``backoff * 2**attempt`` seconds. 401/403 fail at once.
    """
    try:
        adapter = ADAPTERS[config.provider]()
    except KeyError:
        raise ConfigError(f"unknown provider {config.provider!r}; "
                          f"known: {sorted(ADAPTERS)}") from None
    key = config.api_key()
    url = config.base_url.rstrip("/") + adapter.path
    body = adapter.body(config, prompt)
    own = client is None
    client = client or httpx.Client(timeout=config.timeout)
    last = None
    try:
        for attempt in range(1, config.max_attempts + 1):
            try:
                resp = client.post(url, json=body, headers=adapter.headers(key))
            except httpx.TransportError as exc:
                last = TransportError(f"{config.provider}: {type(exc).__name__}: {exc}",
                                      attempts=attempt)
                log.warning("attempt %d/%d failed: %s", attempt, config.max_attempts, exc)
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"{config.provider}: authentication failed "
                                    f"(HTTP {resp.status_code}): {resp.text[:500]}",
                                    status=resp.status_code, body=resp.text, attempts=attempt)
                if resp.is_success:
                    if not resp.content.strip():
                        raise EmptyResponseError(f"{config.provider}: empty response body",
                                                 status=resp.status_code, attempts=attempt)
                    try:
                        payload = resp.json()
                    except ValueError as exc:
                        raise TransportError(f"{config.provider}: response is not JSON",
                                             status=resp.status_code, body=resp.text,
                                             attempts=attempt) from exc
                    text = adapter.text(payload)
                    if not text.strip():
                        raise EmptyResponseError(f"{config.provider}: response has no text",
                                                 status=resp.status_code, body=resp.text,
                                                 attempts=attempt)
                    return Completion(text, body, payload, adapter.usage(payload), attempt)
                last = TransportError(f"{config.provider}: HTTP {resp.status_code}: "
                                      f"{resp.text[:500]}", status=resp.status_code,
                                      body=resp.text, attempts=attempt)
                if not _is_transient(resp.status_code):
                    raise last
                log.warning("attempt %d/%d: HTTP %d", attempt, config.max_attempts,
                            resp.status_code)
            if attempt < config.max_attempts:
                sleep(config.backoff * 2 ** (attempt - 1))
    finally:
        if own:
            client.close()
    raise TransportError(f"gave up after {config.max_attempts} attempts: {last}",
                         status=last.status, body=last.body, attempts=config.max_attempts)


def call_llm(prompt: str, config: EndpointConfig, client: httpx.Client | None = None,
             sleep=time.sleep) -> str:
    return complete(prompt, config, client, sleep).text


# -- response parsing ----------------------------------------------------------

def normalize_weight(value) -> float:
    """Confidence as a fraction: ``"60%"``, ``60`` and ``0.6`` all give 0.6."""
    if isinstance(value, str):
        s = value.strip()
        pct = s.endswith("%")
        v = float(s.rstrip("%").strip())
        return v / 100 if pct or v > 1 else v
    v = float(value)
    return v / 100 if 1 < v <= 100 else v


def _json_candidates(raw: str):
    """Yield every JSON object embedded in ``raw``, fenced blocks first."""
    dec = json.JSONDecoder()
    for m in re.finditer(r"```(?:json)?\s*\n(.*?)```", raw, re.S):
        try:
            obj = json.loads(m.group(1))
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            yield obj
    for m in re.finditer(r"\{", raw):
        try:
            obj, _ = dec.raw_decode(raw, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            yield obj


def _informativeness(text: str) -> str:
    t = text.lower()
    if "moderat" in t or "strong" in t:
        return "moderate"
    if "weak" in t or "conservative" in t or "vague" in t or "diffuse" in t:
        return "weak"
    return "custom"


def _sets_from_json(obj: dict, spec: ModelSpec, raw: str, source: str) -> list[PriorSet]:
    sets = []
    for i, s in enumerate(obj["sets"]):
        label = str(s.get("label") or f"{source}/set{i + 1}")
        entries = {}
        for name, e in (s.get("entries") or {}).items():
            try:
                entries[name] = PriorEntry(float(e["mean"]), float(e["sd"]),
                                           str(e.get("justification", "")))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"set {label!r}, coefficient {name!r}: unreadable mean/sd",
                                 raw=raw) from exc
        info = s.get("informativeness")
        if info not in ("moderate", "weak", "custom"):
            info = _informativeness(f"{info or ''} {label}")
        try:
            weight = normalize_weight(s.get("confidence_weight", 1.0 / len(obj["sets"])))
        except ValueError:
            raise ParseError(f"set {label!r}: unreadable confidence_weight", raw=raw) from None
        ps = PriorSet(label, str(s.get("source") or source), info, weight, entries)
        findings = validate_prior_set(ps, spec)
        if findings:
            missing = tuple(f.coefficient for f in findings if f.kind == "missing_coefficient")
            raise ParseError("; ".join(f.message for f in findings), raw=raw, missing=missing)
        sets.append(ps)
    return sets


_SUB = str.maketrans("₀₁₂₃₄₅₆₇₈₉", "0123456789")
_NUM = r"[-+−]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_NORMAL = re.compile(
    r"(?:\\mathcal\{N\}|\\mathcal N|\\text\{N\}|N|Normal)\s*\(\s*(" + _NUM + r")\s*,\s*"
    r"(" + _NUM + r")\s*(\^\s*\{?2\}?|²|\*\*\s*2)?\s*\)")
_BETA = re.compile(r"(?:β|\\beta|beta)\s*_?\s*\{?\s*(\d+)\s*\}?", re.I)
_SECTION = re.compile(r"^.*\b(?:suggestion|set|option|prior set)\s+([A-Z0-9])\b.*$",
                      re.I | re.M)


def _num(s: str) -> float:
    return float(s.replace("−", "-"))


def _coef_for_line(line: str, names: list[str], spec: ModelSpec) -> str | None:
    line = line.translate(_SUB)
    before = line[:_NORMAL.search(line).start()]
    m = _BETA.search(before)
    if m:
        j = int(m.group(1))
        idx = j if spec.intercept else j - 1
        if 0 <= idx < len(names):
            return names[idx]
    low = before.lower()
    hits = [n for n in names if re.search(r"(?<![a-z0-9_])" + re.escape(n.lower()) +
                                          r"(?![a-z0-9_])", low)]
    if hits:
        return max(hits, key=len)
    if spec.intercept and "intercept" in low:
        return INTERCEPT
    return None


def _prose_entries(text: str, spec: ModelSpec) -> dict[str, PriorEntry]:
    names = spec.coef_names
    entries = {}
    for line in text.splitlines():
        m = _NORMAL.search(line.translate(_SUB))
        if not m:
            continue
        name = _coef_for_line(line, names, spec)
        if name is None or name in entries:
            continue
        mean, second = _num(m.group(1)), _num(m.group(2))
        # N(m, s^2) states the sd; a bare second argument is a variance
        sd = second if m.group(3) or second <= 0 else math.sqrt(second)
        entries[name] = PriorEntry(mean, sd, line.strip())
    return entries


def _sets_from_prose(raw: str, spec: ModelSpec, source: str) -> list[PriorSet]:
    heads = list(_SECTION.finditer(raw))
    if heads:
        chunks = []
        for i, h in enumerate(heads):
            end = heads[i + 1].start() if i + 1 < len(heads) else len(raw)
            chunks.append((h.group(1).upper(), h.group(0), raw[h.start():end]))
        # a label may be mentioned again later (e.g. in the weighting section)
        merged = {}
        for key, head, body in chunks:
            if key in merged:
                merged[key] = (merged[key][0], merged[key][1] + body)
            else:
                merged[key] = (head, body)
    else:
        merged = {"1": ("", raw)}
    weights = {}
    for key in merged:
        m = re.search(r"(?:suggestion|set|option)\s+" + re.escape(key) +
                      r"\b[^\n%]{0,40}?(\d{1,3}(?:\.\d+)?)\s*%", raw, re.I)
        if m:
            weights[key] = normalize_weight(m.group(1) + "%")
    sets, problems = [], []
    for key, (head, body) in merged.items():
        entries = _prose_entries(body, spec)
        if not entries:
            continue
        label = f"{source}/{key}" if head else f"{source}/prose"
        ps = PriorSet(label, source, _informativeness(head), weights.get(key, 1.0), entries)
        findings = validate_prior_set(ps, spec)
        if findings:
            problems.extend(findings)
        else:
            sets.append(ps)
    if sets and not weights and len(sets) > 1:
        sets = [PriorSet(s.label, s.source, s.informativeness, 1.0 / len(sets), s.entries)
                for s in sets]
    if not sets:
        missing = tuple(f.coefficient for f in problems if f.kind == "missing_coefficient")
        msg = "; ".join(f.message for f in problems) or "no N(mean, sd) statements found"
        raise ParseError(f"could not read a complete prior set: {msg}", raw=raw, missing=missing)
    return sets


def parse_response(raw: str, spec: ModelSpec, source: str = "llm") -> list[PriorSet]:
    """Extract prior sets from an LLM answer.

    The first embedded JSON object with a ``"sets"`` list wins. Without one,
    labelled ``N(mean, sd^2)`` statements are read from the prose, one set
    per "Suggestion A/B/..." section.
    """
    for obj in _json_candidates(raw):
        if isinstance(obj.get("sets"), list):
            return _sets_from_json(obj, spec, raw, source)
    return _sets_from_prose(raw, spec, source)


# -- audit trail -------------------------------------------------------------

@dataclass
class ElicitationRecord:
    prompt_text: str
    raw_response: str
    parsed_sets: list[PriorSet]
    provider: str
    model_name: str
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    token_usage: dict | None = None
    parse_failed: bool = False
    error: str = ""
    request: dict | None = None
    response: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["parsed_sets"] = [s.to_dict() for s in self.parsed_sets]
        return d


_audit_lock = threading.Lock()


def append_audit(path: str | Path, record: ElicitationRecord) -> None:
    """Append one JSON line; a single write per record keeps lines whole."""
    line = json.dumps(record.to_dict(), ensure_ascii=False) + "\n"
    with _audit_lock, open(path, "a", encoding="utf-8") as f:
        f.write(line)


def elicit(spec: ModelSpec, config: EndpointConfig, extra_context: str | None = None,
           audit_path: str | Path | None = None, client: httpx.Client | None = None,
           sleep=time.sleep) -> ElicitationRecord:
    """Prompt, call, parse and log. Transport errors are logged then re-raised;
    parse failures come back as a record with ``parse_failed`` set."""
    prompt = build_prompt(spec, spec.likelihood, extra_context)
    try:
        comp = complete(prompt, config, client, sleep)
    except TransportError as exc:
        rec = ElicitationRecord(prompt, exc.body or "", [], config.provider, config.model,
                                parse_failed=True, error=str(exc))
        if audit_path:
            append_audit(audit_path, rec)
        raise
    rec = ElicitationRecord(prompt, comp.text, [], config.provider, config.model,
                            token_usage=comp.usage, request=comp.request, response=comp.response)
    try:
        rec.parsed_sets = parse_response(comp.text, spec, source=config.model)
    except ParseError as exc:
        rec.parse_failed = True
        rec.error = str(exc)
    if audit_path:
        append_audit(audit_path, rec)
    return rec


def record_catalog(record: ElicitationRecord, spec: ModelSpec) -> PriorCatalog:
    return PriorCatalog(spec.id, tuple(record.parsed_sets))
