"""Entity extraction from article text, plus the evaluation harness.

Two extractor kinds sit behind one interface: a deterministic gazetteer
(dictionary matching, longest match wins) and an external process speaking
newline-delimited JSON over stdin/stdout. Span offsets count Unicode
scalar values of the original text in both cases, and every span crossing
the boundary is validated against the EntitySpan invariants.

The same process protocol also serves research-field classification, with
a keyword-overlap baseline built in.
"""
from __future__ import annotations

import json
import queue
import re
import subprocess
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .model import ENTITY_LABELS, EntityLabel, EntitySpan

DEFAULT_GAZETTEER_PATH = Path(__file__).parent / "data" / "gazetteer.json"
DEFAULT_TAXONOMY_PATH = Path(__file__).parent / "data" / "research_fields.json"
DEFAULT_KEYWORDS_PATH = Path(__file__).parent / "data" / "field_keywords.json"


class ExtractorTimeout(RuntimeError):
    pass


class ProtocolViolation(ValueError):
    """A plug-in response that does not satisfy the protocol contract."""

    def __init__(self, message: str, line: str = ""):
        super().__init__(f"{message}: {line!r}" if line else message)
        self.offending_line = line


class PluginRequestError(RuntimeError):
    """The plug-in answered with an error response for this request."""


class InvalidBioSequence(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class EmptyTaxonomy(ValueError):
    pass


class ExtractorKind(Enum):
    GAZETTEER = "gazetteer"
    EXTERNAL_PROCESS = "external_process"


@dataclass(frozen=True)
class ExtractorConfig:
    kind: ExtractorKind
    gazetteer_path: Optional[Path] = None
    command: tuple[str, ...] = ()
    timeout_ms: int = 30000

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.kind is ExtractorKind.GAZETTEER:
            if self.command:
                raise ValueError("gazetteer extractor takes no command")
        else:
            if not self.command:
                raise ValueError("external extractor needs a command")
            if self.gazetteer_path:
                raise ValueError("external extractor takes no gazetteer_path")


def load_gazetteer(path: Optional[Path] = None) -> dict[str, list[str]]:
    raw = json.loads(Path(path or DEFAULT_GAZETTEER_PATH).read_text("utf-8"))
    unknown = set(raw) - set(ENTITY_LABELS)
    if unknown:
        raise ValueError(f"gazetteer labels outside the entity label set: {sorted(unknown)}")
    return {label: list(terms) for label, terms in raw.items()}


def _term_pattern(term: str) -> re.Pattern:
    # Word-boundary matching that also works for terms starting/ending in
    # non-word characters.
    return re.compile(rf"(?<!\w){re.escape(term)}(?!\w)", re.IGNORECASE)


def gazetteer_extract(text: str, gazetteer: dict[str, Iterable[str]]) -> list[EntitySpan]:
    """Dictionary extraction: case-insensitive, word-bounded matches,
    longest match wins left to right, never overlapping. Confidence is
    fixed at 1.0."""
    if not text:
        return []
    candidates: list[tuple[int, int, str]] = []
    for label, terms in gazetteer.items():
        for term in terms:
            if not term:
                continue
            for match in _term_pattern(term).finditer(text):
                candidates.append((match.start(), match.end(), label))
    candidates.sort(key=lambda c: (c[0], c[0] - c[1], c[2]))
    spans: list[EntitySpan] = []
    cursor = 0
    for start, end, label in candidates:
        if start < cursor:
            continue
        spans.append(
            EntitySpan(
                start=start,
                end=end,
                label=EntityLabel(label),
                surface=text[start:end],
                confidence=1.0,
            )
        )
        cursor = end
    return spans


def _resolve_overlaps(spans: list[EntitySpan]) -> list[EntitySpan]:
    """Keep highest-confidence spans, leftmost on ties, drop overlaps."""
    chosen: list[EntitySpan] = []
    for span in sorted(spans, key=lambda s: (-s.confidence, s.start, s.end)):
        if all(span.end <= kept.start or span.start >= kept.end for kept in chosen):
            chosen.append(span)
    chosen.sort(key=lambda s: s.start)
    return chosen


class ExternalProcessClient:
    """One plug-in subprocess speaking the line-delimited JSON protocol.

    One request is in flight at a time per client; ids still travel with
    every request and responses are matched on them, never on arrival
    order.
    """

    def __init__(self, command: Sequence[str], timeout_ms: int = 30000):
        self.command = list(command)
        self.timeout_s = timeout_ms / 1000.0
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._next_id = 1
        self._lock = threading.Lock()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, kind: str, payload: dict) -> dict:
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            message = {"id": request_id, "kind": kind, **payload}
            assert self._proc.stdin is not None
            try:
                self._proc.stdin.write(json.dumps(message) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProtocolViolation(f"plug-in pipe closed: {exc}") from exc
            while True:
                try:
                    line = self._lines.get(timeout=self.timeout_s)
                except queue.Empty:
                    raise ExtractorTimeout(
                        f"no response within {self.timeout_s:.1f}s from {self.command[0]}"
                    ) from None
                if line is None:
                    raise ProtocolViolation("plug-in closed stdout before responding")
                line = line.strip()
                if not line:
                    continue
                try:
                    response = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ProtocolViolation(f"response is not JSON ({exc})", line) from None
                if not isinstance(response, dict):
                    raise ProtocolViolation("response is not a JSON object", line)
                if response.get("id") != request_id:
                    raise ProtocolViolation(
                        f"response id {response.get('id')!r} does not match request {request_id}",
                        line,
                    )
                if "error" in response:
                    raise PluginRequestError(str(response["error"]))
                return response

    def close(self) -> None:
        if self._proc.stdin:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self) -> "ExternalProcessClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _spans_from_response(text: str, response: dict) -> list[EntitySpan]:
    entities = response.get("entities")
    if not isinstance(entities, list):
        raise ProtocolViolation("response missing 'entities' list", json.dumps(response))
    spans = []
    for entity in entities:
        line = json.dumps(entity)
        if not isinstance(entity, dict):
            raise ProtocolViolation("entity is not an object", line)
        try:
            start = int(entity["start"])
            end = int(entity["end"])
            label = str(entity["label"])
            score = float(entity.get("score", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"entity fields malformed ({exc})", line) from None
        if label not in ENTITY_LABELS:
            raise ProtocolViolation(f"unknown label {label!r}", line)
        if not (0 <= start < end <= len(text)):
            raise ProtocolViolation(
                f"span [{start},{end}) outside text of length {len(text)}", line
            )
        if not (0.0 <= score <= 1.0):
            raise ProtocolViolation(f"score {score} outside [0,1]", line)
        spans.append(
            EntitySpan(
                start=start,
                end=end,
                label=EntityLabel(label),
                surface=text[start:end],
                confidence=score,
            )
        )
    return _resolve_overlaps(spans)


def extract_entities(
    text: str,
    config: ExtractorConfig,
    client: Optional[ExternalProcessClient] = None,
) -> list[EntitySpan]:
    """Dispatch to the configured extractor; output always satisfies the
    EntitySpan invariants regardless of plug-in behavior."""
    if config.kind is ExtractorKind.GAZETTEER:
        return gazetteer_extract(text, load_gazetteer(config.gazetteer_path))
    if client is not None:
        response = client.request("extract", {"text": text})
        return _spans_from_response(text, response)
    with ExternalProcessClient(config.command, config.timeout_ms) as own:
        response = own.request("extract", {"text": text})
        return _spans_from_response(text, response)


# --- tokenization and BIO conversion ----------------------------------------

Token = tuple[str, int, int]  # (string, start, end)

_TOKEN_SPLIT_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[Token]:
    """Whitespace+punctuation tokenization with character offsets."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_SPLIT_RE.finditer(text)]


_TAG_RE = re.compile(r"^(O|[BI]-(%s))$" % "|".join(ENTITY_LABELS))


def spans_to_bio(tokens: Sequence[Token], spans: Sequence[EntitySpan]) -> list[str]:
    """Tag each token by the span containing its start offset.

    Tokens whose start lies inside a span get B- (first such token) or I-
    tags; everything else is O. Spans and tokens must be non-overlapping
    and tokens ordered.
    """
    ordered = sorted(spans, key=lambda s: s.start)
    tags = []
    previous_span = None
    for _, start, _ in tokens:
        current = None
        for span in ordered:
            if span.start <= start < span.end:
                current = span
                break
        if current is None:
            tags.append("O")
        elif current is previous_span:
            tags.append(f"I-{current.label.value}")
        else:
            tags.append(f"B-{current.label.value}")
        previous_span = current
    return tags


def bio_to_spans(
    tokens: Sequence[Token], tags: Sequence[str], text: Optional[str] = None
) -> list[EntitySpan]:
    """Inverse of spans_to_bio on boundary-aligned spans.

    Without the original text, surfaces are rebuilt from token strings with
    single-space gap filling, which matches the text slice whenever the
    inter-token gaps are spaces.
    """
    if len(tokens) != len(tags):
        raise ShapeMismatch(f"{len(tokens)} tokens vs {len(tags)} tags")
    for index, tag in enumerate(tags):
        if not _TAG_RE.match(tag):
            raise InvalidBioSequence(f"tag {index}: unknown tag {tag!r}")
        if tag.startswith("I-"):
            if index == 0 or tags[index - 1] == "O" or tags[index - 1][2:] != tag[2:]:
                raise InvalidBioSequence(f"tag {index}: {tag} does not continue a span")
    spans = []
    open_start: Optional[int] = None
    open_end = 0
    open_label = ""

    def close():
        nonlocal open_start
        if open_start is None:
            return
        if text is not None:
            surface = text[open_start:open_end]
        else:
            parts = []
            cursor = None
            for token, start, end in tokens:
                if start >= open_start and end <= open_end:
                    if cursor is not None and start > cursor:
                        parts.append(" " * (start - cursor))
                    parts.append(token)
                    cursor = end
            surface = "".join(parts)
        spans.append(
            EntitySpan(
                start=open_start,
                end=open_end,
                label=EntityLabel(open_label),
                surface=surface,
            )
        )
        open_start = None

    for (token, start, end), tag in zip(tokens, tags):
        if tag == "O":
            close()
        elif tag.startswith("B-"):
            close()
            open_start, open_end, open_label = start, end, tag[2:]
        else:
            open_end = end
    close()
    return spans


# --- gold corpus and evaluation ---------------------------------------------

@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.tags):
            raise ShapeMismatch(f"{len(self.tokens)} tokens vs {len(self.tags)} tags")


@dataclass(frozen=True)
class GoldCorpus:
    sentences: tuple[Sentence, ...]

    def __post_init__(self) -> None:
        for index, sentence in enumerate(self.sentences):
            for position, tag in enumerate(sentence.tags):
                if not _TAG_RE.match(tag):
                    raise InvalidBioSequence(
                        f"sentence {index} tag {position}: unknown tag {tag!r}"
                    )
                if tag.startswith("I-"):
                    prev = sentence.tags[position - 1] if position else "O"
                    if prev == "O" or prev[2:] != tag[2:]:
                        raise InvalidBioSequence(
                            f"sentence {index} tag {position}: {tag} does not continue a span"
                        )


def load_conll(data: str) -> GoldCorpus:
    """Two-column token<TAB>tag lines, blank line between sentences."""
    sentences = []
    tokens: list[str] = []
    tags: list[str] = []
    for raw in data.split("\n"):
        line = raw.rstrip("\r")
        if not line.strip():
            if tokens:
                sentences.append(Sentence(tuple(tokens), tuple(tags)))
                tokens, tags = [], []
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ShapeMismatch(f"expected 'token<TAB>tag', got {line!r}")
        tokens.append(parts[0])
        tags.append(parts[1])
    if tokens:
        sentences.append(Sentence(tuple(tokens), tuple(tags)))
    return GoldCorpus(tuple(sentences))


def dump_conll(corpus: GoldCorpus) -> str:
    blocks = [
        "\n".join(f"{token}\t{tag}" for token, tag in zip(s.tokens, s.tags))
        for s in corpus.sentences
    ]
    return "\n\n".join(blocks) + "\n"


def tag_chunks(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """Token-index chunks (start, end exclusive, label) from a tag sequence.

    Tolerant chunking for model output: an I- tag that does not continue a
    chunk starts a new one (conlleval convention).
    """
    chunks = []
    start = None
    label = ""
    for index, tag in enumerate(tags):
        if tag.startswith("B-"):
            if start is not None:
                chunks.append((start, index, label))
            start, label = index, tag[2:]
        elif tag.startswith("I-"):
            if start is None or tag[2:] != label:
                if start is not None:
                    chunks.append((start, index, label))
                start, label = index, tag[2:]
        else:
            if start is not None:
                chunks.append((start, index, label))
                start = None
    if start is not None:
        chunks.append((start, len(tags), label))
    return chunks


@dataclass(frozen=True)
class LabelMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    per_label: dict[str, LabelMetrics]
    micro_f1: float
    micro_precision: float = 0.0
    micro_recall: float = 0.0

    def to_dict(self) -> dict:
        return {
            "per_label": {
                label: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for label, m in self.per_label.items()
            },
            "micro_f1": self.micro_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
        }

    def render_table(self, model: str = "") -> str:
        """Rows of "F1 | Precision | Recall" per class, reference style."""
        header_model = f"Model: {model}\n" if model else ""
        lines = [f"{header_model}Class | F1 | Precision | Recall"]
        for label in ENTITY_LABELS:
            metrics = self.per_label.get(label)
            if metrics is None:
                continue
            lines.append(
                f"{label} | {metrics.f1:.2f} | {metrics.precision:.2f} | {metrics.recall:.2f}"
            )
        lines.append(f"micro-F1 | {self.micro_f1:.2f}")
        return "\n".join(lines) + "\n"


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def evaluate(gold: GoldCorpus, predicted: Sequence[Sequence[str]]) -> EvalReport:
    """Exact span-level match (label and token boundaries) per label."""
    if len(predicted) != len(gold.sentences):
        raise ShapeMismatch(
            f"{len(predicted)} predicted sentences vs {len(gold.sentences)} gold"
        )
    counts = {label: [0, 0, 0] for label in ENTITY_LABELS}  # tp, fp, fn
    for sentence, pred_tags in zip(gold.sentences, predicted):
        if len(pred_tags) != len(sentence.tags):
            raise ShapeMismatch(
                f"{len(pred_tags)} predicted tags vs {len(sentence.tags)} gold tokens"
            )
        gold_chunks = set(tag_chunks(sentence.tags))
        pred_chunks = set(tag_chunks(list(pred_tags)))
        for chunk in pred_chunks:
            counts[chunk[2]][0 if chunk in gold_chunks else 1] += 1
        for chunk in gold_chunks - pred_chunks:
            counts[chunk[2]][2] += 1
    per_label = {}
    support = {
        label: sum(
            1
            for sentence in gold.sentences
            for chunk in tag_chunks(sentence.tags)
            if chunk[2] == label
        )
        for label in ENTITY_LABELS
    }
    for label, (tp, fp, fn) in counts.items():
        precision, recall, f1 = _prf(tp, fp, fn)
        per_label[label] = LabelMetrics(precision, recall, f1, support[label])
    total_tp = sum(c[0] for c in counts.values())
    total_fp = sum(c[1] for c in counts.values())
    total_fn = sum(c[2] for c in counts.values())
    micro_p, micro_r, micro_f1 = _prf(total_tp, total_fp, total_fn)
    return EvalReport(
        per_label=per_label,
        micro_f1=micro_f1,
        micro_precision=micro_p,
        micro_recall=micro_r,
    )


# --- research-field classification ------------------------------------------

class ClassifierKind(Enum):
    KEYWORD = "keyword"
    EXTERNAL_PROCESS = "external_process"


@dataclass(frozen=True)
class ClassifierConfig:
    kind: ClassifierKind
    keywords_path: Optional[Path] = None
    command: tuple[str, ...] = ()
    timeout_ms: int = 30000


def load_taxonomy(path: Optional[Path] = None) -> list[str]:
    return list(json.loads(Path(path or DEFAULT_TAXONOMY_PATH).read_text("utf-8")))


def load_field_keywords(path: Optional[Path] = None) -> dict[str, dict[str, float]]:
    raw = json.loads(Path(path or DEFAULT_KEYWORDS_PATH).read_text("utf-8"))
    table: dict[str, dict[str, float]] = {}
    for fld, keywords in raw.items():
        if isinstance(keywords, list):
            table[fld] = {keyword: 1.0 for keyword in keywords}
        else:
            table[fld] = {keyword: float(weight) for keyword, weight in keywords.items()}
    return table


def keyword_score(text: str, keywords: dict[str, float]) -> float:
    """Weighted count of word-bounded keyword occurrences."""
    score = 0.0
    for keyword, weight in keywords.items():
        score += weight * len(_term_pattern(keyword).findall(text))
    return score


def classify_research_field(
    title: str,
    abstract: str,
    fields: Sequence[str],
    classifier: Optional[ClassifierConfig] = None,
    client: Optional[ExternalProcessClient] = None,
) -> tuple[str, float]:
    """Pick the best-scoring research field for an article.

    The keyword baseline scores each field by weighted keyword overlap with
    the title+abstract; ties (including all-zero) break to the
    lexicographically smallest field label. The argmax is invariant under
    positive scaling of all weights.
    """
    if not fields:
        raise EmptyTaxonomy("no research fields to classify into")
    classifier = classifier or ClassifierConfig(kind=ClassifierKind.KEYWORD)
    if classifier.kind is ClassifierKind.EXTERNAL_PROCESS:
        payload = {"title": title, "abstract": abstract, "labels": list(fields)}
        if client is not None:
            response = client.request("classify", payload)
        else:
            with ExternalProcessClient(classifier.command, classifier.timeout_ms) as own:
                response = own.request("classify", payload)
        label = response.get("label")
        if label not in fields:
            raise ProtocolViolation(
                f"classifier label {label!r} not in the provided taxonomy",
                json.dumps(response),
            )
        return label, float(response.get("score", 0.0))
    keyword_table = load_field_keywords(classifier.keywords_path)
    text = f"{title} {abstract}".lower()
    best_field = min(fields)
    best_score = keyword_score(text, keyword_table.get(best_field, {}))
    for fld in fields:
        score = keyword_score(text, keyword_table.get(fld, {}))
        if score > best_score or (score == best_score and fld < best_field):
            best_field, best_score = fld, score
    return best_field, best_score
