"""Interaction ingestion, sequence construction and leave-one-out splits.

A dataset directory written by :meth:`CrossDomainDataset.save` holds
line-oriented text files, one user per line, fields separated by TAB and
list elements by commas:

    source.txt        user_id  items  timestamps
    target.txt        user_id  items  timestamps
    mixed.txt         user_id  items  domains (S/T per item)  timestamps
    split.txt         user_id  train_items  validation_item  test_item
    vocab_source.txt  item_id  index
    vocab_target.txt  item_id  index

Vocabulary indices start at 1; index 0 is reserved for padding.
"""

from __future__ import annotations

import hashlib
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import pandas as pd

from horizonrec.config import DEFAULT_MAX_LEN, DEFAULT_MIN_INTERACTIONS
from horizonrec.exceptions import DataFormatError, VocabularyError

logger = logging.getLogger(__name__)

_COLUMNS = ("user_id", "item_id", "timestamp")

DATASET_FILES = (
    "source.txt",
    "target.txt",
    "mixed.txt",
    "split.txt",
    "vocab_source.txt",
    "vocab_target.txt",
)


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"

    @property
    def tag(self) -> str:
        return "S" if self is Domain.SOURCE else "T"

    @classmethod
    def from_tag(cls, tag: str) -> "Domain":
        if tag == "S":
            return cls.SOURCE
        if tag == "T":
            return cls.TARGET
        raise ValueError(f"unknown domain tag {tag!r}")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    timestamp: int
    domain: Domain

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")
        if not isinstance(self.domain, Domain):
            raise ValueError(f"domain must be a Domain, got {self.domain!r}")


@dataclass(frozen=True)
class DomainSequence:
    """Chronologically ordered behaviour of one user in one domain."""

    user_id: str
    domain: Domain
    items: Tuple[str, ...]
    timestamps: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.items) != len(self.timestamps):
            raise ValueError("items and timestamps must have the same length")
        if any(b < a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError(f"timestamps of user {self.user_id} are not non-decreasing")

    def __len__(self) -> int:
        return len(self.items)

    def prefix(self, length: int) -> "DomainSequence":
        return DomainSequence(self.user_id, self.domain, self.items[:length], self.timestamps[:length])


@dataclass(frozen=True)
class MixedSequence:
    """Source and target behaviour of one user merged by timestamp."""

    user_id: str
    items: Tuple[Tuple[str, Domain], ...]
    timestamps: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.items)

    def project(self, domain: Domain) -> Tuple[str, ...]:
        return tuple(item for item, item_domain in self.items if item_domain is domain)


@dataclass(frozen=True)
class SplitSpec:
    user_id: str
    train_items: Tuple[str, ...]
    validation_item: str
    test_item: str


@dataclass(frozen=True)
class SequenceExample:
    """One next-target-item prediction instance, already mapped to indices.

    ``source`` and ``target`` hold domain vocabulary indices, ``mixed`` holds
    joint vocabulary indices, ``label`` is a target vocabulary index.
    """

    user_id: str
    source: Tuple[int, ...]
    target: Tuple[int, ...]
    mixed: Tuple[int, ...]
    label: int


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _sniff_separator(path: Path) -> str:
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                return "\t" if "\t" in line else ","
    return "\t"


def load_interactions(path: str | Path, domain: Domain, header: bool = False) -> List[InteractionRecord]:
    """Read one domain's ``user_id, item_id, timestamp`` file.

    The separator (TAB or comma) is detected from the first non-empty line.

    Args:
        path: Interaction file.
        domain: Domain tag applied to every record.
        header: Skip the first line.

    Returns:
        One record per row, in file order.

    Raises:
        FileNotFoundError: if ``path`` does not exist.
        DataFormatError: naming the 1-based line of the first malformed row.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"interaction file not found: {path}")
    sep = _sniff_separator(path)
    try:
        # No names: the first row fixes the column count, so a wider row later
        # on is a parse error and a wider first row shows up as a fourth column.
        frame = pd.read_csv(
            path,
            sep=sep,
            header=None,
            index_col=False,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skiprows=1 if header else 0,
            engine="python",
        )
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=range(len(_COLUMNS)))
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = int(match.group(1)) if match else 0
        raise DataFormatError(str(path), line, f"could not parse row: {exc}") from exc

    offset = 2 if header else 1
    blank = frame.apply(lambda row: all(not isinstance(v, str) or not v.strip() for v in row), axis=1)
    frame = frame[~blank] if len(frame) else frame
    if frame.empty:
        logger.warning("Interaction file %s contains no rows.", path)
        return []

    if frame.shape[1] > len(_COLUMNS):
        extra = frame.iloc[:, len(_COLUMNS):].apply(lambda col: col.fillna("").astype(str).str.strip() != "")
        wide = extra.any(axis=1)
        if wide.any():
            line = int(wide.idxmax()) + offset
            raise DataFormatError(str(path), line, f"expected {len(_COLUMNS)} columns, got {frame.shape[1]}")
    frame = frame.reindex(columns=range(len(_COLUMNS)))
    frame.columns = list(_COLUMNS)

    missing = frame.isna().any(axis=1) | (frame["user_id"] == "") | (frame["item_id"] == "")
    if missing.any():
        line = int(missing.idxmax()) + offset
        raise DataFormatError(str(path), line, "expected user_id, item_id and timestamp columns")
    valid_ts = frame["timestamp"].str.strip().str.fullmatch(r"\d+")
    if not valid_ts.all():
        line = int((~valid_ts).idxmax()) + offset
        raw = frame.loc[(~valid_ts).idxmax(), "timestamp"]
        raise DataFormatError(str(path), line, f"timestamp must be a non-negative integer, got {raw!r}")

    return [
        InteractionRecord(user.strip(), item.strip(), int(ts), domain)
        for user, item, ts in zip(frame["user_id"], frame["item_id"], frame["timestamp"])
    ]


def filter_users(
    source_records: Iterable[InteractionRecord],
    target_records: Iterable[InteractionRecord],
    min_interactions: int = DEFAULT_MIN_INTERACTIONS,
) -> Set[str]:
    """Return the users with at least ``min_interactions`` records in both domains."""
    if min_interactions < 1:
        raise ValueError(f"min_interactions must be >= 1, got {min_interactions}")
    source_counts = Counter(record.user_id for record in source_records)
    target_counts = Counter(record.user_id for record in target_records)
    return {
        user
        for user, count in source_counts.items()
        if count >= min_interactions and target_counts.get(user, 0) >= min_interactions
    }


def build_domain_sequences(
    records: Iterable[InteractionRecord],
    users: Optional[Set[str]] = None,
    max_len: int = DEFAULT_MAX_LEN,
) -> Dict[str, DomainSequence]:
    """Group records into per-user sequences ordered by timestamp.

    Records with equal timestamps keep their input order.  Sequences longer
    than ``max_len`` keep their most recent ``max_len`` items.
    """
    grouped: Dict[str, List[InteractionRecord]] = {}
    domain: Optional[Domain] = None
    for record in records:
        if users is not None and record.user_id not in users:
            continue
        if domain is None:
            domain = record.domain
        elif record.domain is not domain:
            raise ValueError("records of both domains passed to build_domain_sequences")
        grouped.setdefault(record.user_id, []).append(record)

    sequences: Dict[str, DomainSequence] = {}
    for user in sorted(grouped):
        ordered = sorted(grouped[user], key=lambda r: r.timestamp)[-max_len:]
        sequences[user] = DomainSequence(
            user,
            ordered[0].domain,
            tuple(r.item_id for r in ordered),
            tuple(r.timestamp for r in ordered),
        )
    return sequences


def build_mixed_sequence(seq_s: DomainSequence, seq_t: DomainSequence) -> MixedSequence:
    """Merge a user's source and target sequences by timestamp.

    The merge is stable; on equal timestamps the source item goes first.

    Raises:
        ValueError: if the sequences belong to different users.
    """
    if seq_s.user_id != seq_t.user_id:
        raise ValueError(f"cannot merge sequences of users {seq_s.user_id!r} and {seq_t.user_id!r}")
    keyed = [(ts, 0, i, item, Domain.SOURCE) for i, (item, ts) in enumerate(zip(seq_s.items, seq_s.timestamps))]
    keyed += [(ts, 1, i, item, Domain.TARGET) for i, (item, ts) in enumerate(zip(seq_t.items, seq_t.timestamps))]
    keyed.sort(key=lambda entry: entry[:3])
    return MixedSequence(
        seq_s.user_id,
        tuple((item, domain) for _, _, _, item, domain in keyed),
        tuple(ts for ts, *_ in keyed),
    )


def split_leave_one_out(seq_t: DomainSequence) -> SplitSpec:
    """Hold out the last target item for testing and the one before for validation."""
    if len(seq_t) < 3:
        raise ValueError(
            f"user {seq_t.user_id} has {len(seq_t)} target interactions; leave-one-out needs at least 3"
        )
    return SplitSpec(seq_t.user_id, seq_t.items[:-2], seq_t.items[-2], seq_t.items[-1])


# ---------------------------------------------------------------------------
# Vocabularies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointVocabulary:
    """Per-domain vocabularies plus the remapped joint vocabulary over both.

    Source item ``i`` keeps index ``i`` in the joint vocabulary; target item
    ``j`` maps to ``len(source) + j``.
    """

    source: Mapping[str, int]
    target: Mapping[str, int]

    @property
    def num_source(self) -> int:
        return len(self.source)

    @property
    def num_target(self) -> int:
        return len(self.target)

    @property
    def num_joint(self) -> int:
        return self.num_source + self.num_target

    def domain_vocab(self, domain: Domain) -> Mapping[str, int]:
        return self.source if domain is Domain.SOURCE else self.target

    def index(self, item: str, domain: Domain) -> int:
        try:
            return self.domain_vocab(domain)[item]
        except KeyError:
            raise VocabularyError(item, f"{domain.value} vocabulary") from None

    def joint_index(self, item: str, domain: Domain) -> int:
        index = self.index(item, domain)
        return index if domain is Domain.SOURCE else self.num_source + index

    def is_target_joint(self, joint_index: int) -> bool:
        return self.num_source < joint_index <= self.num_joint


def build_vocabulary(items: Iterable[str]) -> Dict[str, int]:
    """Assign indices 1..n to the distinct items in sorted order."""
    return {item: index for index, item in enumerate(sorted(set(items)), start=1)}


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

@dataclass
class CrossDomainDataset:
    source: Dict[str, DomainSequence]
    target: Dict[str, DomainSequence]
    mixed: Dict[str, MixedSequence]
    splits: Dict[str, SplitSpec]
    vocab: JointVocabulary
    max_len: int = DEFAULT_MAX_LEN
    _hash: Optional[str] = field(default=None, repr=False, compare=False)

    @property
    def users(self) -> List[str]:
        return sorted(self.splits)

    # -- derived sequences ------------------------------------------------

    def training_target(self, user: str) -> DomainSequence:
        return self.target[user].prefix(len(self.splits[user].train_items))

    def training_mixed(self, user: str) -> MixedSequence:
        """Mixed sequence with the validation and test items removed."""
        return build_mixed_sequence(self.source[user], self.training_target(user))

    def domain_training_sequences(self, domain: Domain) -> List[List[int]]:
        """Index sequences of the training portion for one domain (pretraining input)."""
        sequences = []
        for user in self.users:
            seq = self.source[user] if domain is Domain.SOURCE else self.training_target(user)
            sequences.append([self.vocab.index(item, domain) for item in seq.items])
        return sequences

    def mixed_training_sequences(self) -> List[List[int]]:
        return [self.mixed_indices(self.training_mixed(user)) for user in self.users]

    def mixed_indices(self, mixed: MixedSequence) -> List[int]:
        return [self.vocab.joint_index(item, domain) for item, domain in mixed.items]

    # -- examples -----------------------------------------------------------

    def examples(self, split: str) -> List[SequenceExample]:
        """Build prediction instances for ``train``, ``validation`` or ``test``.

        Training instances predict every training target item that has at
        least one earlier target item.  Held-out items missing from the
        training vocabulary are dropped with a logged count.
        """
        if split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {split!r}")
        examples: List[SequenceExample] = []
        dropped = 0
        for user in self.users:
            source = self.source[user]
            source_ids = tuple(self.vocab.index(item, Domain.SOURCE) for item in source.items)
            target = self.target[user]
            n_train = len(self.splits[user].train_items)
            if split == "train":
                positions = range(1, n_train)
            elif split == "validation":
                positions = [n_train]
            else:
                positions = [n_train + 1]
            for p in positions:
                label_item = target.items[p]
                if label_item not in self.vocab.target:
                    dropped += 1
                    continue
                history = target.prefix(p)
                keep = [i for i, item in enumerate(history.items) if item in self.vocab.target]
                history = DomainSequence(
                    user,
                    Domain.TARGET,
                    tuple(history.items[i] for i in keep),
                    tuple(history.timestamps[i] for i in keep),
                )
                mixed = build_mixed_sequence(source, history)
                examples.append(
                    SequenceExample(
                        user_id=user,
                        source=source_ids,
                        target=tuple(self.vocab.index(item, Domain.TARGET) for item in history.items),
                        mixed=tuple(self.mixed_indices(mixed)),
                        label=self.vocab.index(label_item, Domain.TARGET),
                    )
                )
        if dropped:
            logger.warning("Dropped %d %s items not present in the training vocabulary.", dropped, split)
        return examples

    # -- persistence --------------------------------------------------------

    def _render(self) -> Dict[str, str]:
        def join(values: Sequence[object]) -> str:
            return ",".join(str(v) for v in values)

        source_lines = [f"{u}\t{join(s.items)}\t{join(s.timestamps)}" for u, s in sorted(self.source.items())]
        target_lines = [f"{u}\t{join(s.items)}\t{join(s.timestamps)}" for u, s in sorted(self.target.items())]
        mixed_lines = [
            f"{u}\t{join(i for i, _ in m.items)}\t{join(d.tag for _, d in m.items)}\t{join(m.timestamps)}"
            for u, m in sorted(self.mixed.items())
        ]
        split_lines = [
            f"{u}\t{join(s.train_items)}\t{s.validation_item}\t{s.test_item}" for u, s in sorted(self.splits.items())
        ]
        vocab_s = [f"{item}\t{index}" for item, index in sorted(self.vocab.source.items(), key=lambda kv: kv[1])]
        vocab_t = [f"{item}\t{index}" for item, index in sorted(self.vocab.target.items(), key=lambda kv: kv[1])]
        blocks = [source_lines, target_lines, mixed_lines, split_lines, vocab_s, vocab_t]
        return {name: "".join(line + "\n" for line in lines) for name, lines in zip(DATASET_FILES, blocks)}

    def content_hash(self) -> str:
        """SHA-256 over the canonical text rendering; stable across identical inputs."""
        if self._hash is None:
            digest = hashlib.sha256()
            for name, text in self._render().items():
                digest.update(name.encode("utf-8"))
                digest.update(text.encode("utf-8"))
            self._hash = digest.hexdigest()
        return self._hash

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in self._render().items():
            (directory / name).write_text(text, encoding="utf-8")
        logger.info("Wrote dataset with %d users to %s", len(self.splits), directory)
        return directory

    @classmethod
    def load(cls, directory: str | Path, max_len: int = DEFAULT_MAX_LEN) -> "CrossDomainDataset":
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"dataset directory not found: {directory}")
        rows = {name: _read_rows(directory / name) for name in DATASET_FILES}

        def domain_seqs(name: str, domain: Domain) -> Dict[str, DomainSequence]:
            seqs = {}
            for line, fields in rows[name]:
                _expect(directory / name, line, fields, 3)
                items = _split_list(fields[1])
                stamps = _parse_ints(directory / name, line, fields[2])
                try:
                    seqs[fields[0]] = DomainSequence(fields[0], domain, tuple(items), tuple(stamps))
                except ValueError as exc:
                    raise DataFormatError(str(directory / name), line, str(exc)) from exc
            return seqs

        source = domain_seqs("source.txt", Domain.SOURCE)
        target = domain_seqs("target.txt", Domain.TARGET)

        mixed: Dict[str, MixedSequence] = {}
        for line, fields in rows["mixed.txt"]:
            _expect(directory / "mixed.txt", line, fields, 4)
            items, tags = _split_list(fields[1]), _split_list(fields[2])
            stamps = _parse_ints(directory / "mixed.txt", line, fields[3])
            if not len(items) == len(tags) == len(stamps):
                raise DataFormatError(str(directory / "mixed.txt"), line, "field lengths differ")
            try:
                pairs = tuple((item, Domain.from_tag(tag)) for item, tag in zip(items, tags))
            except ValueError as exc:
                raise DataFormatError(str(directory / "mixed.txt"), line, str(exc)) from exc
            mixed[fields[0]] = MixedSequence(fields[0], pairs, tuple(stamps))

        splits: Dict[str, SplitSpec] = {}
        for line, fields in rows["split.txt"]:
            _expect(directory / "split.txt", line, fields, 4)
            splits[fields[0]] = SplitSpec(fields[0], tuple(_split_list(fields[1])), fields[2], fields[3])

        def vocab(name: str) -> Dict[str, int]:
            mapping = {}
            for line, fields in rows[name]:
                _expect(directory / name, line, fields, 2)
                mapping[fields[0]] = _parse_ints(directory / name, line, fields[1])[0]
            return mapping

        dataset = cls(
            source=source,
            target=target,
            mixed=mixed,
            splits=splits,
            vocab=JointVocabulary(vocab("vocab_source.txt"), vocab("vocab_target.txt")),
            max_len=max_len,
        )
        missing = set(splits) - (set(source) & set(target))
        if missing:
            raise DataFormatError(str(directory / "split.txt"), 0, f"users without sequences: {sorted(missing)[:5]}")
        return dataset


def build_dataset(
    source_records: Sequence[InteractionRecord],
    target_records: Sequence[InteractionRecord],
    min_interactions: int = DEFAULT_MIN_INTERACTIONS,
    max_len: int = DEFAULT_MAX_LEN,
) -> CrossDomainDataset:
    """Run filtering, ordering, merging and splitting over raw records."""
    users = filter_users(source_records, target_records, min_interactions)
    logger.info("Kept %d users with >= %d interactions in both domains.", len(users), min_interactions)
    source = build_domain_sequences(source_records, users, max_len)
    target = build_domain_sequences(target_records, users, max_len)
    # Truncation to max_len can leave fewer than three target items.
    kept = sorted(u for u in users if len(target[u]) >= 3)
    splits = {u: split_leave_one_out(target[u]) for u in kept}
    mixed = {u: build_mixed_sequence(source[u], target[u]) for u in kept}
    _check_item_ids(source_records, target_records)
    vocab = JointVocabulary(
        source=build_vocabulary(item for u in kept for item in source[u].items),
        target=build_vocabulary(item for u in kept for item in splits[u].train_items),
    )
    held_out = {item for u in kept for item in (splits[u].validation_item, splits[u].test_item)}
    unseen = held_out - set(vocab.target)
    if unseen:
        logger.warning("%d target items appear only in validation/test and are dropped.", len(unseen))
    return CrossDomainDataset(
        source={u: source[u] for u in kept},
        target={u: target[u] for u in kept},
        mixed=mixed,
        splits=splits,
        vocab=vocab,
        max_len=max_len,
    )


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------

def _check_item_ids(*record_groups: Iterable[InteractionRecord]) -> None:
    for records in record_groups:
        for record in records:
            for value in (record.user_id, record.item_id):
                if "," in value or "\t" in value:
                    raise ValueError(f"identifier {value!r} contains a separator character")


def _read_rows(path: Path) -> List[Tuple[int, List[str]]]:
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    rows = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            rows.append((line_no, line.split("\t")))
    return rows


def _expect(path: Path, line: int, fields: List[str], count: int) -> None:
    if len(fields) != count:
        raise DataFormatError(str(path), line, f"expected {count} fields, found {len(fields)}")


def _split_list(text: str) -> List[str]:
    return [part for part in text.split(",") if part] if text else []


def _parse_ints(path: Path, line: int, text: str) -> List[int]:
    try:
        return [int(part) for part in _split_list(text)]
    except ValueError as exc:
        raise DataFormatError(str(path), line, f"expected integers, got {text!r}") from exc
