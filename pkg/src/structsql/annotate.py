"""Structure-marked input serialization for a seq2seq scorer.

Layout: current question turn, prior turns newest-to-oldest, previous SQL,
linearized schema with mark prefixes, then table relation statements.  Every
token carries a region tag so the serialization is reversible.
"""

from __future__ import annotations

from dataclasses import dataclass

from structsql.linking import LinkAnnotation, MatchKind, QuestionTokens
from structsql.schema import ColumnType, DatabaseSchema, build_schema_graph
from structsql.sql_ast import SqlQuery, render_sql

TABLE_MARK = "[TABLE]"
COLUMN_MARK = "[COLUMN]"
AMP = "&"
LINKS_TO = "links to"
PRIMARY_KEY_MARK = "Primary-Key"
TURN_SEPARATOR = "|"

MATCH_MARKS = {
    MatchKind.EXACT: "Exact-Match",
    MatchKind.PARTIAL: "Partial-Match",
    MatchKind.VALUE: "Value-Match",
}

TYPE_MARKS = {
    ColumnType.INTEGER: "Integer",
    ColumnType.REAL: "Real",
    ColumnType.TEXT: "Text",
    ColumnType.DATE: "Date",
    ColumnType.BOOLEAN: "Boolean",
    ColumnType.OTHER: "Other",
}

MARK_VOCABULARY = frozenset(
    {TABLE_MARK, COLUMN_MARK, PRIMARY_KEY_MARK, AMP, LINKS_TO}
    | set(MATCH_MARKS.values())
    | set(TYPE_MARKS.values())
)

_KIND_ORDER = (MatchKind.EXACT, MatchKind.PARTIAL, MatchKind.VALUE)


class UnknownLinkTarget(ValueError):
    """An annotation references a schema item that does not exist."""


@dataclass(frozen=True)
class MarkConfig:
    """Toggles for the three mark families (all on reproduces the full input)."""

    schema_property: bool = True
    database_structure: bool = True
    discourse: bool = True


@dataclass(frozen=True)
class TokenTag:
    region: str  # "question" | "table" | "column" | "relation" | "prev_sql"
    turn: int | None = None
    mark: bool = False


@dataclass(frozen=True)
class AnnotatedInput:
    """Serialized, structure-marked token sequence plus per-token region tags."""

    tokens: tuple[str, ...]
    tags: tuple[TokenTag, ...]
    example_id: str | None = None

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.tags):
            raise ValueError("tokens and tags must align one-to-one")

    def render(self) -> str:
        return " ".join(self.tokens)

    def region_tokens(self, region: str) -> list[str]:
        return [tok for tok, tag in zip(self.tokens, self.tags) if tag.region == region]

    def mark_tokens(self) -> list[str]:
        return [tok for tok, tag in zip(self.tokens, self.tags) if tag.mark]


def _validate_links(schema: DatabaseSchema, links: list[LinkAnnotation]) -> None:
    for ann in links:
        table = schema.table(ann.table)
        if table is None:
            raise UnknownLinkTarget(f"no table {ann.table!r} in schema {schema.db_id!r}")
        if ann.column is not None and table.column(ann.column) is None:
            raise UnknownLinkTarget(
                f"no column {ann.table}.{ann.column} in schema {schema.db_id!r}"
            )


def _group_links(links: list[LinkAnnotation]):
    kinds: dict[tuple[str, str | None], set[MatchKind]] = {}
    values: dict[tuple[str, str], list[str]] = {}
    for ann in links:
        key = ann.target_key()
        kinds.setdefault(key, set()).add(ann.kind)
        if ann.kind is MatchKind.VALUE and ann.column is not None:
            bucket = values.setdefault((key[0], key[1]), [])
            if ann.value not in bucket:
                bucket.append(ann.value)
    return kinds, values


def _mark_prefix(marks: list[str]) -> list[str]:
    tokens: list[str] = []
    for i, mark in enumerate(marks):
        if i:
            tokens.append(AMP)
        tokens.append(mark)
    return tokens


def _linearize_tagged(
    schema: DatabaseSchema,
    links: list[LinkAnnotation],
    include_values: bool,
    schema_property: bool,
    database_structure: bool,
) -> list[tuple[str, TokenTag]]:
    _validate_links(schema, links)
    kinds, values = _group_links(links)

    out: list[tuple[str, TokenTag]] = []
    out.append((TABLE_MARK, TokenTag("table", mark=True)))
    for table in schema.tables:
        marks: list[str] = []
        if schema_property:
            present = kinds.get((table.name.lower(), None), set())
            marks = [MATCH_MARKS[k] for k in _KIND_ORDER if k in present]
        for tok in _mark_prefix(marks):
            out.append((tok, TokenTag("table", mark=True)))
        out.append((table.name, TokenTag("table")))

    out.append((COLUMN_MARK, TokenTag("column", mark=True)))
    for table, col in schema.iter_columns():
        key = (table.name.lower(), col.name.lower())
        marks = []
        if schema_property:
            present = kinds.get(key, set())
            marks = [MATCH_MARKS[k] for k in _KIND_ORDER if k in present]
            if col.is_primary:
                marks.append(PRIMARY_KEY_MARK)
            marks.append(TYPE_MARKS[col.col_type])
        for tok in _mark_prefix(marks):
            out.append((tok, TokenTag("column", mark=True)))
        surface = f"{table.name}.{col.name}" if database_structure else col.name
        out.append((surface, TokenTag("column")))
        if include_values:
            for value in values.get(key, ()):
                out.append((AMP, TokenTag("column", mark=True)))
                out.append((value, TokenTag("column")))
    return out


def linearize_schema(
    schema: DatabaseSchema,
    links: list[LinkAnnotation] | tuple = (),
    include_values: bool = False,
    *,
    schema_property: bool = True,
    database_structure: bool = True,
) -> list[str]:
    """Flatten the schema into mark-prefixed surface tokens.

    Column marks are joined with "&" in fixed order: match kinds, then
    Primary-Key, then the column type.  A type mark is emitted for every
    column.  With ``include_values``, matched cell values follow the column,
    each preceded by "&".
    """
    pairs = _linearize_tagged(
        schema, list(links), include_values, schema_property, database_structure
    )
    return [tok for tok, _ in pairs]


def _relations_tagged(schema: DatabaseSchema, graph=None) -> list[tuple[str, TokenTag]]:
    graph = graph or build_schema_graph(schema)
    out: list[tuple[str, TokenTag]] = []
    for edge in graph.edges:
        if edge.kind != "table_link":
            continue
        out.append((edge.a, TokenTag("relation")))
        out.append((LINKS_TO, TokenTag("relation", mark=True)))
        out.append((edge.b, TokenTag("relation")))
    return out


def render_relations(schema: DatabaseSchema, graph=None) -> list[str]:
    """One "T1 links to T2" statement per table-link edge, in declaration order.

    Foreign-key column pairs are not rendered separately; the table relation
    subsumes them.
    """
    return [tok for tok, _ in _relations_tagged(schema, graph)]


def build_input(
    turns: QuestionTokens,
    schema: DatabaseSchema,
    links: list[LinkAnnotation] | tuple = (),
    prev_sql: SqlQuery | None = None,
    include_values: bool = False,
    config: MarkConfig = MarkConfig(),
    *,
    example_id: str | None = None,
    graph=None,
) -> AnnotatedInput:
    """Assemble the full serialized input for one example.

    Question turns appear in reverse chronological order (current turn first)
    separated by "|"; the previous-turn SQL is inserted only when the
    discourse family is enabled.
    """
    pairs: list[tuple[str, TokenTag]] = []
    n_turns = len(turns.turns)
    for offset, turn_idx in enumerate(range(n_turns - 1, -1, -1)):
        if offset:
            pairs.append((TURN_SEPARATOR, TokenTag("question")))
        for tok in turns.turns[turn_idx]:
            pairs.append((tok, TokenTag("question", turn=turn_idx)))

    if config.discourse and prev_sql is not None:
        for tok in render_sql(prev_sql).split(" "):
            pairs.append((tok, TokenTag("prev_sql")))

    pairs.extend(
        _linearize_tagged(
            schema,
            list(links) if config.schema_property else [],
            include_values,
            config.schema_property,
            config.database_structure,
        )
    )
    if config.database_structure:
        pairs.extend(_relations_tagged(schema, graph))

    tokens, tags = zip(*pairs) if pairs else ((), ())
    return AnnotatedInput(tuple(tokens), tuple(tags), example_id=example_id)
