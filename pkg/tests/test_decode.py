import random

import pytest

from structsql.decode import (
    AdversarialScorer,
    DecodeState,
    LexiconConstraint,
    NoValidHypothesis,
    OracleScorer,
    RandomScorer,
    Untokenizable,
    Vocabulary,
    beam_search,
    build_trie,
    greedy_decode,
    oracle_scorer,
)
from structsql.schema import DatabaseSchema, load_schema
from structsql.sql_ast import render_sql
from structsql.synth import random_query, random_schema_doc

from util_checks import identifier_run_violations, sequence_explained


def surfaces(vocab, ids):
    return [vocab.surface(i) for i in ids]


@pytest.fixture(scope="module")
def tennis_kit(tennis):
    corpus = [
        "SELECT Ranking.Year FROM Ranking WHERE Ranking.Year = 2016",
        "SELECT Players.First_name FROM Players WHERE Players.Country = 'USA'",
    ]
    vocab = Vocabulary.build([tennis], corpus_texts=corpus)
    trie = build_trie(tennis, vocab)
    return vocab, trie


# -- vocabulary ---------------------------------------------------------------


def test_vocab_categories(tennis_kit):
    vocab, _ = tennis_kit
    assert vocab.id_of("SELECT") in vocab.keyword_ids
    assert vocab.id_of("2016") in vocab.literal_ids
    assert vocab.id_of("USA") in vocab.literal_ids  # observed inside quotes
    assert vocab.id_of("Ranking") not in vocab.literal_ids
    assert vocab.eos_id not in vocab.literal_ids


def test_detokenize_round_trip(tennis_kit):
    vocab, _ = tennis_kit
    text = "SELECT Players.First_name FROM Players WHERE Players.Country = 'USA'"
    assert vocab.detokenize(vocab.tokenize(text)) == text


def test_tokenize_unknown_raises(tennis_kit):
    vocab, _ = tennis_kit
    with pytest.raises(Untokenizable):
        vocab.tokenize("Unseen_token_xyz")


# -- trie ---------------------------------------------------------------------


def test_trie_terminals_fig(tennis_kit):
    _, trie = tennis_kit
    names = trie.terminal_surfaces()
    assert "Ranking.Player_id" in names
    assert "Matches" in names
    assert "*" in names


def test_trie_empty_schema_star_only():
    schema = DatabaseSchema(db_id="empty", tables=())
    vocab = Vocabulary.build([schema])
    trie = build_trie(schema, vocab)
    assert trie.terminal_surfaces() == {"*"}


def test_trie_value_mode(tennis, tennis_kit):
    vocab, _ = tennis_kit
    trie = build_trie(tennis, vocab, include_values=True)
    assert trie.contains("2016")
    names = {e.surface for _, n in trie.iter_terminals() for e in n.entries if e.kind == "value"}
    assert "USA" in names


def test_trie_terminal_count_membership_oracle():
    rng = random.Random(42)
    doc, _ = random_schema_doc(rng, "db", min_tables=5, max_tables=8)
    schema = load_schema(doc)
    vocab = Vocabulary.build([schema])
    trie = build_trie(schema, vocab, include_values=False)
    # Independent membership scan: every surface form must be reachable by
    # walking children maps, and the terminal count must equal the name count.
    forms = set(schema.surface_forms())
    for form in forms:
        node = trie.root
        for token_id in vocab.tokenize(form):
            node = node.children[token_id]
        assert node.terminal
    assert trie.terminal_count() == len(forms)


def test_trie_untokenizable_name():
    doc = {
        "db_id": "bad",
        "table_names_original": ["t"],
        "column_names_original": [[-1, "*"], [0, "c"]],
        "column_types": ["text", "text"],
        "primary_keys": [],
        "foreign_keys": [],
    }
    schema = load_schema(doc)
    vocab = Vocabulary([">", "</s>"])  # no schema pieces at all
    with pytest.raises(Untokenizable):
        build_trie(schema, vocab)


# -- allowed_tokens -------------------------------------------------------------


def test_allowed_mid_path_children_only(tennis_kit):
    vocab, trie = tennis_kit
    constraint = LexiconConstraint(trie, vocab)
    prefix = vocab.tokenize("Ranking.")
    node = trie.node_at(prefix)
    state = DecodeState(tokens=tuple(prefix), node=node)
    allowed = constraint.allowed_tokens(state)
    expected = {vocab.id_of("Player_id"), vocab.id_of("Ranking"), vocab.id_of("Year")}
    assert allowed == expected


def test_allowed_fresh_state_with_empty_trie():
    schema = DatabaseSchema(db_id="empty", tables=())
    vocab = Vocabulary.build([schema], corpus_texts=["SELECT 1 FROM x WHERE y = 'z'"])
    trie = build_trie(schema, vocab)
    constraint = LexiconConstraint(trie, vocab)
    allowed = constraint.allowed_tokens(DecodeState())
    star_root = set(trie.root.children)
    assert allowed == vocab.keyword_ids | vocab.literal_ids | {vocab.eos_id} | star_root


def test_allowed_at_terminal_without_extension(tennis_kit):
    vocab, trie = tennis_kit
    constraint = LexiconConstraint(trie, vocab)
    ids = vocab.tokenize("Ranking.Year")
    node = trie.node_at(ids)
    assert node.terminal and not node.children
    state = DecodeState(tokens=tuple(ids), node=node)
    allowed = constraint.allowed_tokens(state)
    assert allowed == vocab.keyword_ids | vocab.literal_ids | {vocab.eos_id}


def test_allowed_at_terminal_with_extension(tennis_kit):
    vocab, trie = tennis_kit
    # "Ranking" is a table terminal and a prefix of "Ranking.Year"
    ids = vocab.tokenize("Ranking")
    node = trie.node_at(ids)
    assert node.terminal and node.children
    constraint = LexiconConstraint(trie, vocab)
    state = DecodeState(tokens=tuple(ids), node=node)
    allowed = constraint.allowed_tokens(state)
    assert vocab.id_of(".") in allowed
    assert vocab.id_of("FROM") in allowed
    assert vocab.eos_id in allowed


def test_allowed_inside_literal_suspends_trie(tennis_kit):
    vocab, trie = tennis_kit
    constraint = LexiconConstraint(trie, vocab)
    state = DecodeState(tokens=(vocab.quote_id,), node=None, in_literal=True)
    allowed = constraint.allowed_tokens(state)
    assert vocab.eos_id not in allowed
    assert len(allowed) == len(vocab) - 1


def test_no_keyword_leak_mid_identifier(tennis_kit):
    vocab, trie = tennis_kit
    constraint = LexiconConstraint(trie, vocab)
    prefix = vocab.tokenize("Players.")
    state = DecodeState(tokens=tuple(prefix), node=trie.node_at(prefix))
    allowed = constraint.allowed_tokens(state)
    assert not allowed & vocab.keyword_ids
    assert vocab.eos_id not in allowed


# -- beam search -----------------------------------------------------------------


GOLD_QUERIES = [
    "SELECT * FROM Matches",
    "SELECT Ranking.Year FROM Ranking WHERE Ranking.Year = 2016",
    "SELECT COUNT(*) FROM Players WHERE Players.Country = 'USA'",
    "SELECT Players.First_name FROM Players JOIN Matches ON Matches.Winner_id = Players.Player_id",
]


@pytest.mark.parametrize("gold", GOLD_QUERIES)
@pytest.mark.parametrize("width", [1, 3, 5])
def test_oracle_reproduces_gold(tennis, gold, width):
    vocab = Vocabulary.build([tennis], corpus_texts=GOLD_QUERIES)
    trie = build_trie(tennis, vocab)
    hyps = beam_search(oracle_scorer(gold, vocab), ["q"], trie, beam_width=width, max_len=120)
    assert hyps[0].text(vocab) == gold


def test_width_one_equals_manual_greedy(tennis_kit):
    vocab, trie = tennis_kit
    gold = "SELECT Ranking.Year FROM Ranking WHERE Ranking.Year = 2016"
    scorer = oracle_scorer(gold, vocab)
    constraint = LexiconConstraint(trie, vocab)

    # Manual argmax-with-mask loop, re-implемented without beam_search.
    state = DecodeState()
    out = []
    for _ in range(100):
        candidates = sorted(constraint.allowed_tokens(state))
        scores = scorer.score_candidates([], state.tokens, candidates)
        best = max(zip(candidates, scores), key=lambda p: (p[1], -p[0]))[0]
        if best == vocab.eos_id:
            break
        out.append(best)
        state = constraint.advance(state, best, 0.0)[0]

    hyp = greedy_decode(scorer, ["q"], trie, max_len=100)
    assert list(hyp.token_ids) == out


def test_oracle_eos_behavior(tennis_kit):
    vocab, _ = tennis_kit
    scorer = oracle_scorer("SELECT * FROM Matches", vocab)
    target = vocab.tokenize("SELECT * FROM Matches")
    longer = tuple(target) + (vocab.id_of("FROM"),)
    scores = scorer.score_candidates([], longer, [vocab.eos_id, vocab.id_of("SELECT")])
    assert scores == [1.0, 0.0]


def test_oracle_empty_target_rejected(tennis_kit):
    vocab, _ = tennis_kit
    with pytest.raises(ValueError):
        oracle_scorer([], vocab)


def test_oracle_against_schema_violating_target(tennis):
    # The target references a token outside the schema; masking makes it
    # unreachable, so no hypothesis ever contains it and the target is never
    # reproduced.
    vocab = Vocabulary.build([tennis], extra_tokens=["Nation"])
    trie = build_trie(tennis, vocab)
    target = [vocab.id_of(t) for t in ["SELECT", "Nation", "FROM", "Players"]]
    scorer = OracleScorer(vocab, target)
    hyps = beam_search(scorer, ["q"], trie, beam_width=3, max_len=12)
    for hyp in hyps:
        assert vocab.id_of("Nation") not in hyp.token_ids
        assert list(hyp.token_ids) != target


def test_adversarial_lure_blocked(tennis):
    gold = "SELECT Players.Country FROM Players"
    vocab = Vocabulary.build([tennis], corpus_texts=[gold], extra_tokens=["Nation"])
    trie = build_trie(tennis, vocab)
    adv = AdversarialScorer(
        vocab, vocab.tokenize(gold), vocab.id_of("Country"), vocab.id_of("Nation")
    )
    unconstrained = beam_search(adv, ["q"], None, beam_width=1, max_len=40, constrained=False)
    constrained = beam_search(adv, ["q"], trie, beam_width=1, max_len=40)
    assert "Nation" in unconstrained[0].text(vocab)
    assert "Nation" not in constrained[0].text(vocab)
    assert "Country" in constrained[0].text(vocab)


class EosAverseScorer(RandomScorer):
    """Continuations always outrank finishing; forces max_len exhaustion."""

    def score_candidates(self, source, prefix, candidates, example_id=None):
        scores = super().score_candidates(source, prefix, candidates, example_id)
        return [
            -1.0 if c == self.vocab.eos_id else s for c, s in zip(candidates, scores)
        ]


def test_all_beams_pruned_raises(tennis_kit):
    vocab, trie = tennis_kit
    with pytest.raises(NoValidHypothesis):
        beam_search(EosAverseScorer(vocab, seed=4), ["q"], trie, beam_width=2, max_len=8)


def test_beam_parameter_validation(tennis_kit):
    vocab, trie = tennis_kit
    scorer = oracle_scorer("SELECT * FROM Matches", vocab)
    with pytest.raises(ValueError):
        beam_search(scorer, ["q"], trie, beam_width=0)
    with pytest.raises(ValueError):
        beam_search(scorer, ["q"], trie, max_len=0)


class JitteredOracle(OracleScorer):
    """Oracle plus a small deterministic per-candidate jitter."""

    def score_candidates(self, source, prefix, candidates, example_id=None):
        base = super().score_candidates(source, prefix, candidates, example_id)
        return [
            s + ((hash((len(prefix), c)) % 997) / 997 - 0.5) * 0.001
            for s, c in zip(base, candidates)
        ]


def test_ranking_deterministic(tennis_kit):
    vocab, trie = tennis_kit
    gold = "SELECT Ranking.Year FROM Ranking"
    a = beam_search(JitteredOracle(vocab, vocab.tokenize(gold)), ["q"], trie, beam_width=3, max_len=30)
    b = beam_search(JitteredOracle(vocab, vocab.tokenize(gold)), ["q"], trie, beam_width=3, max_len=30)
    assert [h.token_ids for h in a] == [h.token_ids for h in b]
    assert all(x.score >= y.score for x, y in zip(a, a[1:]))


def test_length_normalized_ranking(tennis_kit):
    vocab, trie = tennis_kit
    gold = "SELECT Ranking.Year FROM Ranking"
    scorer = oracle_scorer(gold, vocab)
    plain = beam_search(scorer, ["q"], trie, beam_width=3, max_len=40)
    normalized = beam_search(
        scorer, ["q"], trie, beam_width=3, max_len=40, length_normalize=True
    )
    assert plain[0].text(vocab) == gold
    by_mean = sorted(
        normalized, key=lambda h: (-h.score / max(len(h.token_ids), 1), h.token_ids)
    )
    assert [h.token_ids for h in normalized] == [h.token_ids for h in by_mean]


def test_oracle_property_random_queries(tennis, tennis_graph):
    rng = random.Random(77)
    corpus = [render_sql(random_query(rng, tennis, tennis_graph)) for _ in range(25)]
    vocab = Vocabulary.build([tennis], corpus_texts=corpus)
    trie = build_trie(tennis, vocab)
    for gold in corpus:
        width = rng.choice((1, 2, 5))
        hyps = beam_search(oracle_scorer(gold, vocab), ["q"], trie, beam_width=width, max_len=150)
        assert hyps[0].text(vocab) == gold


# -- schema faithfulness fuzz -----------------------------------------------------


def fuzz_steps(schema, vocab, trie, seed, n_steps, max_len=50):
    """Greedy random-scorer stepping; returns emitted surface sequences."""
    constraint = LexiconConstraint(trie, vocab)
    scorer = RandomScorer(vocab, seed=seed)
    sequences = []
    steps = 0
    session = 0
    while steps < n_steps:
        state = DecodeState()
        session += 1
        scorer.seed = seed + session
        for _ in range(max_len):
            candidates = sorted(constraint.allowed_tokens(state))
            scores = scorer.score_candidates([], state.tokens, candidates)
            best = max(zip(candidates, scores), key=lambda p: (p[1], -p[0]))[0]
            steps += 1
            if best == vocab.eos_id or steps >= n_steps:
                break
            state = constraint.advance(state, best, 0.0)[0]
        sequences.append([vocab.surface(t) for t in state.tokens])
    return sequences


def test_fuzz_constrained_no_out_of_schema_runs(tennis):
    vocab = Vocabulary.build(
        [tennis],
        corpus_texts=["SELECT Ranking.Year FROM Ranking WHERE Players.Country = 'USA'"],
    )
    trie = build_trie(tennis, vocab)
    forms = set(tennis.surface_forms())
    keywords = {vocab.surface(i) for i in vocab.keyword_ids}
    literals = {vocab.surface(i) for i in vocab.literal_ids}
    for seq in fuzz_steps(tennis, vocab, trie, seed=3, n_steps=2000):
        assert identifier_run_violations(seq, forms, keywords, literals) == 0


def test_finished_hypotheses_fully_explained(tennis_kit, tennis):
    vocab, trie = tennis_kit
    forms = set(tennis.surface_forms())
    keywords = {vocab.surface(i) for i in vocab.keyword_ids}
    literals = {vocab.surface(i) for i in vocab.literal_ids}
    scorer = RandomScorer(vocab, seed=123)
    hyps = beam_search(scorer, ["q"], trie, beam_width=4, max_len=25)
    for hyp in hyps:
        seq = surfaces(vocab, hyp.token_ids)
        assert sequence_explained(seq, forms, keywords, literals), seq
