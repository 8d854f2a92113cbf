import json
import socket
import socketserver
import threading
import time

import pytest

from structsql.decode import (
    ProtocolViolation,
    ScorerServer,
    ScorerTimeout,
    TransportError,
    Vocabulary,
    beam_search,
    build_trie,
    external_scorer_connect,
    oracle_scorer,
)


@pytest.fixture(scope="module")
def kit(tennis):
    gold = "SELECT Ranking.Year FROM Ranking WHERE Ranking.Year = 2016"
    vocab = Vocabulary.build([tennis], corpus_texts=[gold])
    trie = build_trie(tennis, vocab)
    return vocab, trie, gold


class MisbehavingServer(socketserver.ThreadingTCPServer):
    """Protocol server with scriptable faults."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, vocab, mode):
        outer_mode = mode

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    request = json.loads(raw)
                    if request["type"] == "hello":
                        if outer_mode == "bad_vocab":
                            reply = {"type": "vocab", "size": 1, "eos_id": 0, "tokenizer_tag": "x"}
                        elif outer_mode == "missing_field":
                            reply = {"type": "vocab", "size": len(vocab)}
                        else:
                            reply = {
                                "type": "vocab",
                                "size": len(vocab),
                                "eos_id": vocab.eos_id,
                                "tokenizer_tag": "wordpiece-v1",
                            }
                    else:
                        if outer_mode == "short_scores":
                            reply = {
                                "type": "scores",
                                "example_id": request["example_id"],
                                "scores": [0.5],
                            }
                        elif outer_mode == "wrong_example":
                            reply = {
                                "type": "scores",
                                "example_id": "nope",
                                "scores": [0.0] * len(request["candidates"]),
                            }
                        elif outer_mode == "not_json":
                            self.wfile.write(b"garbage\n")
                            self.wfile.flush()
                            continue
                        elif outer_mode == "slow":
                            time.sleep(0.8)
                            reply = {
                                "type": "scores",
                                "example_id": request["example_id"],
                                "scores": [0.0] * len(request["candidates"]),
                            }
                        elif outer_mode == "nan":
                            reply = {
                                "type": "scores",
                                "example_id": request["example_id"],
                                "scores": [float("nan")] * len(request["candidates"]),
                            }
                        else:
                            reply = {
                                "type": "scores",
                                "example_id": request["example_id"],
                                "scores": [0.0] * len(request["candidates"]),
                            }
                    self.wfile.write((json.dumps(reply) + "\n").encode())
                    self.wfile.flush()

        super().__init__(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self):
        host, port = self.server_address
        return f"{host}:{port}"

    def close(self):
        self.shutdown()
        self.server_close()


def test_handshake_echoes_vocab(kit):
    vocab, _, gold = kit
    server = ScorerServer(oracle_scorer(gold, vocab))
    try:
        scorer = external_scorer_connect(server.endpoint, vocab)
        assert scorer.tokenizer_tag == "wordpiece-v1"
        scorer.close()
    finally:
        server.close()


def test_request_with_two_candidates_gets_two_scores(kit):
    vocab, _, gold = kit
    server = ScorerServer(oracle_scorer(gold, vocab))
    try:
        scorer = external_scorer_connect(server.endpoint, vocab)
        target = vocab.tokenize(gold)
        scores = scorer.score_candidates([], [], [target[0], vocab.eos_id], "ex0")
        assert len(scores) == 2
        assert scores == [1.0, 0.0]
        scorer.close()
    finally:
        server.close()


def test_remote_decode_matches_local(kit):
    vocab, trie, gold = kit
    server = ScorerServer(oracle_scorer(gold, vocab))
    try:
        remote = external_scorer_connect(server.endpoint, vocab)
        local = beam_search(oracle_scorer(gold, vocab), ["q"], trie, beam_width=2, max_len=80)
        via_wire = beam_search(remote, ["q"], trie, beam_width=2, max_len=80)
        assert [h.token_ids for h in via_wire] == [h.token_ids for h in local]
        remote.close()
    finally:
        server.close()


def test_short_scores_is_protocol_violation(kit):
    vocab, _, _ = kit
    server = MisbehavingServer(vocab, "short_scores")
    try:
        scorer = external_scorer_connect(server.endpoint, vocab)
        with pytest.raises(ProtocolViolation):
            scorer.score_candidates([], [], [1, 2], "ex")
        scorer.close()
    finally:
        server.close()


@pytest.mark.parametrize("mode", ["wrong_example", "not_json", "nan"])
def test_bad_responses_are_protocol_violations(kit, mode):
    vocab, _, _ = kit
    server = MisbehavingServer(vocab, mode)
    try:
        scorer = external_scorer_connect(server.endpoint, vocab)
        with pytest.raises(ProtocolViolation):
            scorer.score_candidates([], [], [1, 2], "ex")
        scorer.close()
    finally:
        server.close()


def test_vocab_mismatch_rejected(kit):
    vocab, _, _ = kit
    server = MisbehavingServer(vocab, "bad_vocab")
    try:
        with pytest.raises(ProtocolViolation):
            external_scorer_connect(server.endpoint, vocab)
    finally:
        server.close()


def test_missing_handshake_field_rejected(kit):
    vocab, _, _ = kit
    server = MisbehavingServer(vocab, "missing_field")
    try:
        with pytest.raises(ProtocolViolation):
            external_scorer_connect(server.endpoint, vocab)
    finally:
        server.close()


def test_timeout(kit):
    vocab, _, _ = kit
    server = MisbehavingServer(vocab, "slow")
    try:
        scorer = external_scorer_connect(server.endpoint, vocab, timeout=0.2)
        with pytest.raises(ScorerTimeout):
            scorer.score_candidates([], [], [1], "ex")
        scorer.close()
    finally:
        server.close()


def test_unreachable_endpoint_is_transport_error(kit):
    vocab, _, _ = kit
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()  # nothing listening here any more
    with pytest.raises(TransportError):
        external_scorer_connect(f"127.0.0.1:{port}", vocab, timeout=0.5)


def test_bad_endpoint_spec(kit):
    vocab, _, _ = kit
    with pytest.raises(TransportError):
        external_scorer_connect("nonsense", vocab)


def test_env_var_overrides_extern_endpoint(kit, monkeypatch):
    from structsql.cli import SCORER_ENDPOINT_ENV, make_scorer

    vocab, _, gold = kit
    server = ScorerServer(oracle_scorer(gold, vocab))
    try:
        monkeypatch.setenv(SCORER_ENDPOINT_ENV, server.endpoint)
        factory = make_scorer("extern:10.255.255.1:9", vocab)  # spec endpoint ignored
        scorer = factory(0)
        target = vocab.tokenize(gold)
        assert scorer.score_candidates([], [], [target[0]], "e") == [1.0]
        scorer.close()
    finally:
        server.close()
