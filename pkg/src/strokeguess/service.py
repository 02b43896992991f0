"""Live guessing-game service: session state machine, scoring, ratings,
export, analytics and the HTTP layer."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qsl, urlsplit

import numpy as np

from .corpus import (Corpus, GuessSequence, Stroke, StrokeSequence, extract_features,
                     preprocess_guess_sequence, record_to_json, spell_correct,
                     extract_nouns, RasterFeatureExtractor, FileFeatureExtractor)
from .lexicon import DEFAULT_CRITERIA, CriteriaSet, Lexicon, match
from .stats import first_guess_stats, guess_count_histogram

PHASES = ("ACTIVE", "REVEALED")


class ApiError(Exception):
    """Maps directly to a structured HTTP error response."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def normalize_guess(word: str, lexicon: Lexicon) -> str:
    """Single-guess normalization: case, spelling, noun extraction."""
    word = word.strip().lower()
    if not word:
        return ""
    word = " ".join(spell_correct(t, lexicon.spell_words) for t in word.split())
    return extract_nouns(word, lexicon.pos_tags)


class Session:
    """One live game; every mutation happens under the session lock."""

    def __init__(self, session_id: str, mode: str, subject: str,
                 sketch: StrokeSequence | None = None,
                 first_stroke: Stroke | None = None):
        self.session_id = session_id
        self.mode = mode  # "replay" or "draw"
        self.subject = subject
        self.sketch = sketch
        self.category = sketch.category if sketch else None
        self.strokes: list[Stroke] = [sketch.strokes[0]] if sketch else [first_stroke]
        self.cursor = 1
        self.human_guesses = [""]
        self.model_guesses: list[dict] = []
        self.phase = "ACTIVE"
        self.ratings: dict[tuple[str, str], int] = {}
        self.audit: list[str] = []
        self.stream = None
        self.lock = threading.Lock()

    @property
    def total(self) -> int | None:
        return len(self.sketch) if self.sketch else None

    def visible_state(self) -> dict:
        state = {
            "session_id": self.session_id,
            "mode": self.mode,
            "phase": self.phase,
            "cursor": self.cursor,
            "strokes": [s.points.tolist() for s in self.strokes],
            "human_guesses": list(self.human_guesses),
            "model_guesses": list(self.model_guesses),
        }
        if self.total is not None:
            state["total_strokes"] = self.total
        if self.phase == "REVEALED":
            state["category"] = self.category
        return state


class GatewayApp:
    """Transport-independent request handling; the HTTP layer just delegates."""

    def __init__(self, corpus: Corpus, lexicon: Lexicon, model=None,
                 criteria: CriteriaSet = DEFAULT_CRITERIA, seed: int = 0,
                 store_path=None):
        self.corpus = corpus
        self.lexicon = lexicon
        self.model = model
        self.criteria = criteria
        self.rng = np.random.default_rng(seed)
        self.sessions: dict[str, Session] = {}
        self._counter = 0
        self._store_lock = threading.Lock()
        self.store_path = Path(store_path) if store_path else None
        self._by_id = {sseq.sketch_id: (sseq, gseq) for sseq, gseq in corpus.records}
        if self.store_path and self.store_path.exists():
            self._replay_log()

    # -- persistence ---------------------------------------------------

    def _log(self, event: dict) -> None:
        if self.store_path:
            with open(self.store_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, separators=(",", ":")) + "\n")

    def _replay_log(self) -> None:
        path, self.store_path = self.store_path, None  # suppress re-logging
        try:
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    op = event.pop("op")
                    if op == "create":
                        self._create_session(**event)
                    elif op == "advance":
                        self._advance(**event)
                    elif op == "rate":
                        session = self._session(event["session_id"])
                        with session.lock:
                            self._store_rating(session, event["judge"], event["type"],
                                               event["value"])
        finally:
            self.store_path = path

    # -- session helpers -------------------------------------------------

    def _session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "session_not_found", f"unknown session {session_id!r}")
        return session

    def _step_features(self, session: Session) -> np.ndarray:
        extractor = self.model.extractor if self.model else RasterFeatureExtractor()
        if isinstance(extractor, FileFeatureExtractor):
            if session.sketch is None:
                raise ApiError(409, "no_features",
                               "file-based features cannot serve drawn sessions")
            return extractor.table[session.sketch.sketch_id][session.cursor - 1]
        return extract_features(session.strokes[:session.cursor], extractor.cfg)

    def _model_guess(self, session: Session) -> dict | None:
        if self.model is None:
            return None
        step = session.stream.step(self._step_features(session))
        return {"words": [w for w, _ in step.neighbors],
                "no_guess": bool(step.is_no_guess)}

    def _push_model_guess(self, session: Session) -> None:
        guess = self._model_guess(session)
        session.model_guesses.append(guess if guess is not None else {"words": [],
                                                                      "no_guess": True})

    # -- operations ------------------------------------------------------

    def _create_session(self, mode="replay", sketch_id=None, category=None,
                        subject="anonymous", stroke=None) -> Session:
        with self._store_lock:
            self._counter += 1
            session_id = f"s{self._counter:06d}"
        if mode == "draw":
            if not stroke:
                raise ApiError(400, "missing_stroke", "draw mode needs a first stroke")
            first = Stroke(np.clip(np.asarray(stroke, dtype=np.float64), 0.0, 1.0))
            session = Session(session_id, "draw", subject, first_stroke=first)
        else:
            if sketch_id is not None:
                if sketch_id not in self._by_id:
                    raise ApiError(404, "sketch_not_found", f"unknown sketch {sketch_id!r}")
                sseq = self._by_id[sketch_id][0]
            elif category is not None:
                pool = [s for s, _ in self.corpus.records if s.category == category]
                if not pool:
                    raise ApiError(404, "category_not_found",
                                   f"no sketches for category {category!r}")
                with self._store_lock:
                    sseq = pool[int(self.rng.integers(len(pool)))]
            else:
                if not self.corpus.records:
                    raise ApiError(409, "empty_corpus", "no sketches loaded")
                with self._store_lock:
                    sseq = self.corpus.records[int(self.rng.integers(len(self.corpus.records)))][0]
            session = Session(session_id, "replay", subject, sketch=sseq)
        if self.model is not None:
            session.stream = self.model.stream()
        self._push_model_guess(session)
        with self._store_lock:
            self.sessions[session_id] = session
        return session

    def create_session(self, body: dict) -> dict:
        mode = body.get("mode", "replay")
        if mode not in ("replay", "draw"):
            raise ApiError(400, "bad_mode", f"unknown mode {mode!r}")
        session = self._create_session(
            mode=mode, sketch_id=body.get("id"), category=body.get("category"),
            subject=str(body.get("subject", "anonymous")), stroke=body.get("stroke"))
        self._log({"op": "create", "mode": session.mode,
                   "sketch_id": session.sketch.sketch_id if session.sketch else None,
                   "subject": session.subject,
                   "stroke": session.strokes[0].points.tolist()
                   if session.mode == "draw" else None})
        state = session.visible_state()
        state["stroke"] = session.strokes[-1].points.tolist()
        return state

    def _advance(self, session_id: str, guess: str = "", stroke=None,
                 finish=False, category=None) -> dict:
        session = self._session(session_id)
        with session.lock:
            if session.phase != "ACTIVE":
                raise ApiError(409, "session_revealed",
                               "cannot advance a revealed session")
            session.human_guesses[session.cursor - 1] = str(guess)
            if session.mode == "replay":
                if session.cursor == session.total:
                    session.phase = "REVEALED"
                else:
                    session.cursor += 1
                    session.strokes.append(session.sketch.strokes[session.cursor - 1])
                    session.human_guesses.append("")
                    self._push_model_guess(session)
            else:
                if finish:
                    if not category or not str(category).strip():
                        raise ApiError(400, "missing_category",
                                       "drawn sessions need a category at reveal")
                    session.category = str(category).strip().lower()
                    session.phase = "REVEALED"
                elif stroke:
                    session.cursor += 1
                    session.strokes.append(
                        Stroke(np.clip(np.asarray(stroke, dtype=np.float64), 0.0, 1.0)))
                    session.human_guesses.append("")
                    self._push_model_guess(session)
                else:
                    raise ApiError(400, "missing_stroke",
                                   "draw mode needs a stroke or finish=true")
            if session.phase == "REVEALED":
                return {"session_id": session.session_id, "phase": "REVEALED",
                        "category": session.category, "cursor": session.cursor}
            return {"session_id": session.session_id, "phase": "ACTIVE",
                    "cursor": session.cursor,
                    "stroke": session.strokes[-1].points.tolist(),
                    "model_guess": session.model_guesses[-1]}

    def advance(self, session_id: str, body: dict) -> dict:
        result = self._advance(session_id, guess=body.get("guess", ""),
                               stroke=body.get("stroke"),
                               finish=bool(body.get("finish", False)),
                               category=body.get("category"))
        self._log({"op": "advance", "session_id": session_id,
                   "guess": body.get("guess", ""), "stroke": body.get("stroke"),
                   "finish": bool(body.get("finish", False)),
                   "category": body.get("category")})
        return result

    def score_session(self, session_id: str, body: dict) -> dict:
        session = self._session(session_id)
        with session.lock:
            if session.phase != "REVEALED":
                raise ApiError(409, "session_active",
                               "scores are available after the reveal")
            criteria = self.criteria
            if body.get("criteria"):
                criteria = CriteriaSet.parse(body["criteria"])
            truth = session.category

            def verdicts(guesses, propagate=False):
                normalized = [normalize_guess(g, self.lexicon) for g in guesses]
                if propagate:  # clicking No carries the last typed guess forward
                    last = ""
                    for i, g in enumerate(normalized):
                        last = g or last
                        normalized[i] = last
                out = []
                for g in normalized:
                    ok, fired = match(g, truth, self.lexicon.taxonomy, criteria)
                    out.append({"guess": g, "verdict": ok, "fired": sorted(fired)})
                return out

            human = verdicts(session.human_guesses, propagate=True)
            model = None
            if self.model is not None:
                words = [("" if mg["no_guess"] else mg["words"][0])
                         for mg in session.model_guesses]
                model = verdicts(words)
            return {"criteria": str(criteria), "category": truth,
                    "human": {"steps": human, "final": human[-1]},
                    "model": {"steps": model, "final": model[-1]} if model else None}

    def _store_rating(self, session: Session, judge: str, gtype: str, value: int):
        replaced = (judge, gtype) in session.ratings
        if replaced:
            session.audit.append(
                f"rating replaced for judge={judge} type={gtype}: "
                f"{session.ratings[(judge, gtype)]} -> {value}")
        session.ratings[(judge, gtype)] = value
        return replaced

    def submit_rating(self, session_id: str, body: dict) -> dict:
        session = self._session(session_id)
        with session.lock:
            if session.phase != "REVEALED":
                raise ApiError(409, "session_active",
                               "ratings are collected after the reveal")
            try:
                rating = int(body["rating"])
                judge = str(body["judge_id"])
                gtype = str(body["guesser_type"])
            except (KeyError, TypeError, ValueError):
                raise ApiError(400, "bad_request",
                               "need judge_id, guesser_type and integer rating") from None
            if gtype not in ("human", "model"):
                raise ApiError(400, "bad_guesser_type", f"unknown guesser type {gtype!r}")
            if not -2 <= rating <= 2:
                raise ApiError(400, "rating_out_of_range", "ratings lie in [-2, 2]")
            canonical = -rating if body.get("scale_reversed") else rating
            replaced = self._store_rating(session, judge, gtype, canonical)
            audit = list(session.audit)
        self._log({"op": "rate", "session_id": session_id, "judge": judge,
                   "type": gtype, "value": canonical})
        return {"stored": canonical, "replaced": replaced, "audit": audit}

    # -- export and analytics ---------------------------------------------

    def _revealed_sessions(self, category=None) -> list[Session]:
        out = []
        for session in self.sessions.values():
            if session.phase != "REVEALED":
                continue
            if category and session.category != category:
                continue
            out.append(session)
        return out

    def _session_record(self, session: Session):
        """Corpus-format record with guesses normalized like the pipeline."""
        sseq = StrokeSequence(sketch_id=session.session_id,
                              category=session.category,
                              strokes=list(session.strokes))
        raw = GuessSequence(sketch_id=session.session_id,
                            subject_id=session.subject,
                            guesses=list(session.human_guesses))
        cleaned = preprocess_guess_sequence(raw, self.lexicon)
        if cleaned is None:
            cleaned = raw  # sessions without guesses export verbatim
        return sseq, cleaned

    def export_sessions(self, category=None) -> dict:
        sessions = self._revealed_sessions(category)
        if not sessions:
            raise ApiError(404, "no_sessions", "no revealed sessions match the filter")
        corpus_lines = []
        rating_lines = []
        for session in sorted(sessions, key=lambda s: s.session_id):
            corpus_lines.append(record_to_json(*self._session_record(session)))
            for (judge, gtype), value in sorted(session.ratings.items()):
                rating_lines.append(f"{session.session_id}\t{judge}\t{gtype}\t{value}")
        return {"corpus": "\n".join(corpus_lines) + "\n",
                "ratings": ("\n".join(rating_lines) + "\n") if rating_lines else ""}

    def _analytics_corpus(self, source: str) -> Corpus:
        if source == "sessions":
            records = []
            for session in self._revealed_sessions():
                sseq, gseq = self._session_record(session)
                if any(gseq.guesses):
                    records.append((sseq, gseq))
            return Corpus(records=records)
        return self.corpus

    def analytics_histogram(self, source: str = "corpus") -> dict:
        hist = guess_count_histogram(self._analytics_corpus(source))
        return {"buckets": {"1": hist.one, "2": hist.two, "3": hist.three,
                            "4+": hist.four_plus}}

    def analytics_first_guess(self, source: str = "corpus") -> dict:
        stats = first_guess_stats(self._analytics_corpus(source))
        return {"categories": {cat: {"median": st.median, "mad": st.deviation,
                                     "count": st.count}
                               for cat, st in stats.items()}}

    # -- routing -----------------------------------------------------------

    def handle(self, method: str, path: str, body: dict, query: dict) -> tuple[int, dict]:
        try:
            parts = [p for p in path.split("/") if p]
            if method == "GET" and path == "/healthz":
                return 200, {"status": "ok"}
            if method == "POST" and path == "/sessions":
                return 201, self.create_session(body)
            if len(parts) == 2 and parts[0] == "sessions" and method == "GET":
                return 200, self._session(parts[1]).visible_state()
            if len(parts) == 3 and parts[0] == "sessions":
                sid, action = parts[1], parts[2]
                if method == "POST" and action == "advance":
                    return 200, self.advance(sid, body)
                if method == "POST" and action == "score":
                    return 200, self.score_session(sid, body)
                if method == "POST" and action == "ratings":
                    return 200, self.submit_rating(sid, body)
            if method == "GET" and path == "/export":
                return 200, self.export_sessions(query.get("category"))
            if method == "GET" and path == "/analytics/histogram":
                return 200, self.analytics_histogram(query.get("source", "corpus"))
            if method == "GET" and path == "/analytics/first-guess":
                return 200, self.analytics_first_guess(query.get("source", "corpus"))
            raise ApiError(404, "not_found", f"no route for {method} {path}")
        except ApiError as exc:
            return exc.status, {"code": exc.code, "message": exc.message}


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


_UI_TYPES = {".html": "text/html", ".js": "text/javascript",
             ".css": "text/css", ".map": "application/json"}


def make_server(app: GatewayApp, port: int = 0, host: str = "127.0.0.1",
                ui_dir=None) -> ThreadingHTTPServer:
    """Build (but do not start) a threaded HTTP server for the app."""
    ui_root = Path(ui_dir).resolve() if ui_dir else None

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send_json(self, status: int, payload: dict):
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def _maybe_serve_ui(self, path: str) -> bool:
            if ui_root is None:
                return False
            rel = "index.html" if path in ("/", "") else path.lstrip("/")
            target = (ui_root / rel).resolve()
            if not str(target).startswith(str(ui_root)) or not target.is_file():
                return False
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type",
                             _UI_TYPES.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return True

        def _dispatch(self, method: str):
            parsed = urlsplit(self.path)
            body = {}
            if method == "POST":
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                if raw:
                    try:
                        body = json.loads(raw)
                    except json.JSONDecodeError:
                        self._send_json(400, {"code": "bad_json",
                                              "message": "request body is not JSON"})
                        return
            if method == "GET" and self._maybe_serve_ui(parsed.path):
                return
            status, payload = app.handle(method, parsed.path, body,
                                         dict(parse_qsl(parsed.query)))
            self._send_json(status, payload)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()

    return ThreadingHTTPServer((host, port), Handler)
