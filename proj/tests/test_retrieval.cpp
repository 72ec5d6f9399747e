#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "core/retrieval.hpp"
#include "core/text.hpp"
#include "test_util.hpp"

using namespace medeval;
using namespace medeval::testutil;

namespace {

// Independent oracle: a naive per-document loop over the scoring formula,
// sharing no code with Bm25Index.
double oracle_bm25(const std::vector<std::vector<std::string>>& docs,
                   const std::vector<std::string>& query, size_t pid,
                   double k1, double b) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0.0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  const double avgdl = total_len / n;
  const double dl = static_cast<double>(docs[pid].size());

  std::set<std::string> terms(query.begin(), query.end());
  double score = 0.0;
  for (const std::string& t : terms) {
    int tf = 0;
    for (const std::string& w : docs[pid])
      if (w == t) ++tf;
    if (tf == 0) continue;
    int df = 0;
    for (const auto& d : docs) {
      for (const std::string& w : d) {
        if (w == t) {
          ++df;
          break;
        }
      }
    }
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    score += idf * tf / (tf + k1 * (1.0 - b + b * dl / avgdl));
  }
  return score;
}

std::vector<Paragraph> corpus_from_docs(const std::vector<std::vector<std::string>>& docs) {
  std::string text;
  for (size_t i = 0; i < docs.size(); ++i) {
    for (size_t w = 0; w < docs[i].size(); ++w) {
      text += docs[i][w];
      if (w + 1 < docs[i].size()) text += " ";
    }
    text += "\n\n";
  }
  return ingest_corpus(text);
}

const std::vector<std::vector<std::string>> kThreeDocs = {
    {"aspirin", "treats", "headache"},
    {"insulin", "treats", "diabetes"},
    {"headache", "and", "fever"},
};

}  // namespace

TEST_CASE("ingest splits on blank lines and normalizes tokens") {
  auto paras = ingest_corpus("para one.\n\npara two.");
  REQUIRE(paras.size() == 2);
  CHECK(paras[0].dl == 2);
  CHECK(paras[1].dl == 2);
  CHECK(paras[0].tokens == std::vector<std::string>{"para", "one"});
  CHECK(paras[0].pid == 0);
  CHECK(paras[1].pid == 1);

  auto mixed = ingest_corpus("A b C");
  REQUIRE(mixed.size() == 1);
  CHECK(mixed[0].tokens == std::vector<std::string>{"a", "b", "c"});

  CHECK(thrown_code([] { ingest_corpus("  \n\n \t \n"); }) == ErrorCode::empty_corpus);

  IngestOptions opts;
  opts.min_tokens = 3;
  auto filtered = ingest_corpus("one two\n\none two three", opts);
  REQUIRE(filtered.size() == 1);
  CHECK(filtered[0].dl == 3);
  CHECK(thrown_code([&] { ingest_corpus("one two", opts); }) == ErrorCode::empty_corpus);
}

TEST_CASE("paragraphs keep multi-line text and windows line endings") {
  auto paras = ingest_corpus("line one\r\nline two\r\n\r\nnext para\r\n");
  REQUIRE(paras.size() == 2);
  CHECK(paras[0].text == "line one\nline two");
  CHECK(paras[0].dl == 4);
}

TEST_CASE("bm25 score matches the hand-evaluated formula on the 3-doc corpus") {
  auto index = Bm25Index::build(corpus_from_docs(kThreeDocs));
  // N=3, df(headache)=2: idf = ln(1 + 1.5/2.5) = ln(1.6); dl = avgdl = 3,
  // so the tf part is 1/(1 + k1) with k1 = 1.2.
  const double expected = std::log(1.6) * (1.0 / 2.2);
  CHECK(expected == doctest::Approx(0.21363801329351619).epsilon(1e-12));
  CHECK(index.score({"headache"}, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(index.score({"headache"}, 0) ==
        doctest::Approx(oracle_bm25(kThreeDocs, {"headache"}, 0, 1.2, 0.75))
            .epsilon(1e-12));

  SUBCASE("absent terms contribute zero") {
    CHECK(index.score({"headache"}, 1) == 0.0);
    CHECK(index.score({"unseen", "words"}, 0) == 0.0);
  }
  SUBCASE("repeated query terms count once") {
    CHECK(index.score({"headache", "headache"}, 0) ==
          index.score({"headache"}, 0));
  }
  SUBCASE("equal-length corpus reduces the tf part to tf/(tf+k1)") {
    // every doc has dl = avgdl, so score = idf * tf/(tf + k1)
    const double idf = std::log(1.0 + (3.0 - 1.0 + 0.5) / (1.0 + 0.5));
    CHECK(index.score({"fever"}, 2) ==
          doctest::Approx(idf * 1.0 / (1.0 + 1.2)).epsilon(1e-12));
  }
  SUBCASE("unknown pid") {
    CHECK(thrown_code([&] { index.score({"x"}, 3); }) == ErrorCode::unknown_pid);
    CHECK(thrown_code([&] { index.score({"x"}, -1); }) == ErrorCode::unknown_pid);
  }
}

TEST_CASE("bm25 top-k ranks D2 first for 'headache and fever'") {
  auto index = Bm25Index::build(corpus_from_docs(kThreeDocs));
  auto query = std::vector<std::string>{"headache", "and", "fever"};

  // brute-force all three docs through the oracle
  std::vector<double> oracle(3);
  for (size_t pid = 0; pid < 3; ++pid)
    oracle[pid] = oracle_bm25(kThreeDocs, query, pid, 1.2, 0.75);
  REQUIRE(oracle[2] > oracle[0]);
  REQUIRE(oracle[0] > oracle[1]);

  auto top1 = index.top_k(query, 1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].pid == 2);
  CHECK(top1[0].method == RetrievalMethod::bm25);

  auto all = index.top_k(query, 10);  // k > N returns all docs, sorted
  REQUIRE(all.size() == 3);
  CHECK(all[0].pid == 2);
  CHECK(all[1].pid == 0);
  CHECK(all[2].pid == 1);
  for (size_t i = 0; i + 1 < all.size(); ++i) CHECK(all[i].score >= all[i + 1].score);

  CHECK(thrown_code([&] { index.top_k(query, 0); }) == ErrorCode::invalid_argument);
}

TEST_CASE("identical documents tie and order by pid") {
  std::vector<std::vector<std::string>> docs = {
      {"fever", "and", "chills"},
      {"chills", "fever", "and"},  // same multiset
      {"unrelated", "words", "here"},
  };
  auto index = Bm25Index::build(corpus_from_docs(docs));
  auto hits = index.top_k({"fever"}, 3);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].pid == 0);
  CHECK(hits[1].pid == 1);
  CHECK(hits[0].score == hits[1].score);
}

TEST_CASE("bm25 matches the naive oracle on randomized corpora") {
  std::mt19937_64 rng(1234);
  const std::vector<std::string> vocab = {"w0", "w1", "w2", "w3", "w4", "w5",
                                          "w6", "w7", "w8", "w9", "wa", "wb"};
  for (int iter = 0; iter < 30; ++iter) {
    const size_t n_docs = 1 + rng() % 20;
    std::vector<std::vector<std::string>> docs(n_docs);
    for (auto& d : docs) {
      const size_t len = 1 + rng() % 30;
      for (size_t w = 0; w < len; ++w) d.push_back(vocab[rng() % vocab.size()]);
    }
    std::vector<std::string> query;
    const size_t q_len = 1 + rng() % 5;
    for (size_t w = 0; w < q_len; ++w)
      query.push_back(rng() % 4 == 0 ? "unseen" : vocab[rng() % vocab.size()]);

    auto index = Bm25Index::build(corpus_from_docs(docs));
    REQUIRE(index.size() == n_docs);
    for (size_t pid = 0; pid < n_docs; ++pid) {
      const double got = index.score(query, static_cast<int>(pid));
      const double want = oracle_bm25(docs, query, pid, 1.2, 0.75);
      CHECK(std::abs(got - want) <= 1e-9);
    }

    // full ranking equals a stable sort of oracle scores
    auto hits = index.top_k(query, n_docs);
    std::vector<int> want_order(n_docs);
    for (size_t i = 0; i < n_docs; ++i) want_order[i] = static_cast<int>(i);
    std::vector<double> oracle_scores(n_docs);
    for (size_t pid = 0; pid < n_docs; ++pid)
      oracle_scores[pid] = oracle_bm25(docs, query, pid, 1.2, 0.75);
    std::sort(want_order.begin(), want_order.end(), [&](int a, int b) {
      if (oracle_scores[a] != oracle_scores[b])
        return oracle_scores[a] > oracle_scores[b];
      return a < b;
    });
    REQUIRE(hits.size() == n_docs);
    for (size_t i = 0; i < n_docs; ++i) CHECK(hits[i].pid == want_order[i]);
  }
}

TEST_CASE("df-only changes keep single-term rankings stable") {
  // Equal-length documents plus an equal-length filler keep avgdl fixed, so
  // adding a document without the query term rescales every score by the
  // same IDF factor and the ranking must not move.
  std::mt19937_64 rng(77);
  const size_t doc_len = 6;
  for (int iter = 0; iter < 50; ++iter) {
    const size_t n_docs = 2 + rng() % 10;
    std::vector<std::vector<std::string>> docs(n_docs);
    for (auto& d : docs)
      for (size_t w = 0; w < doc_len; ++w)
        d.push_back(rng() % 3 == 0 ? "target" : "filler" + std::to_string(rng() % 4));

    std::vector<std::string> query = {"target"};
    auto before = Bm25Index::build(corpus_from_docs(docs)).top_k(query, n_docs);

    auto extended = docs;
    extended.push_back(std::vector<std::string>(doc_len, "nothing"));
    auto after = Bm25Index::build(corpus_from_docs(extended)).top_k(query, n_docs + 1);

    std::vector<int> before_pids, after_pids;
    for (const auto& h : before) before_pids.push_back(h.pid);
    for (const auto& h : after)
      if (h.pid < static_cast<int>(n_docs)) after_pids.push_back(h.pid);
    CHECK(before_pids == after_pids);
  }
}

TEST_CASE("cosine similarity basics") {
  CHECK(cosine_similarity({1, 0}, {0, 1}) == 0.0);
  CHECK(cosine_similarity({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity({1, 0}, {-1, 0}) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(thrown_code([] { cosine_similarity({0, 0}, {1, 0}); }) == ErrorCode::zero_vector);
  CHECK(thrown_code([] { cosine_similarity({1, 0}, {1, 0, 0}); }) ==
        ErrorCode::dimension_mismatch);
  CHECK(thrown_code([] { cosine_similarity({}, {}); }) == ErrorCode::dimension_mismatch);
}

TEST_CASE("cosine similarity is invariant to positive rescaling") {
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int iter = 0; iter < 200; ++iter) {
    const size_t dim = 1 + rng() % 8;
    std::vector<double> u(dim), v(dim);
    double nu = 0, nv = 0;
    for (size_t i = 0; i < dim; ++i) {
      u[i] = coord(rng);
      v[i] = coord(rng);
      nu += u[i] * u[i];
      nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) continue;
    const double c = scale(rng);
    std::vector<double> cv(v);
    for (double& x : cv) x *= c;
    CHECK(std::abs(cosine_similarity(u, v) - cosine_similarity(u, cv)) <= 1e-12);
  }
}

TEST_CASE("dense top-k orders by cosine with pid tie-break") {
  EmbeddingStore store;
  store.dim = 3;
  store.items = {{0, {1, 0, 0}}, {1, {0, 1, 0}}, {2, {0.5, 0.5, 0}}};

  auto hits = dense_top_k(store, {1, 0, 0}, 3);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].pid == 0);
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hits[0].method == RetrievalMethod::dense);
  CHECK(hits[1].pid == 2);
  CHECK(hits[2].pid == 1);

  SUBCASE("orthogonal query ties everything at zero, pid order") {
    auto zeros = dense_top_k(store, {0, 0, 1}, 3);
    REQUIRE(zeros.size() == 3);
    CHECK(zeros[0].pid == 0);
    CHECK(zeros[1].pid == 1);
    CHECK(zeros[2].pid == 2);
    for (const auto& h : zeros) CHECK(h.score == 0.0);
  }
  SUBCASE("dimension mismatch") {
    CHECK(thrown_code([&] { dense_top_k(store, {1, 0}, 2); }) ==
          ErrorCode::dimension_mismatch);
  }
}

TEST_CASE("hybrid fusion degenerates to each side and fuses overlaps") {
  std::vector<RetrievalHit> sparse = {{0, 3.0, RetrievalMethod::bm25},
                                      {1, 1.0, RetrievalMethod::bm25},
                                      {2, 2.0, RetrievalMethod::bm25}};
  std::vector<RetrievalHit> dense = {{0, 0.1, RetrievalMethod::dense},
                                     {1, 0.9, RetrievalMethod::dense},
                                     {2, 0.5, RetrievalMethod::dense}};

  SUBCASE("weight (1,0) reproduces the sparse order") {
    auto fused = hybrid_top_k(sparse, dense, 1.0, 0.0, 3);
    REQUIRE(fused.size() == 3);
    CHECK(fused[0].pid == 0);
    CHECK(fused[1].pid == 2);
    CHECK(fused[2].pid == 1);
  }
  SUBCASE("weight (0,1) reproduces the dense order") {
    auto fused = hybrid_top_k(sparse, dense, 0.0, 1.0, 3);
    CHECK(fused[0].pid == 1);
    CHECK(fused[1].pid == 2);
    CHECK(fused[2].pid == 0);
  }
  SUBCASE("a single shared pid scores w_sparse + w_dense") {
    std::vector<RetrievalHit> s1 = {{7, 5.0, RetrievalMethod::bm25},
                                    {8, 1.0, RetrievalMethod::bm25}};
    std::vector<RetrievalHit> d1 = {{7, 0.8, RetrievalMethod::dense},
                                    {9, 0.2, RetrievalMethod::dense}};
    auto fused = hybrid_top_k(s1, d1, 0.3, 0.6, 1);
    REQUIRE(fused.size() == 1);
    CHECK(fused[0].pid == 7);
    CHECK(fused[0].score == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(fused[0].method == RetrievalMethod::hybrid);
  }
  SUBCASE("constant lists normalize to zero") {
    std::vector<RetrievalHit> flat = {{0, 2.0, RetrievalMethod::bm25},
                                      {1, 2.0, RetrievalMethod::bm25}};
    auto fused = hybrid_top_k(flat, {}, 1.0, 1.0, 2);
    REQUIRE(fused.size() == 2);
    CHECK(fused[0].score == 0.0);
    CHECK(fused[0].pid == 0);
  }
  SUBCASE("weights must be usable") {
    CHECK(thrown_code([&] { hybrid_top_k(sparse, dense, 0.0, 0.0, 1); }) ==
          ErrorCode::invalid_argument);
    CHECK(thrown_code([&] { hybrid_top_k(sparse, dense, -1.0, 1.0, 1); }) ==
          ErrorCode::invalid_argument);
  }
}

TEST_CASE("hybrid ranking is invariant under joint weight rescaling") {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> score(0.0, 10.0);
  std::uniform_real_distribution<double> weight(0.05, 5.0);
  std::uniform_real_distribution<double> factor(0.1, 50.0);
  for (int iter = 0; iter < 100; ++iter) {
    const size_t n = 2 + rng() % 10;
    std::vector<RetrievalHit> sparse, dense;
    for (size_t pid = 0; pid < n; ++pid) {
      if (rng() % 4) sparse.push_back({static_cast<int>(pid), score(rng), RetrievalMethod::bm25});
      if (rng() % 4) dense.push_back({static_cast<int>(pid), score(rng), RetrievalMethod::dense});
    }
    if (sparse.empty() && dense.empty()) continue;
    const double ws = weight(rng), wd = weight(rng), c = factor(rng);
    auto a = hybrid_top_k(sparse, dense, ws, wd, n);
    auto b = hybrid_top_k(sparse, dense, c * ws, c * wd, n);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].pid == b[i].pid);
  }
}

TEST_CASE("index save/load round-trips scoring behavior") {
  TempDir dir("idx");
  Bm25Params params{1.5, 0.6};
  auto index = Bm25Index::build(corpus_from_docs(kThreeDocs), params);
  const std::string path = dir.file("corpus.idx");
  index.save(path);

  auto loaded = Bm25Index::load(path);
  CHECK(loaded.size() == index.size());
  CHECK(loaded.avgdl() == index.avgdl());
  CHECK(loaded.params().k1 == params.k1);
  CHECK(loaded.params().b == params.b);
  for (int pid = 0; pid < 3; ++pid) {
    CHECK(loaded.score({"headache", "fever"}, pid) ==
          index.score({"headache", "fever"}, pid));
    CHECK(loaded.paragraphs()[pid].text == index.paragraphs()[pid].text);
  }

  SUBCASE("bad magic is rejected") {
    const std::string bogus = dir.file("bogus.idx");
    write_text(bogus, "definitely not an index");
    auto msg = thrown_message([&] { Bm25Index::load(bogus); });
    CHECK(msg.find("magic") != std::string::npos);
  }
  SUBCASE("missing file") {
    CHECK(thrown_code([&] { Bm25Index::load(dir.file("absent.idx")); }) ==
          ErrorCode::io_error);
  }
}

TEST_CASE("embedding store loads and validates line-JSON") {
  TempDir dir("emb");
  const std::string path = dir.file("vecs.jsonl");
  write_text(path,
             "{\"pid\": 1, \"vector\": [0.0, 1.0]}\n"
             "{\"pid\": 0, \"vector\": [1.0, 0.0]}\n");
  auto store = EmbeddingStore::load_jsonl(path);
  CHECK(store.dim == 2);
  REQUIRE(store.items.size() == 2);
  CHECK(store.items[0].first == 0);  // sorted by pid
  REQUIRE(store.find(1) != nullptr);
  CHECK((*store.find(1))[1] == 1.0);
  CHECK(store.find(5) == nullptr);

  SUBCASE("dimension mismatch") {
    write_text(path, "{\"pid\": 0, \"vector\": [1.0]}\n{\"pid\": 1, \"vector\": [1.0, 2.0]}\n");
    CHECK(thrown_code([&] { EmbeddingStore::load_jsonl(path); }) ==
          ErrorCode::dimension_mismatch);
  }
  SUBCASE("duplicate pid") {
    write_text(path, "{\"pid\": 0, \"vector\": [1.0]}\n{\"pid\": 0, \"vector\": [2.0]}\n");
    CHECK(thrown_code([&] { EmbeddingStore::load_jsonl(path); }) ==
          ErrorCode::duplicate_id);
  }
  SUBCASE("zero vector") {
    write_text(path, "{\"pid\": 0, \"vector\": [0.0, 0.0]}\n");
    CHECK(thrown_code([&] { EmbeddingStore::load_jsonl(path); }) ==
          ErrorCode::zero_vector);
  }
}

TEST_CASE("retrievers return paragraph texts for a question") {
  auto index = Bm25Index::build(corpus_from_docs(kThreeDocs));
  Question q;
  q.id = "q1";
  q.stem = "What helps with headache and fever today?";
  q.options = {"a", "b"};
  q.gold = 'A';

  Bm25Retriever bm25(&index, 2);
  auto texts = bm25.retrieve(q);
  REQUIRE(texts.size() == 2);
  CHECK(texts[0] == "headache and fever");

  EmbeddingStore store;
  store.dim = 2;
  store.items = {{0, {1, 0}}, {1, {0, 1}}, {2, {1, 1}}};
  QueryEmbedFn embed = [](const Question&) { return std::vector<double>{0, 1}; };

  DenseRetriever dense(&index, &store, embed, 1);
  auto dense_texts = dense.retrieve(q);
  REQUIRE(dense_texts.size() == 1);
  CHECK(dense_texts[0] == "insulin treats diabetes");

  HybridRetriever hybrid(&index, &store, embed, 1.0, 1.0, 1);
  auto hybrid_texts = hybrid.retrieve(q);
  CHECK(hybrid_texts.size() == 1);
}
