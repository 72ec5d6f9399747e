#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "core/dataset.hpp"
#include "core/error.hpp"

namespace medeval {

struct Paragraph {
  int pid = 0;
  std::string text;
  std::vector<std::string> tokens;
  int dl = 0;  // |tokens|, always > 0
};

struct IngestOptions {
  int min_tokens = 1;  // paragraphs with fewer tokens are dropped
};

// Splits on blank-line boundaries; pids are assigned in surviving order.
std::vector<Paragraph> ingest_corpus(std::string_view text,
                                     const IngestOptions& opts = {});

enum class RetrievalMethod { bm25, dense, hybrid };
const char* retrieval_method_name(RetrievalMethod m);

struct RetrievalHit {
  int pid = 0;
  double score = 0.0;
  RetrievalMethod method = RetrievalMethod::bm25;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Posting {
  int pid;
  int tf;
};

// Inverted index with the non-negative ln(1 + .) IDF. Immutable once built;
// queries are safe from any number of threads.
class Bm25Index {
 public:
  Bm25Index() = default;

  static Bm25Index build(std::vector<Paragraph> paragraphs,
                         Bm25Params params = {});

  // Score of one document for a query; repeated query terms count once.
  double score(const std::vector<std::string>& query_tokens, int pid) const;

  // Top-k by score, ties broken by lower pid; |result| = min(k, N).
  std::vector<RetrievalHit> top_k(const std::vector<std::string>& query_tokens,
                                  size_t k) const;

  std::vector<double> score_all(const std::vector<std::string>& query_tokens) const;

  size_t size() const { return paragraphs_.size(); }
  double avgdl() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }
  const std::vector<Paragraph>& paragraphs() const { return paragraphs_; }
  int df(const std::string& token) const;

  // Versioned binary format with a magic header; see docs/formats.md.
  void save(const std::string& path) const;
  static Bm25Index load(const std::string& path);

 private:
  std::vector<Paragraph> paragraphs_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  Bm25Params params_{};
  double avgdl_ = 0.0;
};

double cosine_similarity(const std::vector<double>& u,
                         const std::vector<double>& v);

// pid -> vector, loaded from line-JSON {"pid": int, "vector": [..]}.
struct EmbeddingStore {
  std::vector<std::pair<int, std::vector<double>>> items;  // pid ascending
  size_t dim = 0;

  static EmbeddingStore load_jsonl(const std::string& path);
  const std::vector<double>* find(int pid) const;
};

std::vector<RetrievalHit> dense_top_k(const EmbeddingStore& embeddings,
                                      const std::vector<double>& query_vec,
                                      size_t k);

// Min-max normalizes each list (constant lists map to 0), fuses over the
// union of pids with missing scores treated as 0, then takes top-k.
std::vector<RetrievalHit> hybrid_top_k(const std::vector<RetrievalHit>& sparse,
                                       const std::vector<RetrievalHit>& dense,
                                       double w_sparse, double w_dense,
                                       size_t k);

// Query-side embeddings keyed by question id, line-JSON {"id", "vector"}.
std::unordered_map<std::string, std::vector<double>> load_query_embeddings(
    const std::string& path);

using QueryEmbedFn = std::function<std::vector<double>(const Question&)>;

class ContextRetriever {
 public:
  virtual ~ContextRetriever() = default;
  virtual std::vector<std::string> retrieve(const Question& q) const = 0;
};

class Bm25Retriever : public ContextRetriever {
 public:
  Bm25Retriever(const Bm25Index* index, int context_k)
      : index_(index), context_k_(context_k) {}
  std::vector<std::string> retrieve(const Question& q) const override;

 private:
  const Bm25Index* index_;
  int context_k_;
};

class DenseRetriever : public ContextRetriever {
 public:
  DenseRetriever(const Bm25Index* index, const EmbeddingStore* embeddings,
                 QueryEmbedFn embed, int context_k)
      : index_(index), embeddings_(embeddings), embed_(std::move(embed)),
        context_k_(context_k) {}
  std::vector<std::string> retrieve(const Question& q) const override;

 private:
  const Bm25Index* index_;  // paragraph texts
  const EmbeddingStore* embeddings_;
  QueryEmbedFn embed_;
  int context_k_;
};

class HybridRetriever : public ContextRetriever {
 public:
  HybridRetriever(const Bm25Index* index, const EmbeddingStore* embeddings,
                  QueryEmbedFn embed, double w_sparse, double w_dense,
                  int context_k)
      : index_(index), embeddings_(embeddings), embed_(std::move(embed)),
        w_sparse_(w_sparse), w_dense_(w_dense), context_k_(context_k) {}
  std::vector<std::string> retrieve(const Question& q) const override;

 private:
  const Bm25Index* index_;
  const EmbeddingStore* embeddings_;
  QueryEmbedFn embed_;
  double w_sparse_;
  double w_dense_;
  int context_k_;
};

}  // namespace medeval
