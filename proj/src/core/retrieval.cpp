#include "core/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

#include "core/text.hpp"

namespace medeval {

using nlohmann::json;

namespace {

constexpr char kIndexMagic[8] = {'M', 'E', 'V', 'I', 'D', 'X', '0', '1'};
constexpr uint32_t kIndexVersion = 1;
constexpr const char* kTokenizerId = "simple-v1";

void sort_hits(std::vector<RetrievalHit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pid < b.pid;
  });
}

std::vector<std::string> distinct_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::string> out(tokens);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

const char* retrieval_method_name(RetrievalMethod m) {
  switch (m) {
    case RetrievalMethod::bm25: return "bm25";
    case RetrievalMethod::dense: return "dense";
    case RetrievalMethod::hybrid: return "hybrid";
  }
  return "unknown";
}

std::vector<Paragraph> ingest_corpus(std::string_view text,
                                     const IngestOptions& opts) {
  std::vector<Paragraph> out;
  std::vector<std::string> lines_buf;
  auto flush = [&] {
    if (lines_buf.empty()) return;
    std::string raw;
    for (size_t i = 0; i < lines_buf.size(); ++i) {
      raw += lines_buf[i];
      if (i + 1 < lines_buf.size()) raw += "\n";
    }
    lines_buf.clear();
    Paragraph p;
    p.text = std::move(raw);
    p.tokens = tokenize(p.text);
    p.dl = static_cast<int>(p.tokens.size());
    if (p.dl < opts.min_tokens || p.dl == 0) return;
    p.pid = static_cast<int>(out.size());
    out.push_back(std::move(p));
  };

  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      flush();
    } else {
      lines_buf.emplace_back(line);
    }
  }
  flush();

  if (out.empty())
    throw Error(ErrorCode::empty_corpus, "no paragraph survived ingestion");
  return out;
}

Bm25Index Bm25Index::build(std::vector<Paragraph> paragraphs, Bm25Params params) {
  Bm25Index idx;
  idx.params_ = params;
  idx.paragraphs_ = std::move(paragraphs);
  double total_dl = 0.0;
  for (size_t i = 0; i < idx.paragraphs_.size(); ++i) {
    Paragraph& p = idx.paragraphs_[i];
    p.pid = static_cast<int>(i);
    total_dl += p.dl;
    std::unordered_map<std::string, int> tf;
    for (const std::string& t : p.tokens) ++tf[t];
    for (const auto& [token, count] : tf)
      idx.postings_[token].push_back({p.pid, count});
  }
  // pids are appended in order, so postings lists are already sorted.
  idx.avgdl_ = idx.paragraphs_.empty() ? 0.0 : total_dl / idx.paragraphs_.size();
  return idx;
}

int Bm25Index::df(const std::string& token) const {
  auto it = postings_.find(token);
  return it == postings_.end() ? 0 : static_cast<int>(it->second.size());
}

double Bm25Index::score(const std::vector<std::string>& query_tokens, int pid) const {
  if (pid < 0 || pid >= static_cast<int>(paragraphs_.size()))
    throw Error(ErrorCode::unknown_pid, "pid " + std::to_string(pid) +
                                            " outside [0, " +
                                            std::to_string(paragraphs_.size()) + ")");
  const double n = static_cast<double>(paragraphs_.size());
  const double dl = paragraphs_[pid].dl;
  double total = 0.0;
  for (const std::string& t : distinct_tokens(query_tokens)) {
    auto it = postings_.find(t);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    auto pit = std::lower_bound(list.begin(), list.end(), pid,
                                [](const Posting& p, int v) { return p.pid < v; });
    if (pit == list.end() || pit->pid != pid) continue;
    const double df_t = static_cast<double>(list.size());
    const double tf = static_cast<double>(pit->tf);
    const double idf = std::log(1.0 + (n - df_t + 0.5) / (df_t + 0.5));
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl_);
    total += idf * tf / (tf + norm);
  }
  return total;
}

std::vector<double> Bm25Index::score_all(const std::vector<std::string>& query_tokens) const {
  const double n = static_cast<double>(paragraphs_.size());
  std::vector<double> scores(paragraphs_.size(), 0.0);
  for (const std::string& t : distinct_tokens(query_tokens)) {
    auto it = postings_.find(t);
    if (it == postings_.end()) continue;
    const double df_t = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n - df_t + 0.5) / (df_t + 0.5));
    for (const Posting& p : it->second) {
      const double dl = paragraphs_[p.pid].dl;
      const double tf = static_cast<double>(p.tf);
      const double norm = params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl_);
      scores[p.pid] += idf * tf / (tf + norm);
    }
  }
  return scores;
}

std::vector<RetrievalHit> Bm25Index::top_k(const std::vector<std::string>& query_tokens,
                                           size_t k) const {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be >= 1");
  std::vector<double> scores = score_all(query_tokens);
  std::vector<RetrievalHit> hits;
  hits.reserve(scores.size());
  for (size_t pid = 0; pid < scores.size(); ++pid)
    hits.push_back({static_cast<int>(pid), scores[pid], RetrievalMethod::bm25});
  sort_hits(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::io_error, "truncated index file: " + path);
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
  uint64_t len = read_pod<uint64_t>(in, path);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorCode::io_error, "truncated index file: " + path);
  return s;
}

}  // namespace

void Bm25Index::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write index: " + path);
  out.write(kIndexMagic, sizeof(kIndexMagic));
  write_pod<uint32_t>(out, kIndexVersion);
  write_pod<double>(out, params_.k1);
  write_pod<double>(out, params_.b);
  write_string(out, kTokenizerId);
  write_pod<uint64_t>(out, paragraphs_.size());
  for (const Paragraph& p : paragraphs_) write_string(out, p.text);
  if (!out) throw Error(ErrorCode::io_error, "short write: " + path);
}

Bm25Index Bm25Index::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open index: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0)
    throw Error(ErrorCode::io_error, "not an index file (bad magic): " + path);
  uint32_t version = read_pod<uint32_t>(in, path);
  if (version != kIndexVersion)
    throw Error(ErrorCode::io_error,
                "unsupported index version " + std::to_string(version));
  Bm25Params params;
  params.k1 = read_pod<double>(in, path);
  params.b = read_pod<double>(in, path);
  std::string tokenizer = read_string(in, path);
  if (tokenizer != kTokenizerId)
    throw Error(ErrorCode::io_error, "unsupported tokenizer '" + tokenizer + "'");
  uint64_t count = read_pod<uint64_t>(in, path);
  std::vector<Paragraph> paragraphs;
  paragraphs.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Paragraph p;
    p.text = read_string(in, path);
    p.tokens = tokenize(p.text);
    p.dl = static_cast<int>(p.tokens.size());
    paragraphs.push_back(std::move(p));
  }
  return build(std::move(paragraphs), params);
}

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.empty() || v.empty() || u.size() != v.size())
    throw Error(ErrorCode::dimension_mismatch,
                "vector sizes " + std::to_string(u.size()) + " vs " +
                    std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0)
    throw Error(ErrorCode::zero_vector, "cosine similarity of an all-zero vector");
  double sim = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(sim, -1.0, 1.0);
}

EmbeddingStore EmbeddingStore::load_jsonl(const std::string& path) {
  EmbeddingStore store;
  std::string content = read_file(path);
  std::string_view view(content);
  size_t line_no = 0;
  size_t pos = 0;
  std::set<int> seen;
  while (pos <= view.size()) {
    size_t nl = view.find('\n', pos);
    std::string_view line = view.substr(
        pos, nl == std::string_view::npos ? view.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? view.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::malformed_record,
                  path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.contains("pid") || !rec["pid"].is_number_integer() ||
        !rec.contains("vector") || !rec["vector"].is_array())
      throw Error(ErrorCode::malformed_record,
                  path + " line " + std::to_string(line_no) +
                      ": expected {\"pid\": int, \"vector\": [..]}");
    int pid = rec["pid"].get<int>();
    if (!seen.insert(pid).second)
      throw Error(ErrorCode::duplicate_id,
                  path + " line " + std::to_string(line_no) + ": duplicate pid " +
                      std::to_string(pid));
    std::vector<double> vec = rec["vector"].get<std::vector<double>>();
    if (vec.empty())
      throw Error(ErrorCode::dimension_mismatch,
                  path + " line " + std::to_string(line_no) + ": empty vector");
    if (store.dim == 0) store.dim = vec.size();
    if (vec.size() != store.dim)
      throw Error(ErrorCode::dimension_mismatch,
                  path + " line " + std::to_string(line_no) + ": dimension " +
                      std::to_string(vec.size()) + " != " + std::to_string(store.dim));
    double norm = 0.0;
    for (double x : vec) norm += x * x;
    if (norm == 0.0)
      throw Error(ErrorCode::zero_vector,
                  path + " line " + std::to_string(line_no) + ": all-zero vector");
    store.items.emplace_back(pid, std::move(vec));
  }
  std::sort(store.items.begin(), store.items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return store;
}

const std::vector<double>* EmbeddingStore::find(int pid) const {
  auto it = std::lower_bound(items.begin(), items.end(), pid,
                             [](const auto& a, int v) { return a.first < v; });
  if (it == items.end() || it->first != pid) return nullptr;
  return &it->second;
}

std::vector<RetrievalHit> dense_top_k(const EmbeddingStore& embeddings,
                                      const std::vector<double>& query_vec,
                                      size_t k) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be >= 1");
  if (embeddings.dim != 0 && query_vec.size() != embeddings.dim)
    throw Error(ErrorCode::dimension_mismatch,
                "query dimension " + std::to_string(query_vec.size()) +
                    " != store dimension " + std::to_string(embeddings.dim));
  std::vector<RetrievalHit> hits;
  hits.reserve(embeddings.items.size());
  for (const auto& [pid, vec] : embeddings.items)
    hits.push_back({pid, cosine_similarity(query_vec, vec), RetrievalMethod::dense});
  sort_hits(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

std::vector<RetrievalHit> hybrid_top_k(const std::vector<RetrievalHit>& sparse,
                                       const std::vector<RetrievalHit>& dense,
                                       double w_sparse, double w_dense,
                                       size_t k) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be >= 1");
  if (w_sparse < 0.0 || w_dense < 0.0 || (w_sparse == 0.0 && w_dense == 0.0))
    throw Error(ErrorCode::invalid_argument,
                "fusion weights must be >= 0 and not both 0");

  auto normalized = [](const std::vector<RetrievalHit>& hits) {
    std::unordered_map<int, double> out;
    if (hits.empty()) return out;
    double lo = hits[0].score, hi = hits[0].score;
    for (const RetrievalHit& h : hits) {
      lo = std::min(lo, h.score);
      hi = std::max(hi, h.score);
    }
    for (const RetrievalHit& h : hits)
      out[h.pid] = (hi > lo) ? (h.score - lo) / (hi - lo) : 0.0;
    return out;
  };

  auto s_norm = normalized(sparse);
  auto d_norm = normalized(dense);

  std::set<int> pids;
  for (const auto& [pid, _] : s_norm) pids.insert(pid);
  for (const auto& [pid, _] : d_norm) pids.insert(pid);

  std::vector<RetrievalHit> fused;
  fused.reserve(pids.size());
  for (int pid : pids) {
    double s = 0.0;
    if (auto it = s_norm.find(pid); it != s_norm.end()) s += w_sparse * it->second;
    if (auto it = d_norm.find(pid); it != d_norm.end()) s += w_dense * it->second;
    fused.push_back({pid, s, RetrievalMethod::hybrid});
  }
  sort_hits(fused);
  if (fused.size() > k) fused.resize(k);
  return fused;
}

std::unordered_map<std::string, std::vector<double>> load_query_embeddings(
    const std::string& path) {
  std::unordered_map<std::string, std::vector<double>> out;
  std::string content = read_file(path);
  std::string_view view(content);
  size_t line_no = 0;
  size_t pos = 0;
  size_t dim = 0;
  while (pos <= view.size()) {
    size_t nl = view.find('\n', pos);
    std::string_view line = view.substr(
        pos, nl == std::string_view::npos ? view.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? view.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::malformed_record,
                  path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.contains("id") || !rec["id"].is_string() ||
        !rec.contains("vector") || !rec["vector"].is_array())
      throw Error(ErrorCode::malformed_record,
                  path + " line " + std::to_string(line_no) +
                      ": expected {\"id\": str, \"vector\": [..]}");
    std::string id = rec["id"].get<std::string>();
    std::vector<double> vec = rec["vector"].get<std::vector<double>>();
    if (dim == 0) dim = vec.size();
    if (vec.empty() || vec.size() != dim)
      throw Error(ErrorCode::dimension_mismatch,
                  path + " line " + std::to_string(line_no) + ": bad dimension");
    if (!out.emplace(std::move(id), std::move(vec)).second)
      throw Error(ErrorCode::duplicate_id,
                  path + " line " + std::to_string(line_no) + ": duplicate id");
  }
  return out;
}

namespace {

std::vector<std::string> texts_for(const Bm25Index& index,
                                   const std::vector<RetrievalHit>& hits) {
  std::vector<std::string> out;
  out.reserve(hits.size());
  for (const RetrievalHit& h : hits) {
    if (h.pid < 0 || h.pid >= static_cast<int>(index.size()))
      throw Error(ErrorCode::unknown_pid,
                  "embedding pid " + std::to_string(h.pid) +
                      " has no paragraph in the index");
    out.push_back(index.paragraphs()[h.pid].text);
  }
  return out;
}

}  // namespace

std::vector<std::string> Bm25Retriever::retrieve(const Question& q) const {
  auto hits = index_->top_k(tokenize(q.stem), static_cast<size_t>(context_k_));
  return texts_for(*index_, hits);
}

std::vector<std::string> DenseRetriever::retrieve(const Question& q) const {
  auto hits = dense_top_k(*embeddings_, embed_(q), static_cast<size_t>(context_k_));
  return texts_for(*index_, hits);
}

std::vector<std::string> HybridRetriever::retrieve(const Question& q) const {
  size_t n = index_->size();
  auto sparse = index_->top_k(tokenize(q.stem), n);
  auto dense = dense_top_k(*embeddings_, embed_(q), n);
  auto fused = hybrid_top_k(sparse, dense, w_sparse_, w_dense_,
                            static_cast<size_t>(context_k_));
  return texts_for(*index_, fused);
}

}  // namespace medeval
