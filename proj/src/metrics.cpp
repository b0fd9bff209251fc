#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json_util.hpp"

namespace fedsim::metrics {

double f1_binary(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size())
    throw std::invalid_argument("f1_binary: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != 0 && preds[i] != 1) || (golds[i] != 0 && golds[i] != 1))
      throw std::invalid_argument("f1_binary: labels must be 0 or 1");
    if (preds[i] == 1 && golds[i] == 1) ++tp;
    else if (preds[i] == 1) ++fp;
    else if (golds[i] == 1) ++fn;
  }
  const double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double accuracy(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == golds[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double mrr(std::span<const int> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: empty input");
  double sum = 0.0;
  for (int r : ranks) {
    if (r < 1) throw std::invalid_argument("mrr: ranks must be positive");
    sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(ranks.size());
}

BleuCounts& BleuCounts::operator+=(const BleuCounts& other) {
  for (std::size_t n = 0; n < 4; ++n) {
    matched[n] += other.matched[n];
    total[n] += other.total[n];
  }
  pred_len += other.pred_len;
  gold_len += other.gold_len;
  return *this;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const TokenSeq& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace

BleuCounts bleu_counts(const TokenSeq& pred, const TokenSeq& gold) {
  if (gold.empty()) throw std::invalid_argument("bleu: empty gold sequence");
  BleuCounts c;
  c.pred_len = pred.size();
  c.gold_len = gold.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto pred_counts = ngram_counts(pred, n);
    const auto gold_counts = ngram_counts(gold, n);
    std::size_t matched = 0;
    for (const auto& [gram, cnt] : pred_counts) {
      const auto it = gold_counts.find(gram);
      if (it != gold_counts.end()) matched += std::min(cnt, it->second);
    }
    c.matched[n - 1] = matched;
    c.total[n - 1] = pred.size() >= n ? pred.size() - n + 1 : 0;
  }
  return c;
}

double bleu_from_counts(const BleuCounts& c) {
  if (c.pred_len == 0) return 0.0;
  if (c.matched[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    // add-one smoothing on orders >= 2 keeps short outputs scoreable
    const double matched = n == 0 ? static_cast<double>(c.matched[n])
                                  : static_cast<double>(c.matched[n] + 1);
    const double total = n == 0 ? static_cast<double>(c.total[n])
                                : static_cast<double>(c.total[n] + 1);
    log_sum += 0.25 * std::log(matched / total);
  }
  double brevity = 1.0;
  if (c.pred_len < c.gold_len)
    brevity = std::exp(1.0 - static_cast<double>(c.gold_len) / static_cast<double>(c.pred_len));
  return brevity * std::exp(log_sum);
}

double bleu4(const TokenSeq& pred, const TokenSeq& gold) {
  return bleu_from_counts(bleu_counts(pred, gold));
}

double corpus_bleu4(std::span<const std::pair<TokenSeq, TokenSeq>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("corpus_bleu4: no segment pairs");
  BleuCounts agg;
  for (const auto& [pred, gold] : pairs) agg += bleu_counts(pred, gold);
  return bleu_from_counts(agg);
}

double token_accuracy(std::span<const std::pair<TokenSeq, TokenSeq>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("token_accuracy: no sequence pairs");
  std::size_t hits = 0, total = 0;
  for (const auto& [pred, gold] : pairs) {
    if (pred.size() != gold.size())
      throw std::invalid_argument("token_accuracy: pred/gold length mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == gold[i]) ++hits;
    total += pred.size();
  }
  if (total == 0) throw std::invalid_argument("token_accuracy: no tokens");
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::classification: return "classification";
    case TaskKind::retrieval: return "retrieval";
    case TaskKind::generation: return "generation";
    case TaskKind::token_completion: return "token_completion";
  }
  throw std::logic_error("unknown task kind");
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "retrieval") return TaskKind::retrieval;
  if (s == "generation") return TaskKind::generation;
  if (s == "token_completion") return TaskKind::token_completion;
  throw std::invalid_argument("unknown task kind: " + s);
}

void EvalBatch::validate() const {
  switch (task) {
    case TaskKind::classification:
      if (preds.empty() || preds.size() != golds.size())
        throw std::invalid_argument("classification batch: bad pred/gold lists");
      break;
    case TaskKind::retrieval: {
      if (queries.empty()) throw std::invalid_argument("retrieval batch: no queries");
      for (const auto& q : queries) {
        const auto cnt = std::count(q.ranking.begin(), q.ranking.end(), q.gold);
        if (cnt != 1)
          throw std::invalid_argument(
              "retrieval batch: gold item must appear exactly once among candidates");
      }
      break;
    }
    case TaskKind::generation:
    case TaskKind::token_completion:
      if (pairs.empty()) throw std::invalid_argument("sequence batch: no pairs");
      break;
  }
}

std::map<std::string, double> EvalBatch::evaluate() const {
  validate();
  std::map<std::string, double> out;
  switch (task) {
    case TaskKind::classification: {
      out["accuracy"] = accuracy(preds, golds);
      const bool binary = std::all_of(preds.begin(), preds.end(),
                                      [](int v) { return v == 0 || v == 1; }) &&
                          std::all_of(golds.begin(), golds.end(),
                                      [](int v) { return v == 0 || v == 1; });
      if (binary) out["f1"] = f1_binary(preds, golds);
      break;
    }
    case TaskKind::retrieval: {
      std::vector<int> ranks;
      ranks.reserve(queries.size());
      for (const auto& q : queries) {
        const auto it = std::find(q.ranking.begin(), q.ranking.end(), q.gold);
        ranks.push_back(static_cast<int>(it - q.ranking.begin()) + 1);
      }
      out["mrr"] = mrr(ranks);
      break;
    }
    case TaskKind::generation:
      out["bleu4"] = corpus_bleu4(pairs);
      break;
    case TaskKind::token_completion:
      out["token_accuracy"] = token_accuracy(pairs);
      break;
  }
  return out;
}

void save_eval_batch(const std::filesystem::path& path, const EvalBatch& batch) {
  batch.validate();
  detail::json j;
  j["format_version"] = 1;
  j["task"] = to_string(batch.task);
  switch (batch.task) {
    case TaskKind::classification:
      j["preds"] = batch.preds;
      j["golds"] = batch.golds;
      break;
    case TaskKind::retrieval: {
      auto& arr = j["queries"] = detail::json::array();
      for (const auto& q : batch.queries)
        arr.push_back({{"ranking", q.ranking}, {"gold", q.gold}});
      break;
    }
    case TaskKind::generation:
    case TaskKind::token_completion: {
      auto& arr = j["pairs"] = detail::json::array();
      for (const auto& [pred, gold] : batch.pairs)
        arr.push_back({{"pred", pred}, {"gold", gold}});
      break;
    }
  }
  detail::write_text_file(path, j.dump());
}

EvalBatch load_eval_batch(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path);
  const std::string where = "eval batch " + path.string();
  EvalBatch batch;
  batch.task = task_kind_from_string(detail::require_field<std::string>(j, "task", where));
  switch (batch.task) {
    case TaskKind::classification:
      batch.preds = detail::require_field<std::vector<int>>(j, "preds", where);
      batch.golds = detail::require_field<std::vector<int>>(j, "golds", where);
      break;
    case TaskKind::retrieval: {
      if (!j.contains("queries")) throw std::runtime_error(where + ": missing queries");
      for (const auto& q : j.at("queries")) {
        RetrievalQuery out;
        out.ranking = detail::require_field<std::vector<std::string>>(q, "ranking", where);
        out.gold = detail::require_field<std::string>(q, "gold", where);
        batch.queries.push_back(std::move(out));
      }
      break;
    }
    case TaskKind::generation:
    case TaskKind::token_completion: {
      if (!j.contains("pairs")) throw std::runtime_error(where + ": missing pairs");
      for (const auto& p : j.at("pairs"))
        batch.pairs.emplace_back(detail::require_field<TokenSeq>(p, "pred", where),
                                 detail::require_field<TokenSeq>(p, "gold", where));
      break;
    }
  }
  batch.validate();
  return batch;
}

}  // namespace fedsim::metrics
