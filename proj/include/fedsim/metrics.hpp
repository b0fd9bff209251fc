#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fedsim::metrics {

// F1 of the positive class (label 1); 0 when precision + recall == 0.
double f1_binary(std::span<const int> preds, std::span<const int> golds);

// Fraction of exact matches.
double accuracy(std::span<const int> preds, std::span<const int> golds);

// Mean of 1/rank over queries; ranks are 1-based positions of the gold item.
double mrr(std::span<const int> ranks);

using TokenSeq = std::vector<std::string>;

// Clipped n-gram match/total counts for n = 1..4 plus lengths: the unit that
// corpus-level BLEU accumulates before taking any ratio.
struct BleuCounts {
  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> total{};
  std::size_t pred_len = 0;
  std::size_t gold_len = 0;

  BleuCounts& operator+=(const BleuCounts& other);
};

BleuCounts bleu_counts(const TokenSeq& pred, const TokenSeq& gold);

// Geometric mean of the four clipped precisions (uniform 1/4 weights) times
// the brevity penalty exp(1 - gold/pred) when pred is shorter than gold.
// Precisions of order n >= 2 use add-one smoothing: (matched+1)/(total+1).
// An empty prediction scores 0.
double bleu_from_counts(const BleuCounts& counts);

double bleu4(const TokenSeq& pred, const TokenSeq& gold);
double corpus_bleu4(std::span<const std::pair<TokenSeq, TokenSeq>> pairs);

// Micro-averaged exact-match accuracy over aligned token positions. Every
// pair must have equal pred/gold lengths.
double token_accuracy(std::span<const std::pair<TokenSeq, TokenSeq>> pairs);

enum class TaskKind { classification, retrieval, generation, token_completion };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

struct RetrievalQuery {
  std::vector<std::string> ranking;  // candidates in ranked order
  std::string gold;                  // appears exactly once in `ranking`
};

// A batch of evaluation records for one task kind. `evaluate()` returns the
// task's metric values by name.
struct EvalBatch {
  TaskKind task = TaskKind::classification;
  std::vector<int> preds, golds;                      // classification
  std::vector<RetrievalQuery> queries;                // retrieval
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;   // generation / token_completion

  void validate() const;
  std::map<std::string, double> evaluate() const;
};

void save_eval_batch(const std::filesystem::path& path, const EvalBatch& batch);
EvalBatch load_eval_batch(const std::filesystem::path& path);

}  // namespace fedsim::metrics
