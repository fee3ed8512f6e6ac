#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "charlink/charagram.hpp"
#include "charlink/retrieval.hpp"

namespace charlink {

/// Gold candidate recall at k with the three rank buckets: gold at rank 1,
/// gold at ranks 2..k, gold not in the top k (or absent).
struct RecallReport {
  std::size_t top_k = 0;
  std::size_t n_mentions_total = 0;
  std::size_t n_mentions_scored = 0;
  std::size_t n_hits = 0;
  double recall = 0.0;
  std::size_t in_top1 = 0;
  std::size_t in_top2_to_k = 0;
  std::size_t not_in_top_k = 0;

  friend bool operator==(const RecallReport&, const RecallReport&) = default;
};

/// Every list's mention must carry a gold id (std::invalid_argument
/// otherwise, and for empty input or k == 0). Lists shorter than k are fine.
/// `n_mentions_total` is set to the list count; callers that dropped
/// unlinkable mentions earlier may add them to it.
RecallReport evaluate_recall(std::span<const CandidateList> candidates, std::size_t k);

/// Joins mentions to candidate lists by surface. A mention without a list
/// gets an empty one (a miss). Mentions without a gold id are skipped.
std::vector<CandidateList> attach_gold(std::span<const Mention> mentions,
                                       std::span<const CandidateList> candidates);

/// Two-column TSV (`metric<TAB>value`).
void write_recall_tsv(std::ostream& out, const RecallReport& report);
std::string recall_json(const RecallReport& report);

struct Neighbor {
  std::u32string ngram;
  double cosine = 0.0;
};

struct NeighborResult {
  std::u32string query;
  bool out_of_vocabulary = false;
  std::vector<Neighbor> neighbors;
};

/// For each query n-gram, the k nearest source-side n-grams (side Source or
/// Both) by cosine between embedding rows, descending, ties by ascending id.
/// The query itself is never its own neighbor. Zero rows never match.
std::vector<NeighborResult> ngram_neighbors(const CharagramModel& model,
                                            std::span<const std::u32string> queries,
                                            std::size_t k);

}  // namespace charlink
