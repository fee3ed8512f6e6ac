#include <algorithm>
#include <cmath>

#include "charlink/eval.hpp"

namespace charlink {

std::vector<NeighborResult> ngram_neighbors(const CharagramModel& model,
                                            std::span<const std::u32string> queries,
                                            std::size_t k) {
  const auto& vocab = model.vocabulary();
  std::vector<double> norms(vocab.size());
  std::vector<NgramId> source_ids;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto id = static_cast<NgramId>(i);
    double sq = 0.0;
    for (double x : model.row(id)) sq += x * x;
    norms[i] = std::sqrt(sq);
    if (vocab.side(id) != NgramSide::Target) source_ids.push_back(id);
  }

  std::vector<NeighborResult> results;
  results.reserve(queries.size());
  for (const auto& q : queries) {
    NeighborResult result;
    result.query = q;
    const auto qid = vocab.find(q);
    if (!qid) {
      result.out_of_vocabulary = true;
      results.push_back(std::move(result));
      continue;
    }
    const auto qrow = model.row(*qid);
    const double qn = norms[*qid];
    std::vector<std::pair<double, NgramId>> scored;
    if (qn > 0.0) {
      scored.reserve(source_ids.size());
      for (NgramId id : source_ids) {
        if (id == *qid || norms[id] == 0.0) continue;
        const auto row = model.row(id);
        double dot = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) dot += qrow[j] * row[j];
        scored.emplace_back(dot / (qn * norms[id]), id);
      }
    }
    const auto better = [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    };
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), better);
    for (std::size_t i = 0; i < take; ++i) {
      result.neighbors.push_back({vocab.ngram(scored[i].second), scored[i].first});
    }
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace charlink
