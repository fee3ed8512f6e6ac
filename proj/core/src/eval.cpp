#include "charlink/eval.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace charlink {

namespace {

std::string shortest(double x) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

}  // namespace

RecallReport evaluate_recall(std::span<const CandidateList> candidates, std::size_t k) {
  if (candidates.empty()) throw std::invalid_argument("no candidate lists to evaluate");
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  RecallReport report;
  report.top_k = k;
  report.n_mentions_total = candidates.size();
  for (const auto& list : candidates) {
    if (!list.mention.gold_entity_id) {
      throw std::invalid_argument("mention '" + list.mention.surface + "' has no gold entity");
    }
    ++report.n_mentions_scored;
    std::size_t rank = 0;
    const std::size_t limit = std::min(k, list.items.size());
    for (std::size_t r = 0; r < limit; ++r) {
      if (list.items[r].entity_id == *list.mention.gold_entity_id) {
        rank = r + 1;
        break;
      }
    }
    if (rank == 1) {
      ++report.in_top1;
    } else if (rank > 1) {
      ++report.in_top2_to_k;
    } else {
      ++report.not_in_top_k;
    }
  }
  report.n_hits = report.in_top1 + report.in_top2_to_k;
  report.recall = static_cast<double>(report.n_hits) / static_cast<double>(report.n_mentions_scored);
  return report;
}

std::vector<CandidateList> attach_gold(std::span<const Mention> mentions,
                                       std::span<const CandidateList> candidates) {
  std::map<std::string, const CandidateList*> by_surface;
  for (const auto& list : candidates) by_surface.emplace(list.mention.surface, &list);
  std::vector<CandidateList> out;
  out.reserve(mentions.size());
  for (const auto& m : mentions) {
    if (!m.gold_entity_id) continue;
    CandidateList list;
    list.mention = m;
    if (const auto it = by_surface.find(m.surface); it != by_surface.end()) {
      list.items = it->second->items;
    }
    out.push_back(std::move(list));
  }
  return out;
}

void write_recall_tsv(std::ostream& out, const RecallReport& r) {
  out << "top_k\t" << r.top_k << '\n'
      << "n_mentions_total\t" << r.n_mentions_total << '\n'
      << "n_mentions_scored\t" << r.n_mentions_scored << '\n'
      << "n_hits\t" << r.n_hits << '\n'
      << "recall\t" << shortest(r.recall) << '\n'
      << "in_top1\t" << r.in_top1 << '\n'
      << "in_top2_to_k\t" << r.in_top2_to_k << '\n'
      << "not_in_top_k\t" << r.not_in_top_k << '\n';
}

std::string recall_json(const RecallReport& r) {
  nlohmann::ordered_json j;
  j["top_k"] = r.top_k;
  j["n_mentions_total"] = r.n_mentions_total;
  j["n_mentions_scored"] = r.n_mentions_scored;
  j["n_hits"] = r.n_hits;
  j["recall"] = r.recall;
  j["buckets"] = {{"in_top1", r.in_top1},
                  {"in_top2_to_k", r.in_top2_to_k},
                  {"not_in_top_k", r.not_in_top_k}};
  return j.dump(2);
}

}  // namespace charlink
