#include "charlink/kb.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "charlink/errors.hpp"
#include "charlink/random.hpp"
#include "charlink/text.hpp"
#include "tsv.hpp"

namespace charlink {

namespace {

// NFC-normalized field; rejects empty values and reserved symbols.
std::string clean_field(std::string_view raw, std::string_view what) {
  const std::string_view trimmed = trim(raw);
  if (trimmed.empty()) throw std::invalid_argument(std::string(what) + " is empty");
  std::string value = normalize_nfc(trimmed);
  if (contains_reserved_symbol(decode_utf8(value))) {
    throw std::invalid_argument(std::string(what) + " contains a reserved boundary symbol");
  }
  return value;
}

void add_alias(KbEntity& entity, std::string alias) {
  if (alias == entity.canonical_name) return;
  if (std::find(entity.aliases.begin(), entity.aliases.end(), alias) != entity.aliases.end()) {
    return;
  }
  entity.aliases.push_back(std::move(alias));
}

void set_hrl(KbEntity& entity, std::string name) {
  if (entity.hrl_name && *entity.hrl_name != name) {
    throw std::invalid_argument("conflicting HRL names for entity '" + entity.id + "'");
  }
  entity.hrl_name = std::move(name);
}

}  // namespace

std::vector<std::string> KbEntity::name_set() const {
  std::vector<std::string> names;
  names.reserve(1 + aliases.size());
  names.push_back(canonical_name);
  names.insert(names.end(), aliases.begin(), aliases.end());
  return names;
}

KnowledgeBase KnowledgeBase::from_entities(std::vector<KbEntity> entities) {
  KnowledgeBase kb;
  for (auto& e : entities) {
    if (e.id.empty()) throw std::invalid_argument("entity id is empty");
    e.canonical_name = clean_field(e.canonical_name, "canonical name of '" + e.id + "'");
    auto aliases = std::move(e.aliases);
    e.aliases.clear();
    for (auto& a : aliases) add_alias(e, clean_field(a, "alias of '" + e.id + "'"));
    if (e.hrl_name) e.hrl_name = clean_field(*e.hrl_name, "HRL name of '" + e.id + "'");
  }
  std::sort(entities.begin(), entities.end(),
            [](const KbEntity& a, const KbEntity& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entities.size(); ++i) {
    if (entities[i].id == entities[i - 1].id) {
      throw std::invalid_argument("duplicate entity id '" + entities[i].id + "'");
    }
  }
  kb.entities_ = std::move(entities);
  kb.by_id_.reserve(kb.entities_.size());
  for (std::size_t i = 0; i < kb.entities_.size(); ++i) {
    kb.by_id_.emplace(kb.entities_[i].id, static_cast<EntityOrdinal>(i));
  }
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& kb_path,
                                  const std::optional<std::filesystem::path>& alias_path,
                                  const std::optional<std::filesystem::path>& hrl_map_path) {
  std::vector<KbEntity> entities;
  std::map<std::string, std::size_t> line_of;
  detail::for_each_row(kb_path, [&](std::span<const std::string_view> cols, std::size_t line) {
    if (cols.size() != 2 && cols.size() != 3) {
      throw ParseError(kb_path.string(), line,
                       "expected 2 or 3 columns, got " + std::to_string(cols.size()));
    }
    KbEntity e;
    e.id = std::string(trim(cols[0]));
    if (e.id.empty()) throw std::invalid_argument("entity id is empty");
    auto [it, inserted] = line_of.emplace(e.id, line);
    if (!inserted) {
      throw ParseError(kb_path.string(), line,
                       "duplicate entity id '" + e.id + "' (first seen on line " +
                           std::to_string(it->second) + ")");
    }
    e.canonical_name = clean_field(cols[1], "canonical name");
    if (cols.size() == 3 && !trim(cols[2]).empty()) e.hrl_name = clean_field(cols[2], "HRL name");
    entities.push_back(std::move(e));
  });

  KnowledgeBase kb = from_entities(std::move(entities));

  auto attach = [&kb](const std::filesystem::path& path, bool is_alias) {
    detail::for_each_row(path, [&](std::span<const std::string_view> cols, std::size_t line) {
      if (cols.size() != 2) {
        throw ParseError(path.string(), line,
                         "expected 2 columns, got " + std::to_string(cols.size()));
      }
      const std::string id(trim(cols[0]));
      const auto ordinal = kb.find(id);
      if (!ordinal) throw ParseError(path.string(), line, "unknown entity id '" + id + "'");
      KbEntity& e = kb.entities_[*ordinal];
      if (is_alias) {
        add_alias(e, clean_field(cols[1], "alias"));
      } else {
        set_hrl(e, clean_field(cols[1], "HRL name"));
      }
    });
  };
  if (alias_path) attach(*alias_path, true);
  if (hrl_map_path) attach(*hrl_map_path, false);
  return kb;
}

void KnowledgeBase::save(const std::filesystem::path& kb_path,
                         const std::filesystem::path& alias_path,
                         const std::filesystem::path& hrl_map_path) const {
  auto kb_out = detail::open_output(kb_path);
  auto alias_out = detail::open_output(alias_path);
  auto hrl_out = detail::open_output(hrl_map_path);
  for (const auto& e : entities_) {
    kb_out << e.id << '\t' << e.canonical_name << '\n';
    for (const auto& a : e.aliases) alias_out << e.id << '\t' << a << '\n';
    if (e.hrl_name) hrl_out << e.id << '\t' << *e.hrl_name << '\n';
  }
}

std::optional<EntityOrdinal> KnowledgeBase::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t KnowledgeBase::effective_name_count() const {
  std::size_t total = 0;
  for (const auto& e : entities_) total += 1 + e.aliases.size();
  return total;
}

MentionSet load_mentions(const std::filesystem::path& path, const KnowledgeBase* kb) {
  MentionSet set;
  detail::for_each_row(path, [&](std::span<const std::string_view> cols, std::size_t line) {
    if (cols.size() != 1 && cols.size() != 2) {
      throw ParseError(path.string(), line,
                       "expected 1 or 2 columns, got " + std::to_string(cols.size()));
    }
    Mention m;
    m.surface = clean_field(cols[0], "mention surface");
    if (cols.size() == 2 && !trim(cols[1]).empty()) {
      m.gold_entity_id = std::string(trim(cols[1]));
      if (kb != nullptr && !kb->find(*m.gold_entity_id)) {
        ++set.dropped_unlinkable;
        return;
      }
    }
    set.mentions.push_back(std::move(m));
  });
  return set;
}

void save_mentions(const std::filesystem::path& path, std::span<const Mention> mentions) {
  auto out = detail::open_output(path);
  for (const auto& m : mentions) {
    out << m.surface;
    if (m.gold_entity_id) out << '\t' << *m.gold_entity_id;
    out << '\n';
  }
}

std::string_view to_string(PairKind kind) {
  return kind == PairKind::EntityEntity ? "entity-entity" : "mention-entity";
}

PairDataset load_pairs(const std::filesystem::path& path, const KnowledgeBase& kb,
                       PairKind kind) {
  PairDataset data;
  detail::for_each_row(path, [&](std::span<const std::string_view> cols, std::size_t line) {
    if (cols.size() != 2) {
      throw ParseError(path.string(), line,
                       "expected 2 columns, got " + std::to_string(cols.size()));
    }
    const auto ordinal = kb.find(trim(cols[1]));
    if (!ordinal) {
      ++data.dropped;
      return;
    }
    data.pairs.push_back({clean_field(cols[0], "source string"), *ordinal, kind});
  });
  if (data.pairs.empty()) {
    throw std::runtime_error(path.string() + ": no usable training pairs");
  }
  return data;
}

void save_pairs(const std::filesystem::path& path, const PairDataset& data,
                const KnowledgeBase& kb) {
  auto out = detail::open_output(path);
  for (const auto& p : data.pairs) out << p.source << '\t' << kb[p.entity].id << '\n';
}

PairDataset concat(PairDataset a, const PairDataset& b) {
  a.pairs.insert(a.pairs.end(), b.pairs.begin(), b.pairs.end());
  a.dropped += b.dropped;
  return a;
}

std::pair<PairDataset, PairDataset> split_dev(const PairDataset& data, double fraction,
                                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("dev fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  if (data.empty()) throw std::invalid_argument("cannot split an empty dataset");
  const std::size_t n = data.size();
  auto n_dev = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) n_dev = std::clamp<std::size_t>(n_dev, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<bool> in_dev(n, false);
  for (std::size_t i = 0; i < n_dev; ++i) in_dev[order[i]] = true;

  PairDataset train;
  PairDataset dev;
  train.pairs.reserve(n - n_dev);
  dev.pairs.reserve(n_dev);
  for (std::size_t i = 0; i < n; ++i) {
    (in_dev[i] ? dev : train).pairs.push_back(data.pairs[i]);
  }
  return {std::move(train), std::move(dev)};
}

}  // namespace charlink
