#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace charlink {

/// Dense position of an entity inside a KnowledgeBase. Entities are stored in
/// ascending id order, so comparing ordinals is the same as comparing ids.
using EntityOrdinal = std::uint32_t;

/// An English KB entry. All strings are NFC-normalized UTF-8.
struct KbEntity {
  std::string id;
  std::string canonical_name;
  std::vector<std::string> aliases;  // deduplicated, never contains canonical_name
  std::optional<std::string> hrl_name;

  /// The effective English name set: canonical name first, then aliases.
  std::vector<std::string> name_set() const;

  friend bool operator==(const KbEntity&, const KbEntity&) = default;
};

/// Immutable, id-sorted index over KB entities. Safe for concurrent reads.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  /// Loads `entity_id<TAB>canonical_name[<TAB>hrl_name]` plus optional alias
  /// (`entity_id<TAB>alias`) and HRL map (`entity_id<TAB>hrl_name`) files.
  /// Throws ParseError on malformed rows, unknown ids and duplicate ids.
  static KnowledgeBase load(const std::filesystem::path& kb_path,
                            const std::optional<std::filesystem::path>& alias_path = std::nullopt,
                            const std::optional<std::filesystem::path>& hrl_map_path = std::nullopt);

  /// Validates and indexes in-memory entities (names are NFC-normalized,
  /// aliases deduplicated). Throws std::invalid_argument on duplicate ids or
  /// empty canonical names.
  static KnowledgeBase from_entities(std::vector<KbEntity> entities);

  /// Writes the KB, alias and HRL map files in the load() format.
  void save(const std::filesystem::path& kb_path, const std::filesystem::path& alias_path,
            const std::filesystem::path& hrl_map_path) const;

  std::size_t size() const noexcept { return entities_.size(); }
  bool empty() const noexcept { return entities_.empty(); }
  const KbEntity& operator[](EntityOrdinal ordinal) const { return entities_[ordinal]; }
  std::span<const KbEntity> entities() const noexcept { return entities_; }
  std::optional<EntityOrdinal> find(std::string_view id) const;

  /// Sum of |A| over all entities.
  std::size_t effective_name_count() const;

  friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
    return a.entities_ == b.entities_;
  }

 private:
  std::vector<KbEntity> entities_;
  std::unordered_map<std::string, EntityOrdinal> by_id_;
};

/// A mention surface with its optional gold entity id.
struct Mention {
  std::string surface;
  std::optional<std::string> gold_entity_id;

  friend bool operator==(const Mention&, const Mention&) = default;
};

struct MentionSet {
  std::vector<Mention> mentions;
  std::size_t dropped_unlinkable = 0;
};

/// Loads `surface[<TAB>gold_entity_id]`. When `kb` is given, mentions whose
/// gold id is not in the KB are dropped and counted.
MentionSet load_mentions(const std::filesystem::path& path, const KnowledgeBase* kb = nullptr);

void save_mentions(const std::filesystem::path& path, std::span<const Mention> mentions);

enum class PairKind : std::uint8_t { EntityEntity, MentionEntity };

std::string_view to_string(PairKind kind);

struct TrainingPair {
  std::string source;
  EntityOrdinal entity = 0;
  PairKind kind = PairKind::EntityEntity;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

/// Training pairs; duplicates are kept on purpose (frequency acts as weight).
struct PairDataset {
  std::vector<TrainingPair> pairs;
  std::size_t dropped = 0;  // rows whose entity id was missing from the KB

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

/// Loads `source_string<TAB>entity_id`. Unknown entity ids are dropped and
/// counted; an empty result throws std::runtime_error("no usable training pairs").
PairDataset load_pairs(const std::filesystem::path& path, const KnowledgeBase& kb, PairKind kind);

void save_pairs(const std::filesystem::path& path, const PairDataset& data, const KnowledgeBase& kb);

PairDataset concat(PairDataset a, const PairDataset& b);

/// Deterministic disjoint split; dev gets round(fraction * n) pairs, clamped
/// so that neither side is empty when n >= 2. Relative order is preserved.
std::pair<PairDataset, PairDataset> split_dev(const PairDataset& data, double fraction,
                                              std::uint64_t seed);

}  // namespace charlink
