#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "charlink/kb.hpp"
#include "charlink/ngram.hpp"

namespace charlink {

/// Character n-gram string encoder: v = tanh(b + Σ count(g)·W[g]) over the
/// in-vocabulary n-grams g of the boundary-wrapped string.
///
/// Parameters are double precision. A model is immutable during inference
/// and may be shared by any number of reader threads; training needs
/// exclusive access.
class CharagramModel {
 public:
  static constexpr std::size_t kDefaultDim = 300;
  static constexpr double kDefaultInitScale = 0.05;

  CharagramModel() = default;

  /// Zero-initialized parameters. Throws std::invalid_argument if dim == 0.
  CharagramModel(NgramVocabulary vocab, std::size_t dim, bool lowercase = false);

  /// Parameters drawn uniformly from [-scale, scale] with a seeded generator.
  static CharagramModel initialize(NgramVocabulary vocab, std::size_t dim, std::uint64_t seed,
                                   bool lowercase = false, double scale = kDefaultInitScale);

  const NgramVocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t dim() const noexcept { return dim_; }
  bool lowercase() const noexcept { return lowercase_; }

  std::span<const double> row(NgramId id) const { return {weights_.data() + id * dim_, dim_}; }
  std::span<double> row(NgramId id) { return {weights_.data() + id * dim_, dim_}; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> weights() noexcept { return weights_; }
  std::span<const double> bias() const noexcept { return bias_; }
  std::span<double> bias() noexcept { return bias_; }

  /// NFC plus the model's lowercase setting; the text every encode path sees.
  std::u32string prepare(std::string_view utf8) const;

  /// Bag of in-vocabulary n-grams for a UTF-8 string.
  SparseBag bag(std::string_view utf8) const;

  /// b + Σ count·W[g], accumulated starting from b in ascending id order
  /// whatever order the bag is given in.
  void pre_activation(const SparseBag& bag, std::span<double> out) const;

  /// tanh of the pre-activation.
  void encode(const SparseBag& bag, std::span<double> out) const;
  std::vector<double> encode(const SparseBag& bag) const;

  /// Encodes a UTF-8 string. Throws std::invalid_argument for empty input.
  std::vector<double> encode(std::string_view utf8) const;

  /// Throws NumericError naming the first non-finite field ("W[id][j]" or "b[j]").
  void check_finite() const;

  friend bool operator==(const CharagramModel&, const CharagramModel&);

 private:
  NgramVocabulary vocab_;
  std::size_t dim_ = 0;
  bool lowercase_ = false;
  std::vector<double> weights_;  // |V| x dim, row-major
  std::vector<double> bias_;
};

/// Binary model file: "CGRAMMDL" magic, format version, dim, |V|, windows,
/// flags, then the vocabulary and row-major little-endian parameters.
void save_model(const CharagramModel& model, const std::filesystem::path& path);

/// Throws FormatError naming the offending field on version mismatch,
/// truncation, dimension mismatch or non-finite parameters.
CharagramModel load_model(const std::filesystem::path& path);

/// Encoded strings as a dense row-major matrix.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<double> rows;

  std::size_t size() const noexcept { return dim == 0 ? 0 : rows.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
};

/// "CGRAMEMB" magic, version, u64 rows, u32 dim, u32 bytes per value (4 or
/// 8), then row-major little-endian values.
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path,
                     bool single_precision = false);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

/// Vocabulary over the training source strings (source side) and every KB
/// canonical name and alias (target side), prepared with NFC and the optional
/// lowercase mapping.
NgramVocabulary build_vocabulary(const PairDataset& train, const KnowledgeBase& kb,
                                 const WindowSet& windows, bool lowercase = false);

enum class VariantKind : std::uint8_t { Canonical = 0, Alias = 1, Hrl = 2 };

std::string_view to_string(VariantKind kind);

/// Which name variants feed scoring. Canonical names are always used.
struct NameVariants {
  bool aliases = true;
  bool hrl = true;
};

struct VariantRef {
  EntityOrdinal entity;
  VariantKind kind;

  friend bool operator==(const VariantRef&, const VariantRef&) = default;
};

/// One embedding row per name variant. Rows of an entity are contiguous and
/// entities appear in ordinal (id) order: canonical, aliases, then HRL name.
struct KbEmbeddings {
  std::size_t dim = 0;
  std::vector<double> rows;  // refs.size() x dim
  std::vector<VariantRef> refs;

  std::size_t size() const noexcept { return refs.size(); }
  std::span<const double> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }

  friend bool operator==(const KbEmbeddings&, const KbEmbeddings&) = default;
};

KbEmbeddings encode_kb(const CharagramModel& model, const KnowledgeBase& kb,
                       NameVariants variants = {});

}  // namespace charlink
