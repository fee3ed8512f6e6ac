#include "charlink/charagram.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "binary_io.hpp"
#include "charlink/errors.hpp"
#include "charlink/random.hpp"
#include "charlink/text.hpp"

namespace charlink {

namespace {

constexpr std::string_view kModelMagic = "CGRAMMDL";
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kFlagLowercase = 1u;
constexpr std::string_view kEmbeddingMagic = "CGRAMEMB";
constexpr std::uint32_t kEmbeddingVersion = 1;

}  // namespace

CharagramModel::CharagramModel(NgramVocabulary vocab, std::size_t dim, bool lowercase)
    : vocab_(std::move(vocab)), dim_(dim), lowercase_(lowercase) {
  if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
  weights_.assign(vocab_.size() * dim_, 0.0);
  bias_.assign(dim_, 0.0);
}

CharagramModel CharagramModel::initialize(NgramVocabulary vocab, std::size_t dim,
                                          std::uint64_t seed, bool lowercase, double scale) {
  CharagramModel model(std::move(vocab), dim, lowercase);
  Rng rng(seed);
  for (double& w : model.weights_) w = (2.0 * uniform_unit(rng) - 1.0) * scale;
  for (double& b : model.bias_) b = (2.0 * uniform_unit(rng) - 1.0) * scale;
  return model;
}

std::u32string CharagramModel::prepare(std::string_view utf8) const {
  return prepare_text(utf8, lowercase_);
}

SparseBag CharagramModel::bag(std::string_view utf8) const { return vocab_.bag(prepare(utf8)); }

void CharagramModel::pre_activation(const SparseBag& bag, std::span<double> out) const {
  const auto by_id = [](const BagEntry& a, const BagEntry& b) { return a.id < b.id; };
  if (!std::is_sorted(bag.begin(), bag.end(), by_id)) {
    // Accumulation order is part of the result's bits; always go by id.
    SparseBag sorted = bag;
    std::sort(sorted.begin(), sorted.end(), by_id);
    pre_activation(sorted, out);
    return;
  }
  std::copy(bias_.begin(), bias_.end(), out.begin());
  for (const auto& [id, count] : bag) {
    const double c = static_cast<double>(count);
    const double* w = weights_.data() + static_cast<std::size_t>(id) * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] += c * w[j];
  }
}

void CharagramModel::encode(const SparseBag& bag, std::span<double> out) const {
  pre_activation(bag, out);
  for (double& x : out) x = std::tanh(x);
}

std::vector<double> CharagramModel::encode(const SparseBag& bag) const {
  std::vector<double> out(dim_);
  encode(bag, out);
  return out;
}

std::vector<double> CharagramModel::encode(std::string_view utf8) const {
  const auto text = prepare(utf8);
  if (text.empty()) throw std::invalid_argument("cannot encode an empty string");
  return encode(vocab_.bag(text));
}

void CharagramModel::check_finite() const {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!std::isfinite(weights_[i])) {
      throw NumericError("non-finite parameter W[" + std::to_string(i / dim_) + "][" +
                         std::to_string(i % dim_) + "]");
    }
  }
  for (std::size_t j = 0; j < bias_.size(); ++j) {
    if (!std::isfinite(bias_[j])) {
      throw NumericError("non-finite parameter b[" + std::to_string(j) + "]");
    }
  }
}

bool operator==(const CharagramModel& a, const CharagramModel& b) {
  return a.dim_ == b.dim_ && a.lowercase_ == b.lowercase_ && a.vocab_ == b.vocab_ &&
         a.weights_ == b.weights_ && a.bias_ == b.bias_;
}

void save_model(const CharagramModel& model, const std::filesystem::path& path) {
  detail::BinaryWriter out(path);
  const auto& vocab = model.vocabulary();
  out.put_bytes(kModelMagic);
  out.put<std::uint32_t>(kModelVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(model.dim()));
  out.put<std::uint64_t>(vocab.size());
  const auto windows = vocab.windows().sizes();
  out.put<std::uint32_t>(static_cast<std::uint32_t>(windows.size()));
  for (int n : windows) out.put<std::uint32_t>(static_cast<std::uint32_t>(n));
  out.put<std::uint32_t>(model.lowercase() ? kFlagLowercase : 0u);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto& g = vocab.ngram(static_cast<NgramId>(i));
    out.put<std::uint8_t>(static_cast<std::uint8_t>(vocab.side(static_cast<NgramId>(i))));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(g.size()));
    for (char32_t cp : g) out.put<std::uint32_t>(static_cast<std::uint32_t>(cp));
  }
  out.put_span(model.weights());
  out.put_span(model.bias());
  out.finish();
}

CharagramModel load_model(const std::filesystem::path& path) {
  detail::BinaryReader in(path);
  if (in.get_bytes(kModelMagic.size(), "magic") != kModelMagic) {
    throw FormatError("magic", "not a charagram model file");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kModelVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(version) +
                                     " (expected " + std::to_string(kModelVersion) + ")");
  }
  const auto dim = in.get<std::uint32_t>("dim");
  if (dim == 0) throw FormatError("dim", "must be positive");
  const auto vocab_size = in.get<std::uint64_t>("vocab_size");
  const auto n_windows = in.get<std::uint32_t>("windows");
  if (n_windows == 0 || n_windows > 64) throw FormatError("windows", "bad window count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < n_windows; ++i) {
    const auto n = in.get<std::uint32_t>("windows");
    if (n == 0 || n > 1024) throw FormatError("windows", "bad window size");
    sizes.push_back(static_cast<int>(n));
  }
  const auto flags = in.get<std::uint32_t>("flags");
  if ((flags & ~kFlagLowercase) != 0) throw FormatError("flags", "unknown flag bits");

  // Every vocabulary entry takes at least 5 bytes; reject absurd sizes early.
  if (vocab_size > in.remaining() / 5) throw FormatError("vocab_size", "exceeds file size");
  std::vector<Ngram> ngrams;
  std::vector<NgramSide> sides;
  ngrams.reserve(vocab_size);
  sides.reserve(vocab_size);
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    sides.push_back(static_cast<NgramSide>(in.get<std::uint8_t>("vocabulary")));
    const auto len = in.get<std::uint32_t>("vocabulary");
    if (len == 0 || len > 1024) throw FormatError("vocabulary", "bad n-gram length");
    Ngram g(len, U'\0');
    for (auto& cp : g) cp = static_cast<char32_t>(in.get<std::uint32_t>("vocabulary"));
    ngrams.push_back(std::move(g));
  }
  NgramVocabulary vocab;
  try {
    vocab = NgramVocabulary::from_parts(std::move(ngrams), std::move(sides),
                                        WindowSet(std::move(sizes)));
  } catch (const std::invalid_argument& e) {
    throw FormatError("vocabulary", e.what());
  }

  const std::uint64_t expected = (vocab_size * dim + dim) * sizeof(double);
  if (in.remaining() != expected) {
    throw FormatError("W", "dimension mismatch: header says " + std::to_string(vocab_size) +
                               " rows of width " + std::to_string(dim) + " (" +
                               std::to_string(expected) + " bytes), file has " +
                               std::to_string(in.remaining()) + " bytes of parameters");
  }
  CharagramModel model(std::move(vocab), dim, (flags & kFlagLowercase) != 0);
  in.get_span(model.weights(), "W");
  in.get_span(model.bias(), "b");
  in.expect_end();
  try {
    model.check_finite();
  } catch (const NumericError& e) {
    const std::string what = e.what();
    throw FormatError(what.find("b[") != std::string::npos ? "b" : "W", what);
  }
  return model;
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path,
                     bool single_precision) {
  if (m.dim == 0 || m.rows.size() % m.dim != 0) {
    throw std::invalid_argument("embedding matrix shape is inconsistent");
  }
  detail::BinaryWriter out(path);
  out.put_bytes(kEmbeddingMagic);
  out.put<std::uint32_t>(kEmbeddingVersion);
  out.put<std::uint64_t>(m.size());
  out.put<std::uint32_t>(static_cast<std::uint32_t>(m.dim));
  out.put<std::uint32_t>(single_precision ? 4u : 8u);
  if (single_precision) {
    const std::vector<float> narrow(m.rows.begin(), m.rows.end());
    out.put_span(std::span<const float>(narrow));
  } else {
    out.put_span(std::span<const double>(m.rows));
  }
  out.finish();
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  detail::BinaryReader in(path);
  if (in.get_bytes(kEmbeddingMagic.size(), "magic") != kEmbeddingMagic) {
    throw FormatError("magic", "not an embeddings file");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kEmbeddingVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(version));
  }
  const auto n = in.get<std::uint64_t>("rows");
  const auto dim = in.get<std::uint32_t>("dim");
  const auto width = in.get<std::uint32_t>("precision");
  if (dim == 0) throw FormatError("dim", "must be positive");
  if (width != 4 && width != 8) throw FormatError("precision", "must be 4 or 8 bytes");
  if (in.remaining() != n * dim * width) {
    throw FormatError("rows", "size mismatch: header says " + std::to_string(n) + " x " +
                                  std::to_string(dim) + ", file has " +
                                  std::to_string(in.remaining()) + " bytes of values");
  }
  EmbeddingMatrix m;
  m.dim = dim;
  m.rows.resize(n * dim);
  if (width == 4) {
    std::vector<float> narrow(m.rows.size());
    in.get_span(std::span<float>(narrow), "rows");
    std::copy(narrow.begin(), narrow.end(), m.rows.begin());
  } else {
    in.get_span(std::span<double>(m.rows), "rows");
  }
  in.expect_end();
  return m;
}

NgramVocabulary build_vocabulary(const PairDataset& train, const KnowledgeBase& kb,
                                 const WindowSet& windows, bool lowercase) {
  if (train.empty()) throw std::invalid_argument("cannot build a vocabulary without training pairs");
  std::vector<std::u32string> sources;
  sources.reserve(train.size());
  for (const auto& p : train.pairs) sources.push_back(prepare_text(p.source, lowercase));
  std::vector<std::u32string> targets;
  targets.reserve(kb.effective_name_count());
  for (const auto& e : kb.entities()) {
    for (const auto& name : e.name_set()) targets.push_back(prepare_text(name, lowercase));
  }
  return NgramVocabulary::build(sources, targets, windows);
}

std::string_view to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::Canonical:
      return "canonical";
    case VariantKind::Alias:
      return "alias";
    case VariantKind::Hrl:
      return "hrl";
  }
  return "unknown";
}

KbEmbeddings encode_kb(const CharagramModel& model, const KnowledgeBase& kb,
                       NameVariants variants) {
  KbEmbeddings out;
  out.dim = model.dim();
  out.refs.reserve(kb.effective_name_count() + kb.size());
  for (std::size_t i = 0; i < kb.size(); ++i) {
    const auto ordinal = static_cast<EntityOrdinal>(i);
    const auto& e = kb[ordinal];
    out.refs.push_back({ordinal, VariantKind::Canonical});
    if (variants.aliases) {
      for (std::size_t a = 0; a < e.aliases.size(); ++a) {
        out.refs.push_back({ordinal, VariantKind::Alias});
      }
    }
    if (variants.hrl && e.hrl_name) out.refs.push_back({ordinal, VariantKind::Hrl});
  }
  out.rows.resize(out.refs.size() * out.dim);
  std::size_t r = 0;
  auto emit = [&](const std::string& name) {
    model.encode(model.bag(name), std::span<double>(out.rows.data() + r * out.dim, out.dim));
    ++r;
  };
  for (std::size_t i = 0; i < kb.size(); ++i) {
    const auto& e = kb[static_cast<EntityOrdinal>(i)];
    emit(e.canonical_name);
    if (variants.aliases) {
      for (const auto& a : e.aliases) emit(a);
    }
    if (variants.hrl && e.hrl_name) emit(*e.hrl_name);
  }
  return out;
}

}  // namespace charlink
