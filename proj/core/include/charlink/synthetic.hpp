#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "charlink/kb.hpp"

namespace charlink {

/// A synthetic transliteration task. English-side names are random syllable
/// sequences over Latin letters; "source language" strings are a fixed
/// letter-for-letter substitution into Cyrillic, so the two alphabets share
/// no characters and the model has to learn the character mapping.
struct SyntheticConfig {
  std::size_t num_entities = 1000;
  double heldout_fraction = 0.2;  // entities with no training pairs, used for testing
  double perturb_fraction = 0.2;  // share of all training pairs with a dropped or extra word
  double alias_fraction = 0.0;    // entities given a syllable-substituted alias
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  KnowledgeBase kb;
  PairDataset train_ee;                // ciphered canonical name -> entity
  PairDataset train_me;                // ciphered, possibly perturbed, name -> entity
  std::vector<Mention> test_mentions;  // ciphered canonical names of held-out entities
  std::vector<Mention> alias_mentions; // ciphered aliases of alias-bearing entities
  std::map<char32_t, char32_t> letter_cipher;

  /// Applies the letter cipher to a UTF-8 English string.
  std::string cipher(std::string_view english) const;

  /// kb.tsv, aliases.tsv, hrl.tsv, train_ee.tsv, train_me.tsv,
  /// test_mentions.tsv, alias_mentions.tsv.
  void write(const std::filesystem::path& dir) const;
};

SyntheticTask make_cipher_task(const SyntheticConfig& cfg);

}  // namespace charlink
