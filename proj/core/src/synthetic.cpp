#include "charlink/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "charlink/random.hpp"
#include "charlink/text.hpp"

namespace charlink {

namespace {

constexpr std::string_view kConsonants = "bcdfghjklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr char32_t kCyrillicLower = 0x0430;
constexpr char32_t kCyrillicUpper = 0x0410;

using Word = std::vector<std::size_t>;  // syllable indices
using Name = std::vector<Word>;

std::vector<std::string> syllable_inventory() {
  std::vector<std::string> out;
  for (char c : kConsonants) {
    for (char v : kVowels) out.push_back(std::string{c, v});
  }
  return out;
}

std::string render(const Name& name, const std::vector<std::string>& syllables) {
  std::string out;
  for (const auto& word : name) {
    if (!out.empty()) out += ' ';
    std::string w;
    for (std::size_t s : word) w += syllables[s];
    w[0] = static_cast<char>(w[0] - 'a' + 'A');
    out += w;
  }
  return out;
}

Word random_word(Rng& rng, std::size_t inventory) {
  Word w(2 + uniform_below(rng, 2));
  for (auto& s : w) s = uniform_below(rng, inventory);
  return w;
}

Name random_name(Rng& rng, std::size_t inventory) {
  const double u = uniform_unit(rng);
  const std::size_t words = u < 0.1 ? 1 : (u < 0.8 ? 2 : 3);
  Name name(words);
  for (auto& w : name) w = random_word(rng, inventory);
  return name;
}

std::string entity_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "Q%06zu", i + 1);
  return buf;
}

}  // namespace

std::string SyntheticTask::cipher(std::string_view english) const {
  std::u32string out = decode_utf8(english);
  for (auto& cp : out) {
    if (const auto it = letter_cipher.find(cp); it != letter_cipher.end()) cp = it->second;
  }
  return encode_utf8(out);
}

void SyntheticTask::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  kb.save(dir / "kb.tsv", dir / "aliases.tsv", dir / "hrl.tsv");
  save_pairs(dir / "train_ee.tsv", train_ee, kb);
  save_pairs(dir / "train_me.tsv", train_me, kb);
  save_mentions(dir / "test_mentions.tsv", test_mentions);
  save_mentions(dir / "alias_mentions.tsv", alias_mentions);
}

SyntheticTask make_cipher_task(const SyntheticConfig& cfg) {
  if (cfg.num_entities < 2) throw std::invalid_argument("need at least two entities");
  for (double f : {cfg.heldout_fraction, cfg.perturb_fraction, cfg.alias_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("fractions must lie in [0, 1]");
  }
  Rng rng(cfg.seed);
  const auto syllables = syllable_inventory();

  SyntheticTask task;
  for (char32_t c = U'a'; c <= U'z'; ++c) {
    task.letter_cipher[c] = kCyrillicLower + (c - U'a');
    task.letter_cipher[c - U'a' + U'A'] = kCyrillicUpper + (c - U'a');
  }

  std::vector<Name> names;
  std::set<std::string> rendered;
  while (names.size() < cfg.num_entities) {
    Name name = random_name(rng, syllables.size());
    if (rendered.insert(render(name, syllables)).second) names.push_back(std::move(name));
  }

  // Aliases substitute every syllable through one fixed permutation, so they
  // look unrelated to the canonical name but reuse the same n-gram inventory.
  std::vector<std::size_t> permutation(syllables.size());
  for (std::size_t i = 0; i < permutation.size(); ++i) permutation[i] = i;
  shuffle(std::span<std::size_t>(permutation), rng);

  std::vector<std::size_t> order(cfg.num_entities);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(std::span<std::size_t>(order), rng);
  const auto n_heldout = static_cast<std::size_t>(
      std::llround(cfg.heldout_fraction * static_cast<double>(cfg.num_entities)));
  std::vector<bool> heldout(cfg.num_entities, false);
  for (std::size_t i = 0; i < n_heldout; ++i) heldout[order[i]] = true;

  shuffle(std::span<std::size_t>(order), rng);
  const auto n_alias = static_cast<std::size_t>(
      std::llround(cfg.alias_fraction * static_cast<double>(cfg.num_entities)));

  std::vector<KbEntity> entities(cfg.num_entities);
  for (std::size_t i = 0; i < cfg.num_entities; ++i) {
    entities[i].id = entity_id(i);
    entities[i].canonical_name = render(names[i], syllables);
  }
  std::vector<std::size_t> alias_entities;
  for (std::size_t i = 0; i < n_alias; ++i) {
    const std::size_t e = order[i];
    Name alias = names[e];
    for (auto& w : alias) {
      for (auto& s : w) s = permutation[s];
    }
    std::string text = render(alias, syllables);
    if (rendered.count(text) != 0) continue;
    rendered.insert(text);
    entities[e].aliases.push_back(std::move(text));
    alias_entities.push_back(e);
  }
  std::sort(alias_entities.begin(), alias_entities.end());
  task.kb = KnowledgeBase::from_entities(entities);

  std::vector<std::size_t> train_entities;
  for (std::size_t i = 0; i < cfg.num_entities; ++i) {
    if (!heldout[i]) train_entities.push_back(i);
  }
  const std::size_t total_pairs = 2 * train_entities.size();
  const std::size_t n_perturb = std::min(
      train_entities.size(),
      static_cast<std::size_t>(std::llround(cfg.perturb_fraction * static_cast<double>(total_pairs))));
  std::vector<std::size_t> perturb_order = train_entities;
  shuffle(std::span<std::size_t>(perturb_order), rng);
  std::set<std::size_t> perturbed(perturb_order.begin(),
                                  perturb_order.begin() + static_cast<std::ptrdiff_t>(n_perturb));

  auto ordinal = [&](std::size_t i) { return *task.kb.find(entities[i].id); };
  for (std::size_t i : train_entities) {
    const std::string clean = task.cipher(entities[i].canonical_name);
    task.train_ee.pairs.push_back({clean, ordinal(i), PairKind::EntityEntity});
    std::string mention = clean;
    if (perturbed.count(i) != 0) {
      Name n = names[i];
      if (n.size() > 1 && uniform_below(rng, 2) == 0) {
        n.erase(n.begin() + static_cast<std::ptrdiff_t>(uniform_below(rng, n.size())));
      } else {
        n.insert(n.begin(), random_word(rng, syllables.size()));
      }
      mention = task.cipher(render(n, syllables));
    }
    task.train_me.pairs.push_back({mention, ordinal(i), PairKind::MentionEntity});
  }
  for (std::size_t i = 0; i < cfg.num_entities; ++i) {
    if (heldout[i]) {
      task.test_mentions.push_back({task.cipher(entities[i].canonical_name), entities[i].id});
    }
  }
  for (std::size_t e : alias_entities) {
    task.alias_mentions.push_back({task.cipher(entities[e].aliases.front()), entities[e].id});
  }
  return task;
}

}  // namespace charlink
