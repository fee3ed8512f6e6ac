#pragma once

#include <string>
#include <string_view>

namespace charlink {

// Reserved boundary symbols wrapped around every string before n-gram
// extraction. Both are Unicode noncharacters, so they never occur in
// interchange text; input containing them is rejected.
inline constexpr char32_t kStartSymbol = U'\uFDD0';
inline constexpr char32_t kEndSymbol = U'\uFDD1';

/// Strict UTF-8 decode. Throws std::invalid_argument on malformed input,
/// overlongs, surrogates and out-of-range scalars.
std::u32string decode_utf8(std::string_view utf8);

std::string encode_utf8(std::u32string_view text);

/// NFC-normalizes UTF-8 text. Throws std::invalid_argument on malformed input.
std::string normalize_nfc(std::string_view utf8);

/// NFC, optional simple lowercase, then UTF-32. Throws std::invalid_argument
/// if the text contains a reserved boundary symbol.
std::u32string prepare_text(std::string_view utf8, bool lowercase = false);

std::string_view trim(std::string_view s);

bool contains_reserved_symbol(std::u32string_view text);

/// Printable form of an n-gram: boundary symbols become "<s>" and "</s>".
std::string display_ngram(std::u32string_view ngram);

/// Inverse of display_ngram for query files.
std::u32string parse_display_ngram(std::string_view text);

}  // namespace charlink
