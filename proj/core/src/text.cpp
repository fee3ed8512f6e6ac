#include "charlink/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <stdexcept>

namespace charlink {

namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

const icu::Normalizer2& nfc_instance() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || nfc == nullptr) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  return *nfc;
}

std::u32string normalize_utf32(std::u32string_view text) {
  icu::UnicodeString src = icu::UnicodeString::fromUTF32(
      reinterpret_cast<const UChar32*>(text.data()), static_cast<int32_t>(text.size()));
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2& nfc = nfc_instance();
  if (nfc.isNormalized(src, status) && U_SUCCESS(status)) return std::u32string(text);
  status = U_ZERO_ERROR;
  icu::UnicodeString out = nfc.normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");
  std::u32string result(static_cast<std::size_t>(out.countChar32()), U'\0');
  status = U_ZERO_ERROR;
  out.toUTF32(reinterpret_cast<UChar32*>(result.data()), static_cast<int32_t>(result.size()),
              status);
  if (U_FAILURE(status) && status != U_STRING_NOT_TERMINATED_WARNING) {
    throw std::runtime_error("UTF-32 conversion failed");
  }
  return result;
}

}  // namespace

std::u32string decode_utf8(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  std::size_t i = 0;
  while (i < utf8.size()) {
    const auto lead = static_cast<unsigned char>(utf8[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
      min = 0x80;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
      min = 0x800;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
      min = 0x10000;
    } else {
      throw std::invalid_argument("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > utf8.size()) {
      throw std::invalid_argument("truncated UTF-8 sequence at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k < len; ++k) {
      const auto c = static_cast<unsigned char>(utf8[i + k]);
      if (!is_continuation(c)) {
        throw std::invalid_argument("invalid UTF-8 continuation at offset " +
                                    std::to_string(i + k));
      }
      cp = (cp << 6) | (c & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw std::invalid_argument("invalid UTF-8 scalar at offset " + std::to_string(i));
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::string normalize_nfc(std::string_view utf8) {
  return encode_utf8(normalize_utf32(decode_utf8(utf8)));
}

std::u32string prepare_text(std::string_view utf8, bool lowercase) {
  std::u32string text = normalize_utf32(decode_utf8(utf8));
  if (contains_reserved_symbol(text)) {
    throw std::invalid_argument("text contains a reserved boundary symbol");
  }
  if (lowercase) {
    for (char32_t& cp : text) cp = static_cast<char32_t>(u_tolower(static_cast<UChar32>(cp)));
  }
  return text;
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\v\f";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

bool contains_reserved_symbol(std::u32string_view text) {
  return text.find(kStartSymbol) != std::u32string_view::npos ||
         text.find(kEndSymbol) != std::u32string_view::npos;
}

std::string display_ngram(std::u32string_view ngram) {
  std::string out;
  for (char32_t cp : ngram) {
    if (cp == kStartSymbol) {
      out += "<s>";
    } else if (cp == kEndSymbol) {
      out += "</s>";
    } else {
      out += encode_utf8(std::u32string_view(&cp, 1));
    }
  }
  return out;
}

std::u32string parse_display_ngram(std::string_view text) {
  std::u32string out;
  if (text.starts_with("<s>")) {
    out.push_back(kStartSymbol);
    text.remove_prefix(3);
  }
  bool end = false;
  if (text.ends_with("</s>")) {
    end = true;
    text.remove_suffix(4);
  }
  out += normalize_utf32(decode_utf8(text));
  if (end) out.push_back(kEndSymbol);
  return out;
}

}  // namespace charlink
