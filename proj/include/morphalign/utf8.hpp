#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace morphalign::utf8 {

// Length of the UTF-8 sequence introduced by lead byte `b`. Invalid lead
// bytes and stray continuation bytes count as a one-byte character.
inline std::size_t sequence_length(unsigned char b) noexcept {
  if (b < 0x80) return 1;
  if ((b >> 5) == 0x6) return 2;
  if ((b >> 4) == 0xE) return 3;
  if ((b >> 3) == 0x1E) return 4;
  return 1;
}

// Byte offset of every character start, plus a final entry equal to
// s.size(). Truncated or malformed sequences are split per byte, so the
// result is always a strictly increasing cover of [0, s.size()].
inline std::vector<std::size_t> char_offsets(std::string_view s) {
  std::vector<std::size_t> offsets;
  offsets.reserve(s.size() + 1);
  std::size_t i = 0;
  while (i < s.size()) {
    offsets.push_back(i);
    std::size_t len = sequence_length(static_cast<unsigned char>(s[i]));
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    i += len;
  }
  offsets.push_back(s.size());
  return offsets;
}

inline std::size_t char_length(std::string_view s) { return char_offsets(s).size() - 1; }

// Splits into one string per character.
inline std::vector<std::string> split_chars(std::string_view s) {
  const auto offsets = char_offsets(s);
  std::vector<std::string> out;
  out.reserve(offsets.size() - 1);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
    out.emplace_back(s.substr(offsets[i], offsets[i + 1] - offsets[i]));
  return out;
}

inline char32_t decode(std::string_view ch) noexcept {
  if (ch.empty()) return 0;
  const auto b0 = static_cast<unsigned char>(ch[0]);
  const auto cont = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(ch[k]) & 0x3F); };
  switch (ch.size()) {
    case 2: return (static_cast<char32_t>(b0 & 0x1F) << 6) | cont(1);
    case 3: return (static_cast<char32_t>(b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2);
    case 4: return (static_cast<char32_t>(b0 & 0x07) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
    default: return b0;
  }
}

inline std::string encode(char32_t cp) {
  std::string out;
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
  return out;
}

// Simple one-to-one lowercase mapping for the cased blocks that show up in
// UD treebanks (Latin, Greek, Cyrillic, Armenian). Every mapping keeps the
// UTF-8 length of the character unchanged.
inline char32_t to_lower(char32_t c) noexcept {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c < 0x80) return c;
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 32;
  if (c >= 0x100 && c <= 0x17F) {
    if (c == 0x130 || c == 0x131 || c == 0x138 || c == 0x149 || c == 0x17F) return c;
    const bool odd_is_upper = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
    if (odd_is_upper) return (c % 2 == 1) ? c + 1 : c;
    if (c == 0x178) return 0xFF;
    return (c % 2 == 0) ? c + 1 : c;
  }
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x386 && c <= 0x38F) {
    switch (c) {
      case 0x386: return 0x3AC;
      case 0x388: return 0x3AD;
      case 0x389: return 0x3AE;
      case 0x38A: return 0x3AF;
      case 0x38C: return 0x3CC;
      case 0x38E: return 0x3CD;
      case 0x38F: return 0x3CE;
      default: return c;
    }
  }
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  if (c >= 0x460 && c <= 0x4FF && c != 0x482 && !(c >= 0x483 && c <= 0x489) && c != 0x4C0) {
    if (c >= 0x4C1 && c <= 0x4CE) return (c % 2 == 1) ? c + 1 : c;
    return (c % 2 == 0) ? c + 1 : c;
  }
  if (c >= 0x531 && c <= 0x556) return c + 48;
  return c;
}

inline std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  const auto offsets = char_offsets(s);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    const auto ch = s.substr(offsets[i], offsets[i + 1] - offsets[i]);
    if (ch.size() == 1 && static_cast<unsigned char>(ch[0]) >= 0x80) {
      out += ch;  // malformed byte, pass through
      continue;
    }
    const char32_t lowered = to_lower(decode(ch));
    std::string enc = encode(lowered);
    if (enc.size() != ch.size()) enc = std::string(ch);
    out += enc;
  }
  return out;
}

// GPT-2 byte-to-unicode table: printable bytes map to themselves, the rest
// are shifted into U+0100.. so every byte has a visible, non-space symbol.
inline const std::array<std::string, 256>& gpt2_byte_symbols() {
  static const std::array<std::string, 256> table = [] {
    std::array<std::string, 256> t;
    int shifted = 0;
    for (int b = 0; b < 256; ++b) {
      const bool printable = (b >= 0x21 && b <= 0x7E) || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
      const char32_t cp = printable ? static_cast<char32_t>(b) : static_cast<char32_t>(256 + shifted++);
      t[static_cast<std::size_t>(b)] = encode(cp);
    }
    return t;
  }();
  return table;
}

// Maps a GPT-2 remapped token string back to raw bytes. Returns false if
// the string contains a symbol outside the table.
inline bool gpt2_decode(std::string_view token, std::string& raw) {
  static const auto reverse = [] {
    std::array<int, 512> r{};
    r.fill(-1);
    const auto& t = gpt2_byte_symbols();
    for (int b = 0; b < 256; ++b) r[static_cast<std::size_t>(decode(t[static_cast<std::size_t>(b)]))] = b;
    return r;
  }();
  raw.clear();
  for (const auto& ch : split_chars(token)) {
    const char32_t cp = decode(ch);
    if (cp >= reverse.size() || reverse[cp] < 0) return false;
    raw.push_back(static_cast<char>(reverse[cp]));
  }
  return true;
}

}  // namespace morphalign::utf8
