#pragma once

// Deterministic token counting and boundary-preserving segmentation.
//
// The default rule, applied to valid UTF-8:
//   - ASCII whitespace (space, \t, \n, \v, \f, \r) delimits and is never
//     part of a token.
//   - A token is a maximal run of ASCII alphanumerics, or a single
//     non-whitespace, non-alphanumeric codepoint (multi-byte codepoints
//     count as one token each).
//
// Splits place the cut immediately after the last byte of the interval-th
// token, so whitespace between tokens travels with the following segment
// and concatenating the segments reproduces the input byte-for-byte.
//
// Alternate counters can be registered by name for callers that want
// model-accurate counts; everything in this library uses the default rule
// so results are reproducible without external vocabulary data.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "ric/errors.hpp"

namespace ric {

using TokenCount = std::uint64_t;

struct Segment {
  std::string text;
  TokenCount start_token = 0;  // cumulative tokens before this segment
  TokenCount token_len = 0;
};

namespace detail {

inline bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

inline bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
}

// Validated UTF-8 decode of the codepoint starting at `pos`.
// Returns the encoded length, or 0 if the sequence is a *truncated prefix*
// of a valid sequence (more bytes could complete it). Malformed bytes throw.
inline std::size_t decode_utf8(std::string_view text, std::size_t pos, char32_t& cp) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  std::size_t n = text.size();
  unsigned char b0 = s[pos];
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  std::size_t len;
  char32_t min_cp;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
    min_cp = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
    min_cp = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
    min_cp = 0x10000;
  } else {
    throw EncodingError("invalid UTF-8 lead byte at offset " + std::to_string(pos));
  }
  if (pos + len > n) {
    // Check the bytes we do have are plausible continuations.
    for (std::size_t i = pos + 1; i < n; ++i) {
      if ((s[i] & 0xC0) != 0x80)
        throw EncodingError("invalid UTF-8 continuation at offset " + std::to_string(i));
    }
    return 0;  // truncated; caller decides whether that is an error
  }
  for (std::size_t i = 1; i < len; ++i) {
    if ((s[pos + i] & 0xC0) != 0x80)
      throw EncodingError("invalid UTF-8 continuation at offset " + std::to_string(pos + i));
    cp = (cp << 6) | (s[pos + i] & 0x3F);
  }
  if (cp < min_cp) throw EncodingError("overlong UTF-8 sequence at offset " + std::to_string(pos));
  if (cp >= 0xD800 && cp <= 0xDFFF)
    throw EncodingError("UTF-8 encoded surrogate at offset " + std::to_string(pos));
  if (cp > 0x10FFFF) throw EncodingError("UTF-8 codepoint out of range at offset " + std::to_string(pos));
  return len;
}

// Incremental token-boundary scanner over a growing byte buffer.
//
// `scan(buffer)` consumes any bytes not yet examined (the buffer must only
// ever grow between calls). It tracks how many tokens have *started* and,
// once token `split_after + 1` starts, records the byte offset just past
// the end of token `split_after` — the point where the interval-th token
// is provably complete.
class TokenScanner {
 public:
  explicit TokenScanner(TokenCount split_after = 0) : split_after_(split_after) {}

  void scan(std::string_view buffer, bool final_input) {
    while (pos_ < buffer.size()) {
      if (split_found_) return;  // the caller cuts here; the rest is rescanned
      char32_t cp = 0;
      std::size_t len = decode_utf8(buffer, pos_, cp);
      if (len == 0) {
        if (final_input) throw EncodingError("truncated UTF-8 sequence at end of input");
        return;  // wait for more bytes
      }
      if (len == 1 && is_space_byte(static_cast<unsigned char>(cp))) {
        in_word_ = false;
      } else if (len == 1 && is_word_byte(static_cast<unsigned char>(cp))) {
        if (!in_word_) start_token();
        in_word_ = true;
        token_end_ = pos_ + len;
      } else {
        start_token();
        in_word_ = false;
        token_end_ = pos_ + len;
      }
      pos_ += len;
    }
  }

  TokenCount tokens_started() const { return tokens_; }
  bool split_found() const { return split_found_; }
  std::size_t split_pos() const { return split_pos_; }
  std::size_t scanned() const { return pos_; }
  // Byte offset just past the last byte of the most recent token.
  std::size_t last_token_end() const { return token_end_; }

 private:
  void start_token() {
    if (split_after_ > 0 && tokens_ == split_after_ && !split_found_) {
      split_found_ = true;
      split_pos_ = token_end_;
    }
    ++tokens_;
  }

  TokenCount split_after_;
  std::size_t pos_ = 0;
  std::size_t token_end_ = 0;
  bool in_word_ = false;
  TokenCount tokens_ = 0;
  bool split_found_ = false;
  std::size_t split_pos_ = 0;
};

}  // namespace detail

// Token count of `text` under the default rule. Throws EncodingError on
// invalid UTF-8.
inline TokenCount count_tokens(std::string_view text) {
  detail::TokenScanner scanner;
  scanner.scan(text, /*final_input=*/true);
  return scanner.tokens_started();
}

// Splits `text` into segments of exactly `interval` tokens (the final
// segment carries the remainder, 1..interval tokens). Concatenating the
// segment texts in order reproduces `text` exactly. Empty input yields an
// empty list; input containing no tokens at all (only whitespace) yields a
// single zero-token segment so no bytes are lost.
inline std::vector<Segment> split_at_intervals(std::string_view text, TokenCount interval) {
  if (interval == 0) throw PolicyError("split interval must be >= 1");
  std::vector<Segment> out;
  if (text.empty()) return out;

  TokenCount consumed = 0;
  std::string_view rest = text;
  for (;;) {
    detail::TokenScanner scanner(interval);
    scanner.scan(rest, /*final_input=*/true);
    if (!scanner.split_found()) {
      out.push_back(Segment{std::string(rest), consumed, scanner.tokens_started()});
      return out;
    }
    out.push_back(Segment{std::string(rest.substr(0, scanner.split_pos())), consumed, interval});
    consumed += interval;
    rest = rest.substr(scanner.split_pos());
  }
}

using TokenCounter = std::function<TokenCount(std::string_view)>;

namespace detail {

inline std::map<std::string, TokenCounter>& counter_registry() {
  static std::map<std::string, TokenCounter> registry{
      {"default", [](std::string_view t) { return count_tokens(t); }}};
  return registry;
}

inline std::mutex& counter_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

// Registers (or replaces) a named counter.
inline void register_counter(const std::string& name, TokenCounter fn) {
  if (!fn) throw PolicyError("token counter '" + name + "' is empty");
  std::lock_guard<std::mutex> lock(detail::counter_mutex());
  detail::counter_registry()[name] = std::move(fn);
}

// Looks up a counter by name; "default" is always present.
inline TokenCounter counter(const std::string& name) {
  std::lock_guard<std::mutex> lock(detail::counter_mutex());
  auto& reg = detail::counter_registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw PolicyError("unknown token counter '" + name + "'");
  return it->second;
}

}  // namespace ric
