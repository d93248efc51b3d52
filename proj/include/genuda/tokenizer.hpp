#pragma once

// Word-level tokenizer: lowercasing, trailing-punctuation splitting, fixed special ids.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genuda/corpus.hpp"

namespace genuda {

enum SpecialToken : int { kPad = 0, kUnk = 1, kEos = 2, kSep = 3, kBlank = 4 };
inline constexpr int kNumSpecials = 5;

// Surface spellings of the specials. "_" and "<sep>" are also the template markers.
inline constexpr std::string_view kSpecialSpelling[kNumSpecials] = {"<pad>", "<unk>", "<eos>", "<sep>", "_"};
inline constexpr std::string_view kBlankMarker = "_";
inline constexpr std::string_view kSepMarker = "<sep>";
inline constexpr std::string_view kEosMarker = "<eos>";

using TokenSeq = std::vector<int>;

// Lowercase, split on whitespace, then peel trailing {. , ! ? ; :} into standalone tokens.
// Raw words that collide with a special spelling are escaped with a leading backslash.
std::vector<std::string> normalize_words(std::string_view text);
// As above, but bare "_", "<sep>" and "<eos>" are kept verbatim (template text).
std::vector<std::string> normalize_template_words(std::string_view text);

std::string escape_word(const std::string& word);
// Escapes a raw whitespace-delimited word whose normalized stem is a special spelling, so
// that it survives template-side encoding as an ordinary token.
std::string escape_surface_word(const std::string& word);

class Vocab {
 public:
  Vocab();

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
  const std::string& token(int id) const { return id_to_token_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::string serialize() const;
  static Vocab parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& o) const { return id_to_token_ == o.id_to_token_; }

 private:
  friend Vocab build_vocab(const std::vector<std::vector<std::string>>&, size_t, size_t,
                           const std::vector<std::string>&);
  void add(const std::string& token);

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Most frequent words first (ties lexicographic), up to max_vocab entries including the
// specials; words seen fewer than min_count times stay out (and encode to UNK).
// `required` texts (template instructions, verbalizations) are admitted regardless.
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpora, size_t max_vocab, size_t min_count,
                  const std::vector<std::string>& required = {});
Vocab build_vocab(const std::vector<Corpus>& corpora, size_t max_vocab, size_t min_count,
                  const std::vector<std::string>& required = {});

TokenSeq encode(std::string_view text, const Vocab& vocab, size_t max_seq_len);
// Template-side encoding: bare "_" maps to BLANK, "<sep>" to SEP, "<eos>" to EOS.
TokenSeq encode_template(std::string_view text, const Vocab& vocab, size_t max_seq_len);
std::string decode(const TokenSeq& seq, const Vocab& vocab);

}  // namespace genuda
