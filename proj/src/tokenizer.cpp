#include "genuda/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "genuda/error.hpp"

namespace genuda {

namespace {

bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

bool is_special_spelling(const std::string& w) {
  return std::any_of(std::begin(kSpecialSpelling), std::end(kSpecialSpelling),
                     [&](std::string_view s) { return s == w; });
}

std::vector<std::string> split_and_peel(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    size_t end = cur.size();
    while (end > 0 && is_trailing_punct(cur[end - 1])) --end;
    if (end > 0) out.push_back(cur.substr(0, end));
    for (size_t i = end; i < cur.size(); ++i) out.emplace_back(1, cur[i]);
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

TokenSeq encode_words(const std::vector<std::string>& words, const Vocab& vocab, size_t max_seq_len, bool markers) {
  TokenSeq out;
  out.reserve(std::min(words.size(), max_seq_len));
  for (const auto& w : words) {
    if (out.size() >= max_seq_len) break;
    if (markers && w == kBlankMarker) {
      out.push_back(kBlank);
    } else if (markers && w == kSepMarker) {
      out.push_back(kSep);
    } else if (markers && w == kEosMarker) {
      out.push_back(kEos);
    } else {
      out.push_back(vocab.id(w));
    }
  }
  return out;
}

}  // namespace

std::string escape_word(const std::string& word) { return is_special_spelling(word) ? "\\" + word : word; }

std::string escape_surface_word(const std::string& word) {
  auto parts = split_and_peel(word);
  if (!parts.empty() && is_special_spelling(parts.front())) return "\\" + word;
  return word;
}

std::vector<std::string> normalize_words(std::string_view text) {
  auto words = split_and_peel(text);
  for (auto& w : words) w = escape_word(w);
  return words;
}

std::vector<std::string> normalize_template_words(std::string_view text) { return split_and_peel(text); }

Vocab::Vocab() {
  for (auto s : kSpecialSpelling) {
    id_to_token_.emplace_back(s);
  }
}

void Vocab::add(const std::string& token) {
  if (token_to_id_.count(token) || is_special_spelling(token)) return;
  token_to_id_[token] = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& t : id_to_token_) out += t + "\n";
  return out;
}

Vocab Vocab::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Vocab v;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno < kNumSpecials) {
      if (line != kSpecialSpelling[lineno]) {
        fail(ErrorCode::kParse, "vocab line " + std::to_string(lineno + 1) + ": expected special `" +
                                    std::string(kSpecialSpelling[lineno]) + "`");
      }
    } else {
      if (line.empty() || v.token_to_id_.count(line) || is_special_spelling(line)) {
        fail(ErrorCode::kParse, "vocab line " + std::to_string(lineno + 1) + ": empty or duplicate token");
      }
      v.add(line);
    }
    ++lineno;
  }
  if (lineno < kNumSpecials) fail(ErrorCode::kParse, "vocab: truncated specials header");
  return v;
}

void Vocab::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }
Vocab Vocab::load(const std::filesystem::path& path) { return parse(read_file(path)); }

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpora, size_t max_vocab, size_t min_count,
                  const std::vector<std::string>& required) {
  if (corpora.empty()) fail(ErrorCode::kConfig, "build_vocab: no corpora");
  if (max_vocab < 16) fail(ErrorCode::kConfig, "build_vocab: max_vocab must be >= 16");
  std::map<std::string, size_t> counts;
  for (const auto& corpus : corpora) {
    for (const auto& text : corpus) {
      for (const auto& w : normalize_words(text)) ++counts[w];
    }
  }
  Vocab v;
  for (const auto& text : required) {
    for (const auto& w : normalize_template_words(text)) v.add(w);
  }
  std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });  // map order = lexicographic
  for (const auto& [word, count] : ranked) {
    if (static_cast<size_t>(v.size()) >= max_vocab) break;
    if (count < min_count) break;
    v.add(word);
  }
  return v;
}

Vocab build_vocab(const std::vector<Corpus>& corpora, size_t max_vocab, size_t min_count,
                  const std::vector<std::string>& required) {
  std::vector<std::vector<std::string>> texts;
  for (const auto& c : corpora) texts.push_back(c.texts());
  return build_vocab(texts, max_vocab, min_count, required);
}

TokenSeq encode(std::string_view text, const Vocab& vocab, size_t max_seq_len) {
  return encode_words(normalize_words(text), vocab, max_seq_len, false);
}

TokenSeq encode_template(std::string_view text, const Vocab& vocab, size_t max_seq_len) {
  return encode_words(normalize_template_words(text), vocab, max_seq_len, true);
}

std::string decode(const TokenSeq& seq, const Vocab& vocab) {
  std::string out;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (i) out += " ";
    out += vocab.token(seq[i]);
  }
  return out;
}

}  // namespace genuda
