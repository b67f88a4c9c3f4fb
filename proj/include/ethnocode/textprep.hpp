#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ethnocode/corpus.hpp"
#include "ethnocode/csv.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/porter.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

enum class Pos { NOUN, VERB, ADJ, ADV, PRON, DET, OTHER, UNK };
enum class Entity { PERSON, ORG, GPE, LOC, EVENT, FAC, NONE };

constexpr std::string_view to_string(Pos p) {
  constexpr std::string_view names[] = {"NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "OTHER", "UNK"};
  return names[static_cast<int>(p)];
}

constexpr std::string_view to_string(Entity e) {
  constexpr std::string_view names[] = {"PERSON", "ORG", "GPE", "LOC", "EVENT", "FAC", "NONE"};
  return names[static_cast<int>(e)];
}

inline std::optional<Pos> parse_pos(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Pos::UNK); ++i)
    if (to_string(static_cast<Pos>(i)) == s) return static_cast<Pos>(i);
  return std::nullopt;
}

inline std::optional<Entity> parse_entity(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Entity::NONE); ++i)
    if (to_string(static_cast<Entity>(i)) == s) return static_cast<Entity>(i);
  if (s == "O") return Entity::NONE;
  return std::nullopt;
}

struct Token {
  std::string surface;
  std::string stem;
  std::size_t position = 0;
  std::size_t sentence = 0;
  Pos pos = Pos::UNK;
  Entity entity = Entity::NONE;

  bool operator==(const Token&) const = default;
};

struct TokenizedUnit {
  UnitKey key;
  std::vector<Token> tokens;
};

using TokenizedCorpus = std::vector<TokenizedUnit>;

// ---------------------------------------------------------------- segmentation

namespace detail {

inline bool in_range(char32_t cp, char32_t lo, char32_t hi) { return cp >= lo && cp <= hi; }

/// Word characters: letters, digits and underscore. Non-ASCII code points
/// count as letters unless they fall in a punctuation, symbol, mark or
/// emoji block.
inline bool is_word_char(char32_t cp) {
  if (cp < 0x80)
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9') || cp == '_';
  if (cp <= 0xBF) {
    switch (cp) {
      case 0xAA: case 0xB2: case 0xB3: case 0xB5: case 0xB9: case 0xBA: case 0xBC: case 0xBD: case 0xBE:
        return true;
      default:
        return false;
    }
  }
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (in_range(cp, 0x2C2, 0x2C5) || in_range(cp, 0x2D2, 0x2DF) || in_range(cp, 0x300, 0x36F)) return false;
  if (in_range(cp, 0x2000, 0x206F) || in_range(cp, 0x20A0, 0x20CF) || in_range(cp, 0x2190, 0x2BFF)) return false;
  if (in_range(cp, 0x2E00, 0x2E7F) || in_range(cp, 0x3000, 0x3004) || in_range(cp, 0x3008, 0x3020)) return false;
  if (cp == 0x3030 || in_range(cp, 0xFE00, 0xFE0F) || in_range(cp, 0xFE30, 0xFE6F)) return false;
  if (in_range(cp, 0xFF01, 0xFF0F) || in_range(cp, 0xFF1A, 0xFF20) || in_range(cp, 0xFF3B, 0xFF40) ||
      in_range(cp, 0xFF5B, 0xFF65))
    return false;
  if (in_range(cp, 0x1F000, 0x1FAFF) || cp >= 0xE0000) return false;
  return true;
}

inline bool is_ascii_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

inline bool is_joiner(char32_t cp) { return cp == '-' || cp == '\'' || cp == 0x2019; }

inline bool is_sentence_end(char32_t cp) { return cp == '.' || cp == '?' || cp == '!'; }

inline char32_t fold_case(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0x80) return cp;
  if (in_range(cp, 0xC0, 0xDE) && cp != 0xD7) return cp + 0x20;
  if ((in_range(cp, 0x100, 0x137) || in_range(cp, 0x14A, 0x177)) && cp % 2 == 0) return cp + 1;
  if ((in_range(cp, 0x139, 0x148) || in_range(cp, 0x179, 0x17E)) && cp % 2 == 1) return cp + 1;
  if (cp == 0x178) return 0xFF;
  if (in_range(cp, 0x391, 0x3A9) && cp != 0x3A2) return cp + 0x20;
  if (in_range(cp, 0x410, 0x42F)) return cp + 0x20;
  if (in_range(cp, 0x400, 0x40F)) return cp + 0x50;
  if (cp == 0x2019) return '\'';
  return cp;
}

}  // namespace detail

/// Case folding used for stems: ASCII, Latin-1, Latin Extended-A, Greek
/// and Cyrillic upper case map to lower case; a curly apostrophe becomes '.
inline std::string fold_case(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t start = i;
    auto cp = util::next_code_point(s, i);
    if (!cp) {
      out.append(s.substr(start, i - start));
      continue;
    }
    util::append_utf8(out, detail::fold_case(*cp));
  }
  return out;
}

/// Porter stemming iterated to a fixpoint, so stem(stem(w)) == stem(w).
/// Words with non-letters (digits, hyphens, non-ASCII) are only folded.
inline std::string stem(std::string_view word) {
  std::string w = fold_case(word);
  for (int round = 0; round < 8; ++round) {
    std::string next = porter_stem(w);
    if (next == w) break;
    w = std::move(next);
  }
  return w;
}

inline std::vector<Token> tokenize(std::string_view text) {
  struct Cp {
    char32_t cp;
    std::size_t begin, end;
  };
  std::vector<Cp> cps;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t b = i;
    auto cp = util::next_code_point(text, i);
    cps.push_back({cp.value_or(0xFFFD), b, i});
  }

  std::vector<Token> tokens;
  std::size_t sentence = 0;
  bool sentence_has_tokens = false;
  std::size_t k = 0;
  while (k < cps.size()) {
    if (!detail::is_word_char(cps[k].cp)) {
      if (detail::is_sentence_end(cps[k].cp) && sentence_has_tokens) {
        ++sentence;
        sentence_has_tokens = false;
      }
      ++k;
      continue;
    }
    const std::size_t start = k;
    while (k < cps.size()) {
      if (detail::is_word_char(cps[k].cp)) {
        ++k;
        continue;
      }
      const bool next_is_word = k + 1 < cps.size() && detail::is_word_char(cps[k + 1].cp);
      if (next_is_word && detail::is_joiner(cps[k].cp)) {
        k += 2;
        continue;
      }
      if (next_is_word && cps[k].cp == '.' && detail::is_ascii_digit(cps[k - 1].cp) &&
          detail::is_ascii_digit(cps[k + 1].cp)) {
        k += 2;
        continue;
      }
      break;
    }
    Token t;
    t.surface = std::string(text.substr(cps[start].begin, cps[k - 1].end - cps[start].begin));
    t.stem = stem(t.surface);
    t.position = tokens.size();
    t.sentence = sentence;
    tokens.push_back(std::move(t));
    sentence_has_tokens = true;
  }
  return tokens;
}

inline TokenizedCorpus tokenize_corpus(const Corpus& corpus) {
  TokenizedCorpus out;
  out.reserve(corpus.size());
  for (const auto& u : corpus.units()) out.push_back({u.key(), tokenize(u.text)});
  return out;
}

// ---------------------------------------------------------------- stop words

enum class StopwordSource { builtin, custom, merged };

inline const std::vector<std::string_view>& builtin_stopword_entries() {
  static const std::vector<std::string_view> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've", "you'll", "you'd",
      "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "she's", "her", "hers",
      "herself", "it", "it's", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
      "who", "whom", "this", "that", "that'll", "these", "those", "am", "is", "are", "was", "were", "be", "been",
      "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if",
      "or", "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against", "between",
      "into", "through", "during", "before", "after", "above", "below", "to", "from", "up", "down", "in", "out",
      "on", "off", "over", "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
      "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
      "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don", "don't",
      "should", "should've", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn",
      "couldn't", "didn", "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't",
      "isn", "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
      "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn", "wouldn't"};
  return words;
}

class StopwordList {
 public:
  StopwordList() = default;

  static StopwordList builtin() {
    StopwordList l;
    for (auto w : builtin_stopword_entries()) l.words_.emplace(w);
    l.source_ = StopwordSource::builtin;
    return l;
  }

  /// One word per line; blank lines and `#` comments are skipped.
  static StopwordList parse(std::string_view text) {
    StopwordList l;
    l.source_ = StopwordSource::custom;
    for (const auto& line : util::split(util::normalize_newlines(text), "\n")) {
      auto w = util::trim(line);
      if (w.empty() || w.front() == '#') continue;
      if (util::split_ws(w).size() != 1)
        throw Error(ErrorKind::FormatError, "stop word entry \"" + std::string(w) + "\" contains whitespace");
      l.words_.insert(fold_case(w));
    }
    return l;
  }

  static StopwordList load(const std::filesystem::path& path) { return parse(util::read_file(path)); }

  StopwordList merged_with(const StopwordList& other) const {
    StopwordList l = *this;
    l.words_.insert(other.words_.begin(), other.words_.end());
    l.source_ = StopwordSource::merged;
    return l;
  }

  bool contains(const std::string& w) const { return words_.count(w) > 0; }
  const std::set<std::string>& words() const { return words_; }
  StopwordSource source() const { return source_; }
  std::size_t size() const { return words_.size(); }

 private:
  std::set<std::string> words_;
  StopwordSource source_ = StopwordSource::custom;
};

/// Drops tokens whose case-folded surface or stem is listed. Survivors keep
/// their positions.
inline std::vector<Token> remove_stopwords(const std::vector<Token>& tokens, const StopwordList& list) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens)
    if (!list.contains(t.stem) && !list.contains(fold_case(t.surface))) out.push_back(t);
  return out;
}

inline TokenizedCorpus remove_stopwords(TokenizedCorpus corpus, const StopwordList& list) {
  for (auto& u : corpus) u.tokens = remove_stopwords(u.tokens, list);
  return corpus;
}

// ---------------------------------------------------------------- phrases

/// Adjacent pairs (consecutive positions in one sentence) whose count is at
/// least `min_count` and whose add-one-smoothed pointwise mutual information
/// log((c_ab + 1) N / ((c_a + 1)(c_b + 1))) reaches `pmi_threshold`.
/// Phrases are named by their case-folded words joined with '_'.
inline std::set<std::string> detect_phrases(const TokenizedCorpus& corpus, std::size_t min_count,
                                            double pmi_threshold) {
  if (min_count < 1) throw Error(ErrorKind::InvalidArgument, "min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> unigram;
  std::map<std::pair<std::string, std::string>, std::size_t> bigram;
  std::size_t total = 0;
  for (const auto& u : corpus) {
    std::vector<std::string> folded;
    folded.reserve(u.tokens.size());
    for (const auto& t : u.tokens) {
      folded.push_back(fold_case(t.surface));
      ++unigram[folded.back()];
      ++total;
    }
    for (std::size_t i = 1; i < u.tokens.size(); ++i) {
      const auto& a = u.tokens[i - 1];
      const auto& b = u.tokens[i];
      if (b.position == a.position + 1 && a.sentence == b.sentence) ++bigram[{folded[i - 1], folded[i]}];
    }
  }
  std::set<std::string> phrases;
  for (const auto& [pair, count] : bigram) {
    if (count < min_count) continue;
    const double ca = static_cast<double>(unigram[pair.first]);
    const double cb = static_cast<double>(unigram[pair.second]);
    const double pmi = std::log((static_cast<double>(count) + 1.0) * static_cast<double>(total) / ((ca + 1.0) * (cb + 1.0)));
    if (pmi >= pmi_threshold) phrases.insert(pair.first + "_" + pair.second);
  }
  return phrases;
}

/// Merges detected phrases left to right into single tokens carrying the
/// first word's position.
inline std::vector<Token> apply_phrases(const std::vector<Token>& tokens, const std::set<std::string>& phrases) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (i + 1 < tokens.size() && tokens[i + 1].position == tokens[i].position + 1 &&
        tokens[i + 1].sentence == tokens[i].sentence) {
      const std::string name = fold_case(tokens[i].surface) + "_" + fold_case(tokens[i + 1].surface);
      if (phrases.count(name)) {
        Token merged = tokens[i];
        merged.surface = tokens[i].surface + "_" + tokens[i + 1].surface;
        merged.stem = name;
        out.push_back(std::move(merged));
        i += 2;
        continue;
      }
    }
    out.push_back(tokens[i]);
    ++i;
  }
  return out;
}

inline TokenizedCorpus apply_phrases(TokenizedCorpus corpus, const std::set<std::string>& phrases) {
  for (auto& u : corpus) u.tokens = apply_phrases(u.tokens, phrases);
  return corpus;
}

// ---------------------------------------------------------------- annotation

namespace detail {

inline const std::unordered_map<std::string, Pos>& closed_class_lexicon() {
  static const std::unordered_map<std::string, Pos> lexicon = [] {
    std::unordered_map<std::string, Pos> m;
    auto add = [&m](Pos p, std::initializer_list<const char*> words) {
      for (auto w : words) m.emplace(w, p);
    };
    add(Pos::DET, {"the", "a", "an", "this", "that", "these", "those", "each", "every", "either", "neither",
                   "some", "any", "no", "another", "all", "both", "half", "several", "many", "much", "few",
                   "such", "which", "whose"});
    add(Pos::PRON, {"i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "yourselves", "he",
                    "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us",
                    "our", "ours", "ourselves", "they", "them", "their", "theirs", "themselves", "who", "whom",
                    "what", "someone", "somebody", "something", "anyone", "anybody", "anything", "everyone",
                    "everybody", "everything", "nobody", "nothing", "i'm", "you're", "it's", "he's", "she's",
                    "we're", "they're", "i've", "i'd", "i'll"});
    add(Pos::VERB, {"am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having",
                    "do", "does", "did", "doing", "will", "would", "shall", "should", "can", "could", "may",
                    "might", "must", "ought", "don't", "doesn't", "didn't", "can't", "won't", "isn't", "aren't",
                    "wasn't", "weren't", "couldn't", "wouldn't", "shouldn't", "haven't", "hasn't", "hadn't"});
    add(Pos::ADV, {"not", "never", "always", "often", "sometimes", "very", "too", "also", "just", "only", "now",
                   "then", "here", "there", "when", "where", "why", "how", "again", "already", "still", "soon",
                   "perhaps", "maybe", "quite", "rather", "almost", "ever", "even", "really", "so", "once"});
    add(Pos::OTHER, {"and", "but", "or", "nor", "for", "yet", "because", "although", "though", "while", "if",
                     "unless", "until", "since", "as", "than", "whether", "of", "at", "by", "with", "about",
                     "against", "between", "into", "through", "during", "before", "after", "above", "below",
                     "to", "from", "up", "down", "in", "out", "on", "off", "over", "under", "upon", "within",
                     "without", "across", "along", "around", "among", "toward", "towards", "behind", "beyond",
                     "near", "oh", "yes", "yeah", "um", "uh", "okay", "ok", "well"});
    return m;
  }();
  return lexicon;
}

inline bool ends_with(std::string_view w, std::string_view s) {
  return w.size() > s.size() + 1 && w.substr(w.size() - s.size()) == s;
}

}  // namespace detail

/// Closed-class words from a fixed table; open-class words by suffix, with
/// capitalized words inside a sentence taken as proper nouns.
inline Pos builtin_pos(const Token& t, bool sentence_initial) {
  const std::string folded = fold_case(t.surface);
  const auto& lex = detail::closed_class_lexicon();
  if (auto it = lex.find(folded); it != lex.end()) return it->second;
  bool has_letter = false;
  for (char c : folded)
    if (!(c >= '0' && c <= '9') && c != '.' && c != '-' && c != '_') has_letter = true;
  if (!has_letter) return Pos::OTHER;
  if (!sentence_initial && !t.surface.empty() && t.surface[0] >= 'A' && t.surface[0] <= 'Z') return Pos::NOUN;
  using detail::ends_with;
  if (ends_with(folded, "ly")) return Pos::ADV;
  if (ends_with(folded, "ing") || ends_with(folded, "ed") || ends_with(folded, "ize") || ends_with(folded, "ise") ||
      ends_with(folded, "ify"))
    return Pos::VERB;
  for (auto s : {"ous", "ful", "ive", "able", "ible", "less", "ish", "ical", "ic", "al", "ary"})
    if (ends_with(folded, s)) return Pos::ADJ;
  return Pos::NOUN;
}

/// Where part-of-speech and entity labels come from: the builtin lexicon,
/// optionally overridden by a sidecar CSV (doc,reference,position,pos,entity)
/// produced by any external tagger.
struct AnnotationSource {
  std::optional<std::filesystem::path> sidecar;

  static AnnotationSource builtin_lexicon() { return {}; }
  static AnnotationSource from_sidecar(std::filesystem::path p) { return {std::move(p)}; }
};

inline TokenizedCorpus annotate_builtin(TokenizedCorpus corpus) {
  for (auto& u : corpus) {
    std::optional<std::size_t> last_sentence;
    for (auto& t : u.tokens) {
      const bool initial = !last_sentence || *last_sentence != t.sentence;
      t.pos = builtin_pos(t, initial);
      t.entity = Entity::NONE;
      last_sentence = t.sentence;
    }
  }
  return corpus;
}

inline TokenizedCorpus apply_sidecar(TokenizedCorpus corpus, const Table& sidecar) {
  const std::size_t c_doc = sidecar.require_column("doc");
  const std::size_t c_ref = sidecar.require_column("reference");
  const std::size_t c_pos = sidecar.require_column("position");
  const auto c_tag = sidecar.column("pos");
  const auto c_ent = sidecar.column("entity");

  std::map<UnitKey, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index[corpus[i].key] = i;

  for (std::size_t r = 0; r < sidecar.rows.size(); ++r) {
    const auto& row = sidecar.rows[r];
    const std::string where = "sidecar row " + std::to_string(r + 2);
    auto ref = util::parse_int(row[c_ref]);
    auto position = util::parse_int(row[c_pos]);
    if (!ref || !position || *ref < 0 || *position < 0)
      throw Error(ErrorKind::AlignmentError, where + ": reference/position must be non-negative integers");
    UnitKey key{row[c_doc], static_cast<std::size_t>(*ref)};
    auto it = index.find(key);
    if (it == index.end()) throw Error(ErrorKind::AlignmentError, where + ": no unit " + key.to_string());
    auto& tokens = corpus[it->second].tokens;
    auto tok = std::find_if(tokens.begin(), tokens.end(),
                            [&](const Token& t) { return t.position == static_cast<std::size_t>(*position); });
    if (tok == tokens.end())
      throw Error(ErrorKind::AlignmentError,
                  where + ": unit " + key.to_string() + " has no token at position " + row[c_pos]);
    if (c_tag && !row[*c_tag].empty()) {
      auto p = parse_pos(row[*c_tag]);
      if (!p) throw Error(ErrorKind::FormatError, where + ": unknown pos \"" + row[*c_tag] + "\"");
      tok->pos = *p;
    }
    if (c_ent && !row[*c_ent].empty()) {
      auto e = parse_entity(row[*c_ent]);
      if (!e) throw Error(ErrorKind::FormatError, where + ": unknown entity \"" + row[*c_ent] + "\"");
      tok->entity = *e;
    }
  }
  return corpus;
}

/// Every token gets a pos and an entity label. Token count and surfaces
/// are never changed.
inline TokenizedCorpus annotate(TokenizedCorpus corpus, const AnnotationSource& source) {
  corpus = annotate_builtin(std::move(corpus));
  if (source.sidecar) corpus = apply_sidecar(std::move(corpus), csv::read_table_file(*source.sidecar));
  return corpus;
}

}  // namespace ethnocode
